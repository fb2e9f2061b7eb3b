#pragma once

#include "hamstab/dynamics.hpp"

#include <optional>
#include <string>
#include <vector>

namespace hamstab::config {

enum class SegmentKind { constant, harmonic };

// One lattice element. Constant: kappa, r, mass_inv. Harmonic:
// kappa(t) = a + 2 q cos(frequency t) with t measured from the period start;
// r defaults to 0 and mass_inv to the identity.
struct SegmentConfig {
    SegmentKind kind = SegmentKind::constant;
    double duration = 0.0;
    Mat kappa;
    Mat r;
    Mat mass_inv;
    Mat a;
    Mat q;
    double frequency = 0.0;
};

struct LatticeConfig {
    std::string name;
    int n = 1;
    double period = 0.0;
    std::vector<SegmentConfig> elements;
    std::optional<double> integ_tol;
    std::optional<double> match_tol;
};

/// Parses the lattice text format. Errors are ConfigError carrying the line
/// number and field name.
LatticeConfig parse_lattice(const std::string& text);
LatticeConfig load_lattice(const std::string& path);

/// Checks dimensions, symmetry of kappa, m^-1, a and q, invertibility of m^-1,
/// and that durations sum to the period within 1e-12 relative.
void validate(const LatticeConfig& cfg);

/// Canonical text form: fixed key order, shortest round-trip numbers.
std::string format_lattice(const LatticeConfig& cfg);
void save_lattice(const LatticeConfig& cfg, const std::string& path);

dynamics::PeriodicHamiltonian to_hamiltonian(const LatticeConfig& cfg);

/// Sets a scalar field addressed as `period`, `segment.<i>.duration`,
/// `segment.<i>.frequency` or `segment.<i>.<matrix>[.<row>.<col>]`.
/// Symmetric matrices are mirrored; changing a duration updates the period and
/// changing the period rescales all durations.
void set_parameter(LatticeConfig& cfg, const std::string& path, double value);

/// Reads the matrix text format: first line n, then 2n rows of 2n numbers.
Mat parse_matrix(const std::string& text);
Mat load_matrix(const std::string& path);
/// Canonical matrix text (inverse of parse_matrix).
std::string format_matrix_file(const Mat& m);

/// Shortest decimal text that parses back to the same double.
std::string format_number(double x);

/// 64-bit FNV-1a digest as 16 hex digits.
std::string fnv1a_hex(const std::string& data);

}  // namespace hamstab::config
