#pragma once

#include "hamstab/symplectic_core.hpp"

#include <vector>

namespace hamstab::decomp {

inline constexpr double kReconstructionTol = 1e-9;

// M = [[X, Y], [-Y, X]] * [[L, 0], [Q, L^-1]] with L symmetric positive-definite.
struct HorizontalPolarParts {
    Mat x;
    Mat y;
    Mat l;
    Mat q;

    int n() const { return static_cast<int>(l.rows()); }
    Mat rotation() const;    // [[X, Y], [-Y, X]]
    Mat stabilizer() const;  // [[L, 0], [Q, L^-1]]
    Mat reassemble() const { return rotation() * stabilizer(); }
};

/// Unique horizontal polar decomposition of a symplectic matrix from its
/// blocks: L = (B^T B + D^T D)^{-1/2}, X = D L, Y = B L, Q = L (B^T A + D^T C).
/// Throws IllConditioned when B^T B + D^T D is numerically singular.
HorizontalPolarParts horizontal_polar(const Mat& m, double symp_tol = symplectic::kSympTol);

/// Element c of O(n) acting as g = diag(c, c).
struct GaugeElement {
    Mat c;
    explicit GaugeElement(Mat c_, double tol = symplectic::kSympTol);
    Mat block() const;
};

// A pre-Iwasawa pair M = u * s, u orthosymplectic, s in the stabilizer of the
// vertical Lagrangian plane (s = [[L', 0], [Q', L'^{-T}]]).
struct PreIwasawaPair {
    Mat rotation;
    Mat stabilizer;
    Mat product() const { return rotation * stabilizer; }
};

/// u' = u g^-1, s' = g s.
PreIwasawaPair apply_gauge(const HorizontalPolarParts& parts, const GaugeElement& g);

/// Fixes the O(n) gauge of any pre-Iwasawa pair by polar-decomposing its
/// L-block, recovering the horizontal polar parts.
HorizontalPolarParts refix_gauge(const PreIwasawaPair& pair);

struct NormalFormResult {
    Mat conjugator_f;                    // symplectic F with M = F N F^-1
    std::vector<double> angles;          // theta_j in [0, 2pi), ascending
    std::vector<symplectic::KreinType> cluster_types;  // Krein type of e^{i theta_j}'s cluster in M
    double reconstruction_residual = 0;  // ||F N F^-1 - M||_F / ||M||_F
    double symplectic_residual = 0;      // ||F^T J F - J||_F

    Mat normal_form() const { return symplectic::rotation_normal_form(angles); }
    Mat reconstruct() const;
};

// Eigenvector pair (psi_l, psi_{-l} = conj(psi_l)) of M with M psi_l = lambda_l psi_l,
// <psi_l, psi_l>_G = 1.
struct GBasisPair {
    CVec psi;
    CVec psi_conj;
    cplx lambda;
};

struct NormalFormOptions {
    double stability_tol = symplectic::kStabilityTol;
    symplectic::ClusterOptions clusters{};
    double krein_degeneracy_tol = 1e-11;
};

/// G-orthonormal eigenbasis of a stable symplectic matrix, sorted by the
/// argument of lambda_l in [0, 2pi). Throws Unstable or KreinDegenerate.
std::vector<GBasisPair> g_orthonormal_eigenbasis(const Mat& m, const NormalFormOptions& opts = {});

/// M = F (R(theta_1) ⋄ ... ⋄ R(theta_n)) F^-1 with F symplectic, the
/// positive-Krein eigenvalue of each mode equal to e^{+i theta}.
NormalFormResult stable_normal_form(const Mat& m, const NormalFormOptions& opts = {});

/// Krein type (p, q) of a unit-circle eigenvalue lambda of m.
symplectic::KreinType krein_type(const Mat& m, cplx lambda, const NormalFormOptions& opts = {});

/// Symmetric positive-definite square root and its inverse via the symmetric eigensolver.
Mat spd_sqrt(const Mat& a);
Mat spd_inverse_sqrt(const Mat& a);

}  // namespace hamstab::decomp
