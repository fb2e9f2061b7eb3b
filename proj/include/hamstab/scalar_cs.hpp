#pragma once

#include "hamstab/dynamics.hpp"

#include <memory>
#include <string>
#include <vector>

namespace hamstab::scalar_cs {

inline constexpr double kTraceBand = 1e-9;
inline constexpr double kIdentityTol = 1e-7;

/// w'' = w^-3 - kappa w.
double scalar_envelope_rhs(double w, double w_dot, double kappa);

struct TwissState {
    double alpha = 0.0;  // -w w'
    double beta = 1.0;   // w^2
    double gamma = 1.0;  // (1 + alpha^2) / beta
    double phi = 0.0;

    static TwissState from_envelope(double w, double w_dot, double phi = 0.0);
    /// Throws InvalidArgument unless beta > 0 and beta gamma - alpha^2 = 1 to tol.
    void validate(double tol = 1e-12) const;
};

struct ScalarNode {
    double t = 0.0;
    double w = 0.0;
    double w_dot = 0.0;
};

// Fixed-step trajectory of the scalar envelope equation with cubic Hermite
// dense output and the accumulated phase at each node.
class ScalarTrajectory {
public:
    struct Step {
        dynamics::Piece piece;
        double accel0 = 0.0;  // w'' at the left node
        double accel1 = 0.0;  // w'' at the right node, left limit
    };

    const std::vector<ScalarNode>& nodes() const { return nodes_; }
    const std::vector<Step>& steps() const { return steps_; }
    /// phi at each node; phi(t_begin) = 0.
    const std::vector<double>& phases() const { return phases_; }
    double t_begin() const { return nodes_.front().t; }
    double t_end() const { return nodes_.back().t; }

    ScalarNode at(double t) const;
    double phase_at(double t) const;
    TwissState twiss_at(double t) const;
    std::size_t step_index(double t) const;

private:
    friend ScalarTrajectory integrate_scalar_envelope(const dynamics::PeriodicHamiltonian&, double, double, double,
                                                      double, int);
    friend std::vector<double> phase_integral(ScalarTrajectory&);
    ScalarNode interpolate(std::size_t k, double t) const;
    double partial_phase(std::size_t k, double t) const;

    std::shared_ptr<const dynamics::PeriodicHamiltonian> h_;
    std::vector<ScalarNode> nodes_;
    std::vector<Step> steps_;
    std::vector<double> phases_;
};

/// Requires n = 1, R = 0 and m = 1. Throws EnvelopeSingular if w reaches zero.
ScalarTrajectory integrate_scalar_envelope(const dynamics::PeriodicHamiltonian& h, double w0, double w_dot0,
                                           double t0, double t_end,
                                           int steps_per_period = dynamics::kStepsPerPeriod);

/// phi(t) = int dt / w^2 at the trajectory nodes, by Simpson's rule with a
/// Hermite midpoint; also stored on the trajectory.
std::vector<double> phase_integral(ScalarTrajectory& traj);

/// Courant-Snyder beta-form transfer matrix from twiss0 to twiss1 with phase advance phi.
Mat cs_transfer_matrix(const TwissState& twiss0, const TwissState& twiss1, double phi);

/// x^2 / w^2 + (w x' - w' x)^2.
double scalar_cs_invariant(double x, double x_dot, double w, double w_dot);

struct TraceVerdict {
    double trace = 0.0;
    bool stable = false;
    bool marginal = false;  // |trace| within the band around 2
};

/// |tr M| < 2 stable, > 2 unstable; in the marginal band stable iff M = +-I.
TraceVerdict trace_verdict(const Mat& m, double band = kTraceBand, double identity_tol = kIdentityTol);

/// kappa(t) = a + 2 q cos 2t over period pi.
dynamics::PeriodicHamiltonian mathieu_lattice(double a, double q);

/// Monodromy of x'' + (a + 2 q cos 2t) x = 0 by fixed-step RK4.
Mat mathieu_monodromy(double a, double q, int steps = dynamics::kStepsPerPeriod);

struct Range {
    double lo = 0.0;
    double hi = 0.0;
};

struct MathieuCell {
    double a = 0.0;
    double q = 0.0;
    double trace = 0.0;
    bool stable = false;
    bool marginal = false;
    std::string error;  // non-empty if the cell failed
};

struct MathieuGrid {
    std::vector<double> a_values;
    std::vector<double> q_values;
    std::vector<MathieuCell> cells;  // a-major: index ia * q_values.size() + iq

    const MathieuCell& cell(std::size_t ia, std::size_t iq) const { return cells[ia * q_values.size() + iq]; }
};

/// Resolution x resolution grid of trace verdicts including the range endpoints.
MathieuGrid mathieu_scan(Range a, Range q, int resolution, unsigned workers = 0,
                         int steps = dynamics::kStepsPerPeriod);

}  // namespace hamstab::scalar_cs
