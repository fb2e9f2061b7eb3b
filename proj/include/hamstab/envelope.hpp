#pragma once

#include "hamstab/decompositions.hpp"
#include "hamstab/dynamics.hpp"
#include "hamstab/errors.hpp"

#include <memory>
#include <vector>

namespace hamstab::envelope {

inline constexpr double kMatchTol = 1e-6;
inline constexpr double kSingularCond = 1e12;
inline constexpr int kReunitarizeEvery = 64;

// Envelope w with the momentum-like companion V = (w' - w R) m. Both are
// continuous across coefficient jumps; w' is not.
struct EnvelopeState {
    Mat w;
    Mat v;
    double t = 0.0;
};

EnvelopeState make_state(const dynamics::Coefficients& c, const Mat& w, const Mat& w_dot, double t);
EnvelopeState make_state(const dynamics::PeriodicHamiltonian& h, const Mat& w, const Mat& w_dot, double t);

/// w' = V m^-1 + w R.
Mat w_dot(const EnvelopeState& s, const dynamics::Coefficients& c);
Mat w_dot(const EnvelopeState& s, const dynamics::PeriodicHamiltonian& h);

/// mu = (w m w^T)^-1. Throws EnvelopeSingular when w is singular.
Mat mu_of(const EnvelopeState& s, const dynamics::Coefficients& c);
Mat mu_of(const EnvelopeState& s, const dynamics::PeriodicHamiltonian& h);

struct EnvelopeSlope {
    Mat w_dot;
    Mat v_dot;  // -V R^T - w kappa + (w^T w m w^T)^-1
};

EnvelopeSlope envelope_rhs(const EnvelopeState& s, const dynamics::Coefficients& c);
EnvelopeSlope envelope_rhs(const EnvelopeState& s, const dynamics::PeriodicHamiltonian& h);

/// S = [[w^-T, 0], [-V, w]] and its closed-form inverse [[w^T, 0], [w^-1 V w^T, w^-1]].
Mat s_factor(const EnvelopeState& s);
Mat s_inverse(const EnvelopeState& s);

// S^T S = [[gamma, alpha^T], [alpha, beta]].
struct TwissBlocks {
    Mat alpha;  // -w^T V
    Mat beta;   // w^T w
    Mat gamma;  // V^T V + w^-1 w^-T
};

TwissBlocks twiss_blocks(const EnvelopeState& s);

struct EnvelopeOptions {
    int steps_per_period = dynamics::kStepsPerPeriod;
    double integ_tol = dynamics::kIntegTol;
    std::vector<double> checkpoints;  // extra times that become nodes
};

// Dense-output envelope trajectory. Nodes come from fixed RK4 steps; between
// nodes the state is a cubic Hermite interpolant with one-sided slopes, so
// jumps in the coefficients are honoured.
class EnvelopeTrajectory {
public:
    struct Step {
        dynamics::Piece piece;
        EnvelopeSlope slope0;  // at the left node, with this piece's coefficients
        EnvelopeSlope slope1;  // at the right node, left limit
    };

    const std::vector<EnvelopeState>& nodes() const { return nodes_; }
    const std::vector<Step>& steps() const { return steps_; }
    const dynamics::PeriodicHamiltonian& hamiltonian() const { return *h_; }
    double t_begin() const { return nodes_.front().t; }
    double t_end() const { return nodes_.back().t; }
    int n() const { return h_->n(); }

    /// Largest ||S J S^T - J||_F over the nodes.
    double max_symplectic_residual() const { return max_symp_residual_; }

    /// Index of the step containing t (the earlier one at a node).
    std::size_t step_index(double t) const;
    EnvelopeState at(double t) const;
    /// State at t inside step k.
    EnvelopeState interpolate(std::size_t k, double t) const;

private:
    friend EnvelopeTrajectory integrate_envelope(const EnvelopeState&, const dynamics::PeriodicHamiltonian&,
                                                 double, const EnvelopeOptions&);
    std::shared_ptr<const dynamics::PeriodicHamiltonian> h_;
    std::vector<EnvelopeState> nodes_;
    std::vector<Step> steps_;
    double max_symp_residual_ = 0.0;
};

/// Integrates the envelope equation from initial.t to t_end. Throws
/// EnvelopeSingular with the bracketing step when w loses invertibility.
EnvelopeTrajectory integrate_envelope(const EnvelopeState& initial, const dynamics::PeriodicHamiltonian& h,
                                      double t_end, const EnvelopeOptions& opts = {});

struct PhaseAdvance {
    symplectic::SymplecticRotation rotation;
    double t = 0.0;
    double unitarity_drift = 0.0;  // largest ||U^* U - I||_F seen before projection

    Mat matrix() const { return rotation.assemble(); }
};

/// P(t) from P' = P [[0, -mu], [mu, 0]], P(t_begin) = I, integrated as
/// U' = i U mu with U = P1 - i P2 and periodic polar re-unitarization.
PhaseAdvance phase_advance(const EnvelopeTrajectory& env, double t, const EnvelopeOptions& opts = {});

/// P at each of the given times in one sweep; times must be ascending.
std::vector<PhaseAdvance> phase_track(const EnvelopeTrajectory& env, const std::vector<double>& times,
                                      const EnvelopeOptions& opts = {});

/// M(t) = S(t)^-1 P(t)^-1 S(t_begin) with t = phase.t.
dynamics::TransferMap solution_map_from_envelope(const EnvelopeTrajectory& env, const PhaseAdvance& phase);

/// z^T S^T S z.
double cs_invariant(const Vec& z, const EnvelopeState& s);

/// z^T S^T P^T xi P S z; xi must be symmetric positive-definite.
double general_invariant(const Vec& z, const Mat& xi, const EnvelopeState& s, const PhaseAdvance& phase);

// Raised by matched_envelope when the monodromy is not stable.
class UnstableLattice : public Unstable {
public:
    UnstableLattice(const std::string& what, InstabilityKind kind, cplx eigenvalue,
                    symplectic::StabilityReport report)
        : Unstable(what, kind, eigenvalue), report_(std::move(report)) {}
    const symplectic::StabilityReport& report() const { return report_; }

private:
    symplectic::StabilityReport report_;
};

struct MatchOptions {
    dynamics::IntegratorOptions integrator{};
    double match_tol = kMatchTol;
    double stability_tol = symplectic::kStabilityTol;
};

struct MatchedSolution {
    EnvelopeState initial;
    Mat w_dot0;
    double residual = 0.0;               // ||sqrt(w^T w)(T) - sqrt(w^T w)(0)||_F
    double s0_symplectic_residual = 0.0;
    bool accepted = false;               // residual <= match_tol
    dynamics::TransferMap monodromy;
    symplectic::StabilityReport report;
    decomp::NormalFormResult normal_form;
    EnvelopeTrajectory trajectory;

    /// cond_2(S0)^2 sqrt(2n) (1 + tol), a bound on ||M(T)^l||_F for all l.
    double power_bound(double tol = symplectic::kStabilityTol) const;
};

/// Matched initial state at t = 0 from the normal form M(T) = F N F^-1: the
/// stabilizer part [[L, 0], [Q, L^-1]] of F^-1 gives w0 = L^-1, V0 = -Q.
EnvelopeState matched_initial_state(const decomp::NormalFormResult& nf);

/// Matched envelope construction from the normal form of the monodromy.
/// Throws UnstableLattice (carrying the report) or EnvelopeSingular.
MatchedSolution matched_envelope(const dynamics::PeriodicHamiltonian& h, const MatchOptions& opts = {});

}  // namespace hamstab::envelope
