#pragma once

#include "hamstab/symplectic_core.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace hamstab::dynamics {

inline constexpr double kIntegTol = 1e-9;
inline constexpr double kCoeffTol = 1e-12;
inline constexpr int kStepsPerPeriod = 4096;

// Coefficient blocks of A = [[kappa, R], [R^T, m^-1]].
struct Coefficients {
    Mat kappa;
    Mat r;
    Mat mass_inv;
};

using CoefficientFn = std::function<Coefficients(double)>;

// One piece of a period. Constant segments are propagated with an exact matrix
// exponential; smooth ones with fixed-step RK4. A smooth segment is evaluated
// at the time measured from the start of the period.
struct Segment {
    double duration = 0.0;
    std::optional<Coefficients> constant;
    CoefficientFn evaluate;

    bool is_constant() const { return constant.has_value(); }
    Coefficients at(double period_time) const { return constant ? *constant : evaluate(period_time); }

    static Segment make_constant(double duration, Coefficients c);
    static Segment make_smooth(double duration, CoefficientFn f);
    /// kappa(t) = a + 2 q cos(frequency t), constant R and m^-1.
    static Segment make_harmonic(double duration, Mat a, Mat q, double frequency, Mat r, Mat mass_inv);
};

// A maximal time interval [t0, t1] inside one segment.
struct Piece {
    double t0 = 0.0;
    double t1 = 0.0;
    const Segment* segment = nullptr;
    double period_start = 0.0;  // absolute time of the enclosing period's start

    Coefficients at(double t) const { return segment->at(t - period_start); }
    /// Number of fixed steps of at most max_step covering the piece.
    int steps(double max_step) const;
};

class PeriodicHamiltonian {
public:
    /// Validates symmetry of kappa and m^-1, invertibility of m, and periodicity
    /// at sampled times. The period is the sum of segment durations.
    PeriodicHamiltonian(int n, std::vector<Segment> segments, double coeff_tol = kCoeffTol);

    static PeriodicHamiltonian constant(int n, double period, Coefficients c);
    static PeriodicHamiltonian smooth(int n, double period, CoefficientFn f);

    int n() const { return n_; }
    double period() const { return period_; }
    bool piecewise_constant() const;
    const std::vector<Segment>& segments() const { return segments_; }

    /// Right-continuous coefficients at absolute time t.
    Coefficients coefficients(double t) const;

    /// [t0, t1] split at segment boundaries and at any of the given checkpoints.
    std::vector<Piece> pieces(double t0, double t1, const std::vector<double>& checkpoints = {}) const;

private:
    int n_;
    double period_;
    std::vector<Segment> segments_;
    std::vector<double> starts_;
};

/// A(t) = [[kappa, R], [R^T, m^-1]].
Mat a_matrix(const PeriodicHamiltonian& h, double t);
Mat a_matrix(const Coefficients& c);

struct IntegratorOptions {
    int steps_per_period = kStepsPerPeriod;
    bool richardson = true;  // step-halving error estimate for smooth segments
    double integ_tol = kIntegTol;
};

struct TransferMap {
    Mat matrix;
    double t_start = 0.0;
    double t_end = 0.0;
    std::string method;  // "expm", "rk4" or "expm+rk4"
    long steps = 0;      // RK4 steps taken (0 for pure expm)
    double error_estimate = 0.0;
    double symplectic_residual = 0.0;
};

/// Solution of dM/dt = J A(t) M, M(t0) = I. Throws IntegrationError when the
/// symplecticity residual exceeds 100 integ_tol (1 + ||M||_F^2).
TransferMap transfer_map(const PeriodicHamiltonian& h, double t0, double t1,
                         const IntegratorOptions& opts = {});

TransferMap monodromy(const PeriodicHamiltonian& h, const IntegratorOptions& opts = {});

/// z(t) = M(0, t) z0.
Vec propagate(const PeriodicHamiltonian& h, const Vec& z0, double t, const IntegratorOptions& opts = {});

/// H = z^T A z / 2 at time t.
double energy(const PeriodicHamiltonian& h, const Vec& z, double t);

}  // namespace hamstab::dynamics
