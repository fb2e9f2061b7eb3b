#include "hamstab/scalar_cs.hpp"

#include "hamstab/errors.hpp"
#include "hamstab/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace hamstab::scalar_cs {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void require_scalar(const dynamics::Coefficients& c, double t) {
    if (c.kappa.rows() != 1) throw InvalidDimension("scalar envelope requires n = 1");
    if (c.r(0, 0) != 0.0 || c.mass_inv(0, 0) != 1.0) {
        std::ostringstream os;
        os << "scalar envelope requires R = 0 and m = 1 (at t = " << t << ")";
        throw InvalidArgument(os.str());
    }
}

}  // namespace

double scalar_envelope_rhs(double w, double /*w_dot*/, double kappa) {
    if (w == 0.0 || !std::isfinite(w)) throw EnvelopeSingular("scalar envelope w = 0", kNaN, kNaN);
    return 1.0 / (w * w * w) - kappa * w;
}

TwissState TwissState::from_envelope(double w, double w_dot, double phi) {
    if (w == 0.0) throw EnvelopeSingular("scalar envelope w = 0", kNaN, kNaN);
    TwissState s;
    s.alpha = -w * w_dot;
    s.beta = w * w;
    s.gamma = (1.0 + s.alpha * s.alpha) / s.beta;
    s.phi = phi;
    return s;
}

void TwissState::validate(double tol) const {
    if (!(beta > 0.0)) throw InvalidArgument("Twiss beta must be positive");
    const double det = beta * gamma - alpha * alpha;
    if (std::abs(det - 1.0) > tol * std::max(1.0, beta * gamma)) {
        std::ostringstream os;
        os << "Twiss parameters violate beta gamma - alpha^2 = 1 (got " << det << ")";
        throw InvalidArgument(os.str());
    }
}

std::size_t ScalarTrajectory::step_index(double t) const {
    if (steps_.empty() || t < t_begin() || t > t_end()) {
        std::ostringstream os;
        os << "scalar trajectory does not cover t = " << t;
        throw InvalidArgument(os.str());
    }
    auto it = std::lower_bound(nodes_.begin() + 1, nodes_.end(), t,
                               [](const ScalarNode& s, double v) { return s.t < v; });
    return std::min<std::size_t>(static_cast<std::size_t>(it - nodes_.begin()) - 1, steps_.size() - 1);
}

ScalarNode ScalarTrajectory::interpolate(std::size_t k, double t) const {
    const auto& a = nodes_[k];
    const auto& b = nodes_[k + 1];
    const double h = b.t - a.t;
    const double x = (t - a.t) / h;
    if (x == 0.0) return {t, a.w, a.w_dot};
    if (x == 1.0) return {t, b.w, b.w_dot};
    const double x2 = x * x;
    const double x3 = x2 * x;
    const double h00 = 2 * x3 - 3 * x2 + 1;
    const double h10 = x3 - 2 * x2 + x;
    const double h01 = -2 * x3 + 3 * x2;
    const double h11 = x3 - x2;
    return {t, h00 * a.w + h10 * h * a.w_dot + h01 * b.w + h11 * h * b.w_dot,
            h00 * a.w_dot + h10 * h * steps_[k].accel0 + h01 * b.w_dot + h11 * h * steps_[k].accel1};
}

double ScalarTrajectory::partial_phase(std::size_t k, double t) const {
    const double h = t - nodes_[k].t;
    if (h == 0.0) return 0.0;
    const double w0 = nodes_[k].w;
    const double wm = interpolate(k, nodes_[k].t + 0.5 * h).w;
    const double w1 = interpolate(k, t).w;
    if (!(w0 > 0.0 && wm > 0.0 && w1 > 0.0)) {
        throw EnvelopeSingular("phase integral requires w > 0", nodes_[k].t, t);
    }
    return h / 6.0 * (1.0 / (w0 * w0) + 4.0 / (wm * wm) + 1.0 / (w1 * w1));
}

ScalarNode ScalarTrajectory::at(double t) const {
    if (steps_.empty() && t == t_begin()) return nodes_.front();
    return interpolate(step_index(t), t);
}

double ScalarTrajectory::phase_at(double t) const {
    if (phases_.size() != nodes_.size()) throw InvalidArgument("phase_at: phases not integrated");
    if (steps_.empty() && t == t_begin()) return 0.0;
    const auto k = step_index(t);
    return phases_[k] + partial_phase(k, t);
}

TwissState ScalarTrajectory::twiss_at(double t) const {
    const auto s = at(t);
    return TwissState::from_envelope(s.w, s.w_dot, phase_at(t));
}

ScalarTrajectory integrate_scalar_envelope(const dynamics::PeriodicHamiltonian& h, double w0, double w_dot0,
                                           double t0, double t_end, int steps_per_period) {
    if (h.n() != 1) throw InvalidDimension("integrate_scalar_envelope requires n = 1");
    if (!(t_end >= t0)) throw InvalidArgument("integrate_scalar_envelope: t_end precedes t0");
    if (w0 == 0.0) throw EnvelopeSingular("scalar envelope w0 = 0", t0, t0);
    ScalarTrajectory traj;
    traj.h_ = std::make_shared<const dynamics::PeriodicHamiltonian>(h);
    traj.nodes_.push_back({t0, w0, w_dot0});
    const double max_step = h.period() / steps_per_period;
    for (const auto& p : traj.h_->pieces(t0, t_end)) {
        require_scalar(p.at(p.t0), p.t0);
        const int steps = p.steps(max_step);
        const double dt = (p.t1 - p.t0) / steps;
        auto kappa = [&](double t) { return p.at(t).kappa(0, 0); };
        for (int k = 0; k < steps; ++k) {
            const auto s = traj.nodes_.back();
            const double t = p.t0 + k * dt;
            const double t_next = (k + 1 == steps) ? p.t1 : p.t0 + (k + 1) * dt;
            const double km = kappa(t + 0.5 * dt);
            const double k1 = kappa(t);
            const double k2 = kappa(t_next);
            try {
                const double a1 = scalar_envelope_rhs(s.w, s.w_dot, k1);
                const double w2 = s.w + 0.5 * dt * s.w_dot, v2 = s.w_dot + 0.5 * dt * a1;
                const double a2 = scalar_envelope_rhs(w2, v2, km);
                const double w3 = s.w + 0.5 * dt * v2, v3 = s.w_dot + 0.5 * dt * a2;
                const double a3 = scalar_envelope_rhs(w3, v3, km);
                const double w4 = s.w + dt * v3, v4 = s.w_dot + dt * a3;
                const double a4 = scalar_envelope_rhs(w4, v4, k2);
                ScalarNode next{t_next, s.w + dt / 6.0 * (s.w_dot + 2.0 * v2 + 2.0 * v3 + v4),
                                s.w_dot + dt / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)};
                traj.steps_.push_back({p, a1, scalar_envelope_rhs(next.w, next.w_dot, k2)});
                traj.nodes_.push_back(next);
            } catch (const EnvelopeSingular&) {
                std::ostringstream os;
                os << "scalar envelope reached w = 0 between t = " << t << " and t = " << t_next;
                throw EnvelopeSingular(os.str(), t, t_next);
            }
        }
    }
    phase_integral(traj);
    return traj;
}

std::vector<double> phase_integral(ScalarTrajectory& traj) {
    std::vector<double> phi(traj.nodes_.size(), 0.0);
    for (std::size_t k = 0; k < traj.steps_.size(); ++k) {
        phi[k + 1] = phi[k] + traj.partial_phase(k, traj.nodes_[k + 1].t);
    }
    traj.phases_ = phi;
    return phi;
}

Mat cs_transfer_matrix(const TwissState& t0, const TwissState& t1, double phi) {
    t0.validate(1e-9);
    t1.validate(1e-9);
    const double c = std::cos(phi);
    const double s = std::sin(phi);
    const double bb = std::sqrt(t1.beta * t0.beta);
    Mat m(2, 2);
    m << std::sqrt(t1.beta / t0.beta) * (c + t0.alpha * s), bb * s,
        -(1.0 + t1.alpha * t0.alpha) / bb * s + (t0.alpha - t1.alpha) / bb * c,
        std::sqrt(t0.beta / t1.beta) * (c - t1.alpha * s);
    return m;
}

double scalar_cs_invariant(double x, double x_dot, double w, double w_dot) {
    if (w == 0.0) throw EnvelopeSingular("scalar invariant requires w != 0", kNaN, kNaN);
    const double u = w * x_dot - w_dot * x;
    return x * x / (w * w) + u * u;
}

TraceVerdict trace_verdict(const Mat& m, double band, double identity_tol) {
    if (m.rows() != 2 || m.cols() != 2) throw InvalidDimension("trace_verdict requires a 2x2 matrix");
    TraceVerdict v;
    v.trace = m.trace();
    const double a = std::abs(v.trace);
    if (!std::isfinite(a)) return v;
    if (a < 2.0 - band) {
        v.stable = true;
    } else if (a <= 2.0 + band) {
        v.marginal = true;
        const double sign = v.trace > 0 ? 1.0 : -1.0;
        v.stable = (m - sign * Mat::Identity(2, 2)).norm() <= identity_tol;
    }
    return v;
}

dynamics::PeriodicHamiltonian mathieu_lattice(double a, double q) {
    const Mat one = Mat::Identity(1, 1);
    return dynamics::PeriodicHamiltonian(
        1, {dynamics::Segment::make_harmonic(std::numbers::pi, a * one, q * one, 2.0, Mat::Zero(1, 1), one)});
}

Mat mathieu_monodromy(double a, double q, int steps) {
    if (steps < 1) throw InvalidArgument("mathieu_monodromy: steps must be >= 1");
    const double h = std::numbers::pi / steps;
    // Columns (x, x') of the two fundamental solutions.
    double x1 = 1, v1 = 0, x2 = 0, v2 = 1;
    auto kappa = [&](double t) { return a + 2.0 * q * std::cos(2.0 * t); };
    double k_left = kappa(0.0);
    for (int i = 0; i < steps; ++i) {
        const double t = i * h;
        const double km = kappa(t + 0.5 * h);
        const double kr = kappa(t + h);
        auto stage = [&](double& x, double& v) {
            const double ax1 = v, av1 = -k_left * x;
            const double ax2 = v + 0.5 * h * av1, av2 = -km * (x + 0.5 * h * ax1);
            const double ax3 = v + 0.5 * h * av2, av3 = -km * (x + 0.5 * h * ax2);
            const double ax4 = v + h * av3, av4 = -kr * (x + h * ax3);
            x += h / 6.0 * (ax1 + 2 * ax2 + 2 * ax3 + ax4);
            v += h / 6.0 * (av1 + 2 * av2 + 2 * av3 + av4);
        };
        stage(x1, v1);
        stage(x2, v2);
        k_left = kr;
    }
    Mat m(2, 2);
    m << x1, x2, v1, v2;
    return m;
}

MathieuGrid mathieu_scan(Range a, Range q, int resolution, unsigned workers, int steps) {
    if (resolution < 2) throw InvalidArgument("mathieu_scan: resolution must be >= 2");
    if (!std::isfinite(a.lo) || !std::isfinite(a.hi) || !std::isfinite(q.lo) || !std::isfinite(q.hi)) {
        throw InvalidArgument("mathieu_scan: ranges must be finite");
    }
    MathieuGrid g;
    for (int i = 0; i < resolution; ++i) {
        const double f = static_cast<double>(i) / (resolution - 1);
        g.a_values.push_back(a.lo + f * (a.hi - a.lo));
        g.q_values.push_back(q.lo + f * (q.hi - q.lo));
    }
    g.cells.resize(static_cast<std::size_t>(resolution) * resolution);
    parallel_for(g.cells.size(), workers, [&](std::size_t idx) {
        auto& c = g.cells[idx];
        c.a = g.a_values[idx / resolution];
        c.q = g.q_values[idx % resolution];
        try {
            const auto v = trace_verdict(mathieu_monodromy(c.a, c.q, steps));
            c.trace = v.trace;
            c.stable = v.stable;
            c.marginal = v.marginal;
        } catch (const std::exception& e) {
            c.error = e.what();
        }
    });
    return g;
}

}  // namespace hamstab::scalar_cs
