#include "hamstab/envelope.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace hamstab::envelope {

using dynamics::Coefficients;
using dynamics::PeriodicHamiltonian;

namespace {

Mat checked_inverse(const Mat& w, double t) {
    Eigen::PartialPivLU<Mat> lu(w);
    const double rc = lu.rcond();
    if (!(rc > 1.0 / kSingularCond) || !w.allFinite()) {
        std::ostringstream os;
        os << "envelope matrix w is singular at t = " << t << " (reciprocal condition " << rc << ")";
        throw EnvelopeSingular(os.str(), t, t);
    }
    return lu.inverse();
}

EnvelopeSlope slope_with_inverse(const EnvelopeState& s, const Coefficients& c, const Mat& winv) {
    const Mat winv_t = winv.transpose();
    return {s.v * c.mass_inv + s.w * c.r,
            -s.v * c.r.transpose() - s.w * c.kappa + winv_t * c.mass_inv * winv * winv_t};
}

EnvelopeState advance(const EnvelopeState& s, const EnvelopeSlope& k, double h) {
    return {s.w + h * k.w_dot, s.v + h * k.v_dot, s.t + h};
}

CMat polar_unitary(const CMat& u) {
    Eigen::JacobiSVD<CMat> svd(u, Eigen::ComputeThinU | Eigen::ComputeThinV);
    return svd.matrixU() * svd.matrixV().adjoint();
}

double unitarity_drift(const CMat& u) {
    return (u.adjoint() * u - CMat::Identity(u.rows(), u.cols())).norm();
}

}  // namespace

EnvelopeState make_state(const Coefficients& c, const Mat& w, const Mat& w_dot, double t) {
    if (w.rows() != c.kappa.rows() || w.cols() != w.rows() || w_dot.rows() != w.rows() ||
        w_dot.cols() != w.cols()) {
        throw InvalidDimension("make_state: w and w_dot must be n x n");
    }
    const Mat m = c.mass_inv.inverse();
    return {w, (w_dot - w * c.r) * m, t};
}

EnvelopeState make_state(const PeriodicHamiltonian& h, const Mat& w, const Mat& w_dot, double t) {
    return make_state(h.coefficients(t), w, w_dot, t);
}

Mat w_dot(const EnvelopeState& s, const Coefficients& c) { return s.v * c.mass_inv + s.w * c.r; }

Mat w_dot(const EnvelopeState& s, const PeriodicHamiltonian& h) { return w_dot(s, h.coefficients(s.t)); }

Mat mu_of(const EnvelopeState& s, const Coefficients& c) {
    const Mat winv = checked_inverse(s.w, s.t);
    Mat mu = winv.transpose() * c.mass_inv * winv;
    return 0.5 * (mu + mu.transpose());
}

Mat mu_of(const EnvelopeState& s, const PeriodicHamiltonian& h) { return mu_of(s, h.coefficients(s.t)); }

EnvelopeSlope envelope_rhs(const EnvelopeState& s, const Coefficients& c) {
    return slope_with_inverse(s, c, checked_inverse(s.w, s.t));
}

EnvelopeSlope envelope_rhs(const EnvelopeState& s, const PeriodicHamiltonian& h) {
    return envelope_rhs(s, h.coefficients(s.t));
}

Mat s_factor(const EnvelopeState& s) {
    const auto n = s.w.rows();
    Mat out(2 * n, 2 * n);
    out << checked_inverse(s.w, s.t).transpose(), Mat::Zero(n, n), -s.v, s.w;
    return out;
}

Mat s_inverse(const EnvelopeState& s) {
    const auto n = s.w.rows();
    const Mat winv = checked_inverse(s.w, s.t);
    Mat out(2 * n, 2 * n);
    out << s.w.transpose(), Mat::Zero(n, n), winv * s.v * s.w.transpose(), winv;
    return out;
}

TwissBlocks twiss_blocks(const EnvelopeState& s) {
    const Mat winv = checked_inverse(s.w, s.t);
    return {-s.w.transpose() * s.v, s.w.transpose() * s.w, s.v.transpose() * s.v + winv * winv.transpose()};
}

std::size_t EnvelopeTrajectory::step_index(double t) const {
    if (steps_.empty() || t < t_begin() || t > t_end()) {
        std::ostringstream os;
        os << "envelope trajectory covers [" << (nodes_.empty() ? 0.0 : t_begin()) << ", "
           << (nodes_.empty() ? 0.0 : t_end()) << "], requested t = " << t;
        throw InvalidArgument(os.str());
    }
    auto it = std::lower_bound(nodes_.begin() + 1, nodes_.end(), t,
                               [](const EnvelopeState& s, double v) { return s.t < v; });
    return std::min<std::size_t>(static_cast<std::size_t>(it - nodes_.begin()) - 1, steps_.size() - 1);
}

EnvelopeState EnvelopeTrajectory::interpolate(std::size_t k, double t) const {
    const auto& a = nodes_[k];
    const auto& b = nodes_[k + 1];
    const auto& st = steps_[k];
    const double h = b.t - a.t;
    const double x = (t - a.t) / h;
    if (x == 0.0) return {a.w, a.v, t};
    if (x == 1.0) return {b.w, b.v, t};
    const double x2 = x * x;
    const double x3 = x2 * x;
    const double h00 = 2 * x3 - 3 * x2 + 1;
    const double h10 = x3 - 2 * x2 + x;
    const double h01 = -2 * x3 + 3 * x2;
    const double h11 = x3 - x2;
    return {h00 * a.w + h10 * h * st.slope0.w_dot + h01 * b.w + h11 * h * st.slope1.w_dot,
            h00 * a.v + h10 * h * st.slope0.v_dot + h01 * b.v + h11 * h * st.slope1.v_dot, t};
}

EnvelopeState EnvelopeTrajectory::at(double t) const {
    if (steps_.empty() && !nodes_.empty() && t == t_begin()) return nodes_.front();
    return interpolate(step_index(t), t);
}

EnvelopeTrajectory integrate_envelope(const EnvelopeState& initial, const PeriodicHamiltonian& h, double t_end,
                                      const EnvelopeOptions& opts) {
    const int n = h.n();
    if (initial.w.rows() != n || initial.w.cols() != n || initial.v.rows() != n || initial.v.cols() != n) {
        throw InvalidDimension("integrate_envelope: initial state must be n x n");
    }
    if (!(t_end >= initial.t)) throw InvalidArgument("integrate_envelope: t_end precedes the initial time");
    if (opts.steps_per_period < 1) throw InvalidArgument("integrate_envelope: steps_per_period must be >= 1");
    checked_inverse(initial.w, initial.t);

    EnvelopeTrajectory traj;
    traj.h_ = std::make_shared<const PeriodicHamiltonian>(h);
    traj.nodes_.push_back(initial);
    const double max_step = h.period() / opts.steps_per_period;
    const Mat j = symplectic::standard_form(n);
    auto symp_residual = [&](const EnvelopeState& s) {
        const Mat sf = s_factor(s);
        return (sf * j * sf.transpose() - j).norm();
    };
    traj.max_symp_residual_ = symp_residual(initial);

    for (const auto& p : traj.h_->pieces(initial.t, t_end, opts.checkpoints)) {
        const int steps = p.steps(max_step);
        const double dt = (p.t1 - p.t0) / steps;
        const Coefficients* fixed = p.segment->is_constant() ? &*p.segment->constant : nullptr;
        auto coeffs = [&](double t) { return fixed ? *fixed : p.at(t); };
        for (int k = 0; k < steps; ++k) {
            const EnvelopeState s = traj.nodes_.back();
            const double t = p.t0 + k * dt;
            const double t_next = (k + 1 == steps) ? p.t1 : p.t0 + (k + 1) * dt;
            EnvelopeTrajectory::Step st;
            st.piece = p;
            try {
                const Coefficients c0 = coeffs(t);
                const Coefficients cm = coeffs(t + 0.5 * dt);
                const Coefficients c1 = coeffs(t_next);
                st.slope0 = envelope_rhs(s, c0);
                const EnvelopeSlope k2 = envelope_rhs(advance(s, st.slope0, 0.5 * dt), cm);
                const EnvelopeSlope k3 = envelope_rhs(advance(s, k2, 0.5 * dt), cm);
                const EnvelopeSlope k4 = envelope_rhs(advance(s, k3, dt), c1);
                EnvelopeState next{s.w + (dt / 6.0) * (st.slope0.w_dot + 2.0 * k2.w_dot + 2.0 * k3.w_dot + k4.w_dot),
                                   s.v + (dt / 6.0) * (st.slope0.v_dot + 2.0 * k2.v_dot + 2.0 * k3.v_dot + k4.v_dot),
                                   t_next};
                st.slope1 = envelope_rhs(next, c1);
                traj.max_symp_residual_ = std::max(traj.max_symp_residual_, symp_residual(next));
                traj.nodes_.push_back(std::move(next));
            } catch (const EnvelopeSingular&) {
                std::ostringstream os;
                os << "envelope matrix w lost invertibility between t = " << t << " and t = " << t_next;
                throw EnvelopeSingular(os.str(), t, t_next);
            }
            traj.steps_.push_back(std::move(st));
        }
    }
    return traj;
}

std::vector<PhaseAdvance> phase_track(const EnvelopeTrajectory& env, const std::vector<double>& times,
                                      const EnvelopeOptions& opts) {
    const int n = env.n();
    const auto& steps = env.steps();
    const auto& nodes = env.nodes();
    const double limit = 100.0 * opts.integ_tol;
    const cplx i(0.0, 1.0);

    auto mu_at = [&](std::size_t k, double t) {
        return mu_of(env.interpolate(k, t), steps[k].piece.at(t)).cast<cplx>().eval();
    };
    auto step = [&](const CMat& u, std::size_t k, double ta, double tb) {
        const double h = tb - ta;
        const CMat m0 = mu_at(k, ta);
        const CMat mm = mu_at(k, ta + 0.5 * h);
        const CMat m1 = mu_at(k, tb);
        const CMat k1 = i * u * m0;
        const CMat k2 = i * (u + 0.5 * h * k1) * mm;
        const CMat k3 = i * (u + 0.5 * h * k2) * mm;
        const CMat k4 = i * (u + h * k3) * m1;
        return CMat(u + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
    };

    std::vector<PhaseAdvance> out;
    CMat u = CMat::Identity(n, n);
    double drift = 0.0;
    long taken = 0;
    std::size_t k = 0;
    double last = env.t_begin();
    for (double t : times) {
        if (t < last) throw InvalidArgument("phase_track: times must be ascending");
        if (t > env.t_end() || t < env.t_begin()) {
            std::ostringstream os;
            os << "phase_track: t = " << t << " outside the envelope trajectory [" << env.t_begin() << ", "
               << env.t_end() << "]";
            throw InvalidArgument(os.str());
        }
        last = t;
        while (k < steps.size() && nodes[k + 1].t <= t) {
            u = step(u, k, nodes[k].t, nodes[k + 1].t);
            ++k;
            if (++taken % kReunitarizeEvery == 0) {
                const double d = unitarity_drift(u);
                drift = std::max(drift, d);
                if (d > limit) {
                    std::ostringstream os;
                    os << "phase advance lost unitarity near t = " << nodes[k].t << " (drift " << d << ")";
                    throw IntegrationError(os.str());
                }
                u = polar_unitary(u);
            }
        }
        CMat ut = u;
        if (k < steps.size() && t > nodes[k].t) ut = step(u, k, nodes[k].t, t);
        const double d = unitarity_drift(ut);
        drift = std::max(drift, d);
        if (d > limit) {
            std::ostringstream os;
            os << "phase advance lost unitarity at t = " << t << " (drift " << d << ")";
            throw IntegrationError(os.str());
        }
        out.push_back({symplectic::SymplecticRotation::from_unitary(ut), t, drift});
    }
    return out;
}

PhaseAdvance phase_advance(const EnvelopeTrajectory& env, double t, const EnvelopeOptions& opts) {
    return phase_track(env, {t}, opts).front();
}

dynamics::TransferMap solution_map_from_envelope(const EnvelopeTrajectory& env, const PhaseAdvance& phase) {
    const EnvelopeState s = env.at(phase.t);
    dynamics::TransferMap tm;
    tm.t_start = env.t_begin();
    tm.t_end = phase.t;
    tm.method = "envelope";
    tm.steps = static_cast<long>(env.step_index(phase.t) + 1);
    tm.matrix = s_inverse(s) * phase.matrix().transpose() * s_factor(env.nodes().front());
    const Mat j = symplectic::standard_form(env.n());
    tm.symplectic_residual = (tm.matrix * j * tm.matrix.transpose() - j).norm();
    return tm;
}

double cs_invariant(const Vec& z, const EnvelopeState& s) {
    if (z.size() != 2 * s.w.rows()) throw InvalidDimension("cs_invariant: z has wrong length");
    return (s_factor(s) * z).squaredNorm();
}

double general_invariant(const Vec& z, const Mat& xi, const EnvelopeState& s, const PhaseAdvance& phase) {
    if (z.size() != 2 * s.w.rows() || xi.rows() != z.size() || xi.cols() != z.size()) {
        throw InvalidDimension("general_invariant: dimension mismatch");
    }
    if ((xi - xi.transpose()).norm() > 1e-12 * std::max(1.0, xi.norm()) ||
        Eigen::LLT<Mat>(xi).info() != Eigen::Success) {
        throw InvalidArgument("general_invariant: xi must be symmetric positive-definite");
    }
    const Vec y = phase.matrix() * (s_factor(s) * z);
    return y.dot(xi * y);
}

double MatchedSolution::power_bound(double tol) const {
    const Eigen::JacobiSVD<Mat> svd(s_factor(initial));
    const auto& sv = svd.singularValues();
    const double cond = sv(0) / sv(sv.size() - 1);
    return cond * cond * std::sqrt(2.0 * initial.w.rows()) * (1.0 + tol);
}

EnvelopeState matched_initial_state(const decomp::NormalFormResult& nf) {
    const Mat f_inv = symplectic::symplectic_inverse(nf.conjugator_f);
    const auto parts = decomp::horizontal_polar(f_inv, 1e-8);
    const Mat w0 = parts.l.inverse();
    return {0.5 * (w0 + w0.transpose()), -parts.q, 0.0};
}

MatchedSolution matched_envelope(const PeriodicHamiltonian& h, const MatchOptions& opts) {
    MatchedSolution out;
    out.monodromy = dynamics::monodromy(h, opts.integrator);
    out.report = symplectic::stability_verdict(out.monodromy.matrix, opts.stability_tol);
    if (!out.report.stable) {
        for (const auto& c : out.report.clusters) {
            if (!c.semi_simple) {
                throw UnstableLattice("lattice is unstable: " + out.report.diagnostic,
                                      InstabilityKind::non_semi_simple, c.value, out.report);
            }
            if (!c.on_circle) {
                throw UnstableLattice("lattice is unstable: " + out.report.diagnostic, InstabilityKind::off_circle,
                                      c.value, out.report);
            }
        }
    }
    decomp::NormalFormOptions nf_opts;
    nf_opts.stability_tol = opts.stability_tol;
    out.normal_form = decomp::stable_normal_form(out.monodromy.matrix, nf_opts);

    out.initial = matched_initial_state(out.normal_form);
    const Coefficients c0 = h.coefficients(0.0);
    out.w_dot0 = w_dot(out.initial, c0);
    out.s0_symplectic_residual = symplectic::is_symplectic(s_factor(out.initial)).residual;

    EnvelopeOptions env_opts;
    env_opts.steps_per_period = opts.integrator.steps_per_period;
    env_opts.integ_tol = opts.integrator.integ_tol;
    out.trajectory = integrate_envelope(out.initial, h, h.period(), env_opts);
    const Mat& w_end = out.trajectory.nodes().back().w;
    const Mat mod0 = decomp::spd_sqrt(out.initial.w.transpose() * out.initial.w);
    const Mat mod1 = decomp::spd_sqrt(w_end.transpose() * w_end);
    out.residual = (mod1 - mod0).norm();
    out.accepted = out.residual <= opts.match_tol;
    return out;
}

}  // namespace hamstab::envelope
