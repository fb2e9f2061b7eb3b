#include "hamstab/dynamics.hpp"

#include "hamstab/errors.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace hamstab::dynamics {

namespace {

void check_coefficients(int n, const Coefficients& c, double tol, double t) {
    auto shape = [&](const Mat& m, const char* name) {
        if (m.rows() != n || m.cols() != n) {
            std::ostringstream os;
            os << name << " must be " << n << "x" << n << ", got " << m.rows() << "x" << m.cols();
            throw InvalidDimension(os.str());
        }
        if (!m.allFinite()) {
            std::ostringstream os;
            os << name << " has non-finite entries at t = " << t;
            throw InvalidArgument(os.str());
        }
    };
    shape(c.kappa, "kappa");
    shape(c.r, "R");
    shape(c.mass_inv, "m^-1");
    auto symmetric = [&](const Mat& m, const char* name) {
        const double asym = (m - m.transpose()).norm();
        if (asym > tol * std::max(1.0, m.norm())) {
            std::ostringstream os;
            os << name << " is not symmetric at t = " << t << " (||X - X^T||_F = " << asym << ")";
            throw InvalidArgument(os.str());
        }
    };
    symmetric(c.kappa, "kappa");
    symmetric(c.mass_inv, "m^-1");
    Eigen::JacobiSVD<Mat> svd(c.mass_inv);
    const auto& sv = svd.singularValues();
    if (sv(sv.size() - 1) <= 0.0 || sv(0) / sv(sv.size() - 1) > 1e12) {
        std::ostringstream os;
        os << "m^-1 is not invertible at t = " << t << " (singular values " << sv(0) << " .. "
           << sv(sv.size() - 1) << ")";
        throw InvalidArgument(os.str());
    }
}

Mat jacobian(const Coefficients& c) {
    const auto n = c.kappa.rows();
    // J A = [[R^T, m^-1], [-kappa, -R]]
    Mat ja(2 * n, 2 * n);
    ja << c.r.transpose(), c.mass_inv, -c.kappa, -c.r;
    return ja;
}

Mat rk4_piece(const Piece& p, const Mat& m0, int steps) {
    const double h = (p.t1 - p.t0) / steps;
    Mat m = m0;
    for (int k = 0; k < steps; ++k) {
        const double t = p.t0 + k * h;
        const Mat ja0 = jacobian(p.at(t));
        const Mat jam = jacobian(p.at(t + 0.5 * h));
        const Mat ja1 = jacobian(p.at(t + h));
        const Mat k1 = ja0 * m;
        const Mat k2 = jam * (m + 0.5 * h * k1);
        const Mat k3 = jam * (m + 0.5 * h * k2);
        const Mat k4 = ja1 * (m + h * k3);
        m += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return m;
}

}  // namespace

Segment Segment::make_constant(double duration, Coefficients c) {
    Segment s;
    s.duration = duration;
    s.constant = std::move(c);
    return s;
}

Segment Segment::make_smooth(double duration, CoefficientFn f) {
    Segment s;
    s.duration = duration;
    s.evaluate = std::move(f);
    return s;
}

Segment Segment::make_harmonic(double duration, Mat a, Mat q, double frequency, Mat r, Mat mass_inv) {
    return make_smooth(duration, [a = std::move(a), q = std::move(q), frequency, r = std::move(r),
                                  mass_inv = std::move(mass_inv)](double t) {
        return Coefficients{a + 2.0 * std::cos(frequency * t) * q, r, mass_inv};
    });
}

int Piece::steps(double max_step) const {
    const double len = t1 - t0;
    if (len <= 0.0) return 0;
    return std::max(1, static_cast<int>(std::ceil(len / max_step - 1e-9)));
}

PeriodicHamiltonian::PeriodicHamiltonian(int n, std::vector<Segment> segments, double coeff_tol)
    : n_(n), period_(0.0), segments_(std::move(segments)) {
    if (n < 1) throw InvalidDimension("PeriodicHamiltonian: n must be >= 1");
    if (segments_.empty()) throw InvalidArgument("PeriodicHamiltonian: no segments");
    for (const auto& s : segments_) {
        if (!(s.duration > 0.0) || !std::isfinite(s.duration)) {
            throw InvalidArgument("PeriodicHamiltonian: segment durations must be positive");
        }
        if (!s.constant && !s.evaluate) throw InvalidArgument("PeriodicHamiltonian: empty segment");
        starts_.push_back(period_);
        period_ += s.duration;
    }
    for (std::size_t i = 0; i < segments_.size(); ++i) {
        const auto& s = segments_[i];
        const int samples = s.is_constant() ? 1 : 5;
        for (int k = 0; k < samples; ++k) {
            const double tau = starts_[i] + s.duration * (k + 0.5) / samples;
            check_coefficients(n_, s.at(tau), coeff_tol, tau);
        }
    }
    for (int k = 0; k < 4; ++k) {
        const double t = period_ * (k + 0.37) / 4.0;
        const Mat a0 = a_matrix(*this, t);
        const Mat a1 = a_matrix(*this, t + period_);
        if ((a0 - a1).norm() > coeff_tol * std::max(1.0, a0.norm()) * 1e3) {
            std::ostringstream os;
            os << "coefficients are not periodic: A(" << t << ") != A(" << t + period_ << ")";
            throw InvalidArgument(os.str());
        }
    }
}

PeriodicHamiltonian PeriodicHamiltonian::constant(int n, double period, Coefficients c) {
    return PeriodicHamiltonian(n, {Segment::make_constant(period, std::move(c))});
}

PeriodicHamiltonian PeriodicHamiltonian::smooth(int n, double period, CoefficientFn f) {
    return PeriodicHamiltonian(n, {Segment::make_smooth(period, std::move(f))});
}

bool PeriodicHamiltonian::piecewise_constant() const {
    return std::all_of(segments_.begin(), segments_.end(), [](const Segment& s) { return s.is_constant(); });
}

Coefficients PeriodicHamiltonian::coefficients(double t) const {
    const double k = std::floor(t / period_);
    double tau = t - k * period_;
    if (tau >= period_) tau -= period_;
    if (tau < 0.0) tau = 0.0;
    auto it = std::upper_bound(starts_.begin(), starts_.end(), tau);
    const auto idx = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, (it - starts_.begin()) - 1));
    return segments_[idx].at(tau);
}

std::vector<Piece> PeriodicHamiltonian::pieces(double t0, double t1,
                                               const std::vector<double>& checkpoints) const {
    if (!std::isfinite(t0) || !std::isfinite(t1) || t1 < t0) {
        throw InvalidArgument("pieces: require finite t0 <= t1");
    }
    std::vector<Piece> out;
    if (t1 == t0) return out;
    double k = std::floor(t0 / period_);
    // Guard against t0 sitting on a period boundary after rounding.
    if (t0 - k * period_ >= period_) k += 1.0;
    double t = t0;
    while (t < t1) {
        const double base = k * period_;
        for (std::size_t i = 0; i < segments_.size() && t < t1; ++i) {
            const double seg_end = base + starts_[i] + segments_[i].duration;
            const double end = (i + 1 == segments_.size()) ? base + period_ : seg_end;
            if (end <= t) continue;
            Piece p{t, std::min(end, t1), &segments_[i], base};
            if (p.t1 - p.t0 > 1e-15 * std::max(1.0, std::abs(p.t1))) out.push_back(p);
            t = p.t1;
        }
        k += 1.0;
    }
    if (checkpoints.empty()) return out;

    std::vector<double> cuts;
    for (double c : checkpoints) {
        if (c > t0 && c < t1) cuts.push_back(c);
    }
    std::sort(cuts.begin(), cuts.end());
    std::vector<Piece> split;
    for (const auto& p : out) {
        double start = p.t0;
        for (double c : cuts) {
            if (c > start && c < p.t1) {
                split.push_back({start, c, p.segment, p.period_start});
                start = c;
            }
        }
        split.push_back({start, p.t1, p.segment, p.period_start});
    }
    return split;
}

Mat a_matrix(const Coefficients& c) {
    const auto n = c.kappa.rows();
    Mat a(2 * n, 2 * n);
    a << c.kappa, c.r, c.r.transpose(), c.mass_inv;
    return a;
}

Mat a_matrix(const PeriodicHamiltonian& h, double t) {
    if (!std::isfinite(t)) throw InvalidArgument("a_matrix: t must be finite");
    return a_matrix(h.coefficients(t));
}

TransferMap transfer_map(const PeriodicHamiltonian& h, double t0, double t1, const IntegratorOptions& opts) {
    if (!(t0 <= t1)) throw InvalidArgument("transfer_map: require t0 <= t1");
    if (opts.steps_per_period < 1) throw InvalidArgument("transfer_map: steps_per_period must be >= 1");
    const int dim = 2 * h.n();
    const double max_step = h.period() / opts.steps_per_period;
    if (!(max_step > 0.0) || !std::isfinite(max_step)) throw IntegrationError("transfer_map: step size underflow");

    TransferMap tm;
    tm.t_start = t0;
    tm.t_end = t1;
    Mat m = Mat::Identity(dim, dim);
    Mat m_half = Mat::Identity(dim, dim);
    bool any_expm = false;
    bool any_rk4 = false;
    for (const auto& p : h.pieces(t0, t1)) {
        if (p.segment->is_constant()) {
            const Mat step = (jacobian(*p.segment->constant) * (p.t1 - p.t0)).exp();
            m = step * m;
            m_half = step * m_half;
            any_expm = true;
        } else {
            const int steps = p.steps(max_step);
            m = rk4_piece(p, m, steps);
            tm.steps += steps;
            if (opts.richardson) m_half = rk4_piece(p, m_half, 2 * steps);
            any_rk4 = true;
        }
    }
    tm.method = any_expm && any_rk4 ? "expm+rk4" : (any_rk4 ? "rk4" : "expm");
    if (any_rk4 && opts.richardson) tm.error_estimate = (m - m_half).norm() / 15.0;

    const Mat j = symplectic::standard_form(h.n());
    tm.symplectic_residual = (m * j * m.transpose() - j).norm();
    const double limit = 100.0 * opts.integ_tol * (1.0 + m.squaredNorm());
    if (!m.allFinite() || tm.symplectic_residual > limit) {
        std::ostringstream os;
        os << "transfer_map over [" << t0 << ", " << t1 << "]: symplecticity residual "
           << tm.symplectic_residual << " exceeds " << limit;
        throw IntegrationError(os.str());
    }
    tm.matrix = std::move(m);
    return tm;
}

TransferMap monodromy(const PeriodicHamiltonian& h, const IntegratorOptions& opts) {
    return transfer_map(h, 0.0, h.period(), opts);
}

Vec propagate(const PeriodicHamiltonian& h, const Vec& z0, double t, const IntegratorOptions& opts) {
    if (z0.size() != 2 * h.n()) throw InvalidDimension("propagate: z0 has wrong length");
    return transfer_map(h, 0.0, t, opts).matrix * z0;
}

double energy(const PeriodicHamiltonian& h, const Vec& z, double t) {
    return 0.5 * z.dot(a_matrix(h, t) * z);
}

}  // namespace hamstab::dynamics
