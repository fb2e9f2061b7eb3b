#include "hamstab/decompositions.hpp"

#include "hamstab/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace hamstab::decomp {

using symplectic::KreinType;

namespace {

double wrapped_arg(cplx z) {
    double a = std::arg(z);
    if (a < 0.0) a += 2.0 * std::numbers::pi;
    if (a >= 2.0 * std::numbers::pi) a -= 2.0 * std::numbers::pi;
    return a;
}

Mat spd_power(const Mat& a, double exponent, const char* what) {
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (a + a.transpose()));
    const Vec& ev = es.eigenvalues();
    const double top = std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
    if (ev.minCoeff() <= 1e-14 * top) {
        std::ostringstream os;
        os << what << ": matrix is not numerically positive-definite (eigenvalues "
           << ev.minCoeff() << " .. " << ev.maxCoeff() << ")";
        throw IllConditioned(os.str());
    }
    const Vec powered = ev.array().pow(exponent).matrix();
    Mat out = es.eigenvectors() * powered.asDiagonal() * es.eigenvectors().transpose();
    return 0.5 * (out + out.transpose());
}

struct ClusterPairs {
    std::vector<GBasisPair> pairs;
    std::vector<KreinType> types;  // type of each pair's lambda
};

void unstable_check(const symplectic::EigenCluster& c, double tol) {
    if (c.geometric < c.algebraic) {
        std::ostringstream os;
        os << "matrix is unstable: eigenvalue " << c.value << " is not semi-simple (algebraic "
           << c.algebraic << ", geometric " << c.geometric << ")";
        throw Unstable(os.str(), InstabilityKind::non_semi_simple, c.value);
    }
    if (c.circle_distance > tol) {
        std::ostringstream os;
        os << "matrix is unstable: eigenvalue " << c.value << " has modulus " << std::abs(c.value);
        throw Unstable(os.str(), InstabilityKind::off_circle, c.value);
    }
}

ClusterPairs basis_with_types(const Mat& m, const NormalFormOptions& opts) {
    symplectic::require_symplectic(m, symplectic::kSympTol, "normal form input");
    const int n = symplectic::half_dim(m);
    const auto clusters = symplectic::eigen_clusters(m, opts.clusters);
    for (const auto& c : clusters) unstable_check(c, opts.stability_tol);

    ClusterPairs out;
    for (const auto& c : clusters) {
        if (c.value.imag() < 0.0) continue;  // covered by its conjugate
        const bool real = c.value.imag() == 0.0;
        const CMat basis = symplectic::root_space_basis(m, c.value, c.algebraic);
        Eigen::SelfAdjointEigenSolver<CMat> es(symplectic::krein_gram(basis));
        const Vec& d = es.eigenvalues();
        KreinType type;
        for (Eigen::Index k = 0; k < d.size(); ++k) {
            if (std::abs(d(k)) <= opts.krein_degeneracy_tol) {
                std::ostringstream os;
                os << "eigenvector of unit-circle eigenvalue " << c.value
                   << " has vanishing Krein amplitude (" << d(k)
                   << "); the eigenvalue cannot be semi-simple";
                throw KreinDegenerate(os.str(), c.value);
            }
            (d(k) > 0 ? type.p : type.q) += 1;
        }
        if (real && type.p != type.q) {
            std::ostringstream os;
            os << "real eigenvalue " << c.value << " has unbalanced Krein type (" << type.p << ","
               << type.q << ")";
            throw KreinDegenerate(os.str(), c.value);
        }
        for (Eigen::Index k = 0; k < d.size(); ++k) {
            const CVec v = basis * es.eigenvectors().col(k) / std::sqrt(std::abs(d(k)));
            if (d(k) > 0) {
                out.pairs.push_back({v, v.conjugate(), c.value});
                out.types.push_back(type);
            } else if (!real) {
                // conj(v) is a positive-Krein eigenvector of conj(lambda)
                out.pairs.push_back({v.conjugate(), v, std::conj(c.value)});
                out.types.push_back({type.q, type.p});
            }
        }
    }
    if (static_cast<int>(out.pairs.size()) != n) {
        std::ostringstream os;
        os << "G-orthonormal basis construction produced " << out.pairs.size() << " pairs for n = "
           << n;
        throw Error(os.str());
    }

    std::vector<std::size_t> order(out.pairs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return wrapped_arg(out.pairs[a].lambda) < wrapped_arg(out.pairs[b].lambda);
    });
    ClusterPairs sorted;
    for (auto i : order) {
        sorted.pairs.push_back(out.pairs[i]);
        sorted.types.push_back(out.types[i]);
    }
    return sorted;
}

}  // namespace

Mat HorizontalPolarParts::rotation() const {
    const auto n = l.rows();
    Mat u(2 * n, 2 * n);
    u << x, y, -y, x;
    return u;
}

Mat HorizontalPolarParts::stabilizer() const {
    const auto n = l.rows();
    Mat s(2 * n, 2 * n);
    s << l, Mat::Zero(n, n), q, l.inverse();
    return s;
}

Mat spd_sqrt(const Mat& a) { return spd_power(a, 0.5, "spd_sqrt"); }
Mat spd_inverse_sqrt(const Mat& a) { return spd_power(a, -0.5, "spd_inverse_sqrt"); }

HorizontalPolarParts horizontal_polar(const Mat& m, double symp_tol) {
    symplectic::require_symplectic(m, symp_tol, "horizontal_polar input");
    const int n = symplectic::half_dim(m);
    const Mat a = m.topLeftCorner(n, n);
    const Mat b = m.topRightCorner(n, n);
    const Mat c = m.bottomLeftCorner(n, n);
    const Mat d = m.bottomRightCorner(n, n);
    HorizontalPolarParts parts;
    parts.l = spd_power(b.transpose() * b + d.transpose() * d, -0.5, "horizontal_polar");
    parts.x = d * parts.l;
    parts.y = b * parts.l;
    parts.q = parts.l * (b.transpose() * a + d.transpose() * c);
    return parts;
}

GaugeElement::GaugeElement(Mat c_, double tol) : c(std::move(c_)) {
    if (c.rows() != c.cols() || c.rows() == 0) throw InvalidDimension("gauge element must be square");
    const double err = (c.transpose() * c - Mat::Identity(c.rows(), c.cols())).norm();
    if (err > tol * static_cast<double>(c.rows())) {
        std::ostringstream os;
        os << "gauge element is not orthogonal: ||c^T c - I||_F = " << err;
        throw InvalidArgument(os.str());
    }
}

Mat GaugeElement::block() const {
    const auto n = c.rows();
    Mat g = Mat::Zero(2 * n, 2 * n);
    g.topLeftCorner(n, n) = c;
    g.bottomRightCorner(n, n) = c;
    return g;
}

PreIwasawaPair apply_gauge(const HorizontalPolarParts& parts, const GaugeElement& g) {
    if (g.c.rows() != parts.l.rows()) throw InvalidDimension("apply_gauge: dimension mismatch");
    const Mat gb = g.block();
    // g is orthogonal, so g^-1 = g^T
    return {parts.rotation() * gb.transpose(), gb * parts.stabilizer()};
}

HorizontalPolarParts refix_gauge(const PreIwasawaPair& pair) {
    const int n = symplectic::half_dim(pair.stabilizer);
    const Mat lp = pair.stabilizer.topLeftCorner(n, n);
    Eigen::JacobiSVD<Mat> svd(lp, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Mat c = svd.matrixU() * svd.matrixV().transpose();
    HorizontalPolarParts parts;
    Mat l = svd.matrixV() * svd.singularValues().asDiagonal() * svd.matrixV().transpose();
    parts.l = 0.5 * (l + l.transpose());
    parts.q = c.transpose() * pair.stabilizer.bottomLeftCorner(n, n);
    Mat gb = Mat::Zero(2 * n, 2 * n);
    gb.topLeftCorner(n, n) = c;
    gb.bottomRightCorner(n, n) = c;
    const Mat u = pair.rotation * gb;
    parts.x = u.topLeftCorner(n, n);
    parts.y = u.topRightCorner(n, n);
    return parts;
}

Mat NormalFormResult::reconstruct() const {
    return conjugator_f * normal_form() * symplectic::symplectic_inverse(conjugator_f);
}

std::vector<GBasisPair> g_orthonormal_eigenbasis(const Mat& m, const NormalFormOptions& opts) {
    return basis_with_types(m, opts).pairs;
}

NormalFormResult stable_normal_form(const Mat& m, const NormalFormOptions& opts) {
    const int n = symplectic::half_dim(m);
    const auto built = basis_with_types(m, opts);
    NormalFormResult res;
    res.conjugator_f.resize(2 * n, 2 * n);
    for (int l = 0; l < n; ++l) {
        const auto& pr = built.pairs[l];
        res.conjugator_f.col(l) = std::sqrt(2.0) * pr.psi.real();
        res.conjugator_f.col(n + l) = std::sqrt(2.0) * pr.psi.imag();
        res.angles.push_back(wrapped_arg(pr.lambda));
    }
    res.cluster_types = built.types;
    const Mat j = symplectic::standard_form(n);
    res.symplectic_residual = (res.conjugator_f.transpose() * j * res.conjugator_f - j).norm();
    res.reconstruction_residual = (res.reconstruct() - m).norm() / m.norm();
    return res;
}

KreinType krein_type(const Mat& m, cplx lambda, const NormalFormOptions& opts) {
    symplectic::require_symplectic(m, symplectic::kSympTol, "krein_type input");
    if (std::abs(std::abs(lambda) - 1.0) > opts.stability_tol) {
        std::ostringstream os;
        os << "krein_type: " << lambda << " is not on the unit circle";
        throw InvalidArgument(os.str());
    }
    const auto clusters = symplectic::eigen_clusters(m, opts.clusters);
    const symplectic::EigenCluster* best = nullptr;
    for (const auto& c : clusters) {
        if (!best || std::abs(c.value - lambda) < std::abs(best->value - lambda)) best = &c;
    }
    const double reach = std::max(opts.clusters.cluster_tol, 1e-6);
    if (!best || std::abs(best->value - lambda) > reach) {
        std::ostringstream os;
        os << "krein_type: " << lambda << " is not an eigenvalue";
        throw InvalidArgument(os.str());
    }
    const int power = best->algebraic - best->geometric + 1;
    const CMat basis = symplectic::root_space_basis(m, best->value, best->algebraic, power);
    return symplectic::krein_inertia(basis, opts.krein_degeneracy_tol);
}

}  // namespace hamstab::decomp
