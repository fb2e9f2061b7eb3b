#include "hamstab/symplectic_core.hpp"

#include "hamstab/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

namespace hamstab::symplectic {

namespace {

constexpr cplx kI{0.0, 1.0};

double wrapped_arg(cplx z) {
    double a = std::arg(z);
    if (a < 0.0) a += 2.0 * std::numbers::pi;
    return a;
}

int find_root(std::vector<int>& parent, int i) {
    while (parent[i] != i) {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    return i;
}

}  // namespace

Mat standard_form(int n) {
    if (n < 1) throw InvalidDimension("standard_form: n must be >= 1");
    Mat j = Mat::Zero(2 * n, 2 * n);
    j.topRightCorner(n, n).setIdentity();
    j.bottomLeftCorner(n, n) = -Mat::Identity(n, n);
    return j;
}

int half_dim(const Mat& m) {
    if (m.rows() != m.cols() || m.rows() == 0 || m.rows() % 2 != 0) {
        std::ostringstream os;
        os << "expected an even square matrix, got " << m.rows() << "x" << m.cols();
        throw InvalidDimension(os.str());
    }
    return static_cast<int>(m.rows() / 2);
}

SymplecticCheck is_symplectic(const Mat& m, double tol) {
    const int n = half_dim(m);
    const Mat j = standard_form(n);
    SymplecticCheck c;
    c.residual = (m * j * m.transpose() - j).norm();
    c.threshold = tol * (1.0 + m.squaredNorm());
    c.ok = c.residual <= c.threshold;
    return c;
}

void require_symplectic(const Mat& m, double tol, const char* what) {
    const auto c = is_symplectic(m, tol);
    if (!c.ok) {
        std::ostringstream os;
        os << what << " is not symplectic: ||MJM^T - J||_F = " << c.residual
           << " exceeds " << c.threshold;
        throw NotSymplectic(os.str(), c.residual);
    }
}

Mat symplectic_inverse(const Mat& m) {
    const Mat j = standard_form(half_dim(m));
    return -j * m.transpose() * j;
}

Mat diamond(const Mat& m1, const Mat& m2) {
    const int i = half_dim(m1);
    const int j = half_dim(m2);
    const int k = i + j;
    Mat out = Mat::Zero(2 * k, 2 * k);
    out.block(0, 0, i, i) = m1.block(0, 0, i, i);
    out.block(0, k, i, i) = m1.block(0, i, i, i);
    out.block(k, 0, i, i) = m1.block(i, 0, i, i);
    out.block(k, k, i, i) = m1.block(i, i, i, i);
    out.block(i, i, j, j) = m2.block(0, 0, j, j);
    out.block(i, k + i, j, j) = m2.block(0, j, j, j);
    out.block(k + i, i, j, j) = m2.block(j, 0, j, j);
    out.block(k + i, k + i, j, j) = m2.block(j, j, j, j);
    return out;
}

Mat diamond(const std::vector<Mat>& factors) {
    if (factors.empty()) throw InvalidDimension("diamond: no factors");
    Mat out = factors.front();
    half_dim(out);
    for (std::size_t i = 1; i < factors.size(); ++i) out = diamond(out, factors[i]);
    return out;
}

Mat rotation_block(double theta) {
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    Mat r(2, 2);
    r << c, s, -s, c;
    return r;
}

Mat rotation_normal_form(const std::vector<double>& angles) {
    if (angles.empty()) throw InvalidDimension("rotation_normal_form: no angles");
    const int n = static_cast<int>(angles.size());
    Mat out = Mat::Zero(2 * n, 2 * n);
    for (int l = 0; l < n; ++l) {
        const double c = std::cos(angles[l]);
        const double s = std::sin(angles[l]);
        out(l, l) = c;
        out(l, n + l) = s;
        out(n + l, l) = -s;
        out(n + l, n + l) = c;
    }
    return out;
}

Mat SymplecticRotation::assemble() const {
    const auto n = p1.rows();
    Mat out(2 * n, 2 * n);
    out << p1, p2, -p2, p1;
    return out;
}

SymplecticRotation SymplecticRotation::from_unitary(const CMat& u) {
    return {u.real(), -u.imag()};
}

SymplecticRotation SymplecticRotation::from_matrix(const Mat& m) {
    const int n = half_dim(m);
    return {m.topLeftCorner(n, n), m.topRightCorner(n, n)};
}

cplx krein_product(const CVec& psi, const CVec& phi) {
    if (psi.size() != phi.size() || psi.size() == 0 || psi.size() % 2 != 0) {
        throw InvalidDimension("krein_product: vectors must have equal even length");
    }
    const auto n = psi.size() / 2;
    // J psi = (psi_p, -psi_x)
    CVec jpsi(psi.size());
    jpsi.head(n) = psi.tail(n);
    jpsi.tail(n) = -psi.head(n);
    return -kI * phi.dot(jpsi);  // Eigen's dot conjugates the left operand
}

double krein_amplitude(const CVec& psi) { return krein_product(psi, psi).real(); }

CMat krein_gram(const CMat& basis) {
    if (basis.rows() == 0 || basis.rows() % 2 != 0) {
        throw InvalidDimension("krein_gram: basis vectors must have even length");
    }
    const int n = static_cast<int>(basis.rows() / 2);
    const CMat g = -kI * standard_form(n).cast<cplx>();
    CMat h = basis.adjoint() * g * basis;
    return 0.5 * (h + h.adjoint());
}

std::vector<EigenCluster> eigen_clusters(const Mat& m, const ClusterOptions& opts) {
    half_dim(m);
    const auto dim = m.rows();
    Eigen::EigenSolver<Mat> es(m, true);
    if (es.info() != Eigen::Success) throw Error("eigen_clusters: eigensolver failed");
    const CVec vals = es.eigenvalues();
    const CMat vecs = es.eigenvectors();

    // First-order perturbation radius of each eigenvalue, eps ||M|| / s_i, where
    // s_i = |y_i^* x_i| / (||x_i|| ||y_i||). Nearly defective eigenvalues have
    // tiny s_i, so a split Jordan block is regrouped.
    std::vector<double> radius(dim, 1e-4);
    Eigen::FullPivLU<CMat> lu(vecs);
    if (lu.isInvertible()) {
        const CMat left = lu.inverse();
        const double eps = std::numeric_limits<double>::epsilon();
        for (Eigen::Index i = 0; i < dim; ++i) {
            const double s = 1.0 / (vecs.col(i).norm() * left.row(i).norm());
            radius[i] = std::min(16.0 * eps * m.norm() / s, 1e-4);
        }
    }

    std::vector<int> parent(dim);
    std::iota(parent.begin(), parent.end(), 0);
    for (Eigen::Index i = 0; i < dim; ++i) {
        for (Eigen::Index k = i + 1; k < dim; ++k) {
            const double link = std::max(opts.cluster_tol, radius[i] + radius[k]);
            if (std::abs(vals[i] - vals[k]) < link) {
                parent[find_root(parent, static_cast<int>(i))] = find_root(parent, static_cast<int>(k));
            }
        }
    }

    // Rank decisions are relative to the scale of M, not of M - lambda I.
    const double scale = Eigen::JacobiSVD<Mat>(m).singularValues()(0);

    std::vector<EigenCluster> clusters;
    std::vector<int> root_of_cluster;
    for (Eigen::Index i = 0; i < dim; ++i) {
        const int r = find_root(parent, static_cast<int>(i));
        auto it = std::find(root_of_cluster.begin(), root_of_cluster.end(), r);
        if (it == root_of_cluster.end()) {
            root_of_cluster.push_back(r);
            clusters.push_back({});
            it = root_of_cluster.end() - 1;
        }
        auto& c = clusters[it - root_of_cluster.begin()];
        c.value += vals[i];
        c.algebraic += 1;
    }

    for (auto& c : clusters) {
        c.value /= static_cast<double>(c.algebraic);
        // A cluster straddling the real axis of a real matrix is real.
        if (std::abs(c.value.imag()) < opts.cluster_tol) c.value = {c.value.real(), 0.0};
        c.circle_distance = std::abs(std::abs(c.value) - 1.0);
        const CMat shifted = m.cast<cplx>() - c.value * CMat::Identity(dim, dim);
        Eigen::JacobiSVD<CMat> svd(shifted);
        const auto& sv = svd.singularValues();
        const double cutoff = opts.rank_tol * std::max(scale, std::numeric_limits<double>::min());
        int nullity = 0;
        for (Eigen::Index k = 0; k < sv.size(); ++k) {
            if (sv(k) <= cutoff) ++nullity;
        }
        c.geometric = std::min(nullity, c.algebraic);
    }

    std::sort(clusters.begin(), clusters.end(), [](const EigenCluster& a, const EigenCluster& b) {
        const double aa = wrapped_arg(a.value);
        const double ab = wrapped_arg(b.value);
        if (aa != ab) return aa < ab;
        return std::abs(a.value) < std::abs(b.value);
    });
    return clusters;
}

CMat root_space_basis(const Mat& m, cplx lambda, int multiplicity, int power) {
    half_dim(m);
    const auto dim = m.rows();
    if (multiplicity < 1 || multiplicity > dim) {
        throw InvalidDimension("root_space_basis: multiplicity out of range");
    }
    if (lambda.imag() == 0.0) {
        const Mat step = m - lambda.real() * Mat::Identity(dim, dim);
        Mat shifted = step;
        for (int k = 1; k < power; ++k) shifted = shifted * step;
        Eigen::JacobiSVD<Mat> svd(shifted, Eigen::ComputeFullV);
        return svd.matrixV().rightCols(multiplicity).cast<cplx>();
    }
    const CMat step = m.cast<cplx>() - lambda * CMat::Identity(dim, dim);
    CMat shifted = step;
    for (int k = 1; k < power; ++k) shifted = shifted * step;
    Eigen::JacobiSVD<CMat> svd(shifted, Eigen::ComputeFullV);
    return svd.matrixV().rightCols(multiplicity);
}

KreinType krein_inertia(const CMat& basis, double degeneracy_tol) {
    Eigen::SelfAdjointEigenSolver<CMat> es(krein_gram(basis));
    KreinType t;
    for (Eigen::Index k = 0; k < es.eigenvalues().size(); ++k) {
        const double d = es.eigenvalues()(k);
        if (d > degeneracy_tol) ++t.p;
        else if (d < -degeneracy_tol) ++t.q;
    }
    return t;
}

StabilityReport stability_verdict(const Mat& m, double tol, const ClusterOptions& opts) {
    require_symplectic(m, kSympTol, "stability_verdict input");
    StabilityReport rep;
    rep.tolerance = tol;
    Eigen::EigenSolver<Mat> es(m, false);
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
        rep.eigenvalues.push_back(es.eigenvalues()(i));
        rep.max_modulus = std::max(rep.max_modulus, std::abs(es.eigenvalues()(i)));
    }
    rep.clusters = eigen_clusters(m, opts);
    rep.stable = true;
    std::ostringstream diag;
    for (auto& c : rep.clusters) {
        c.on_circle = c.circle_distance <= tol;
        c.semi_simple = c.geometric >= c.algebraic;
        if (c.on_circle && c.semi_simple) {
            c.krein = krein_inertia(root_space_basis(m, c.value, c.algebraic));
            continue;
        }
        if (rep.stable) {
            if (!c.semi_simple) {
                diag << "eigenvalue " << c.value << " is not semi-simple (algebraic multiplicity "
                     << c.algebraic << ", geometric " << c.geometric << ")";
            } else {
                diag << "eigenvalue " << c.value << " lies off the unit circle (| |lambda| - 1 | = "
                     << c.circle_distance << ")";
            }
        }
        rep.stable = false;
    }
    rep.diagnostic = diag.str();
    return rep;
}

}  // namespace hamstab::symplectic
