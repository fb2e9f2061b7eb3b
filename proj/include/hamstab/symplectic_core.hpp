#pragma once

#include <Eigen/Dense>

#include <complex>
#include <optional>
#include <vector>

namespace hamstab {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using cplx = std::complex<double>;

namespace symplectic {

inline constexpr double kSympTol = 1e-10;
inline constexpr double kRankTol = 1e-8;
inline constexpr double kClusterTol = 1e-7;
inline constexpr double kStabilityTol = 1e-8;

/// Standard form J = [[0, I], [-I, 0]] of size 2n.
Mat standard_form(int n);

/// Half dimension of an even square matrix; throws InvalidDimension otherwise.
int half_dim(const Mat& m);

struct SymplecticCheck {
    bool ok = false;
    double residual = 0.0;   // ||M J M^T - J||_F
    double threshold = 0.0;  // tol * (1 + ||M||_F^2)
};

SymplecticCheck is_symplectic(const Mat& m, double tol = kSympTol);

/// Throws NotSymplectic with the residual when the check fails.
void require_symplectic(const Mat& m, double tol = kSympTol, const char* what = "matrix");

Mat symplectic_inverse(const Mat& m);  // -J M^T J

/// Long's interleaving product: the (i+j)-degree-of-freedom matrix acting as
/// m1 on coordinates (x_1..x_i, p_1..p_i) and m2 on the rest.
Mat diamond(const Mat& m1, const Mat& m2);
Mat diamond(const std::vector<Mat>& factors);

/// [[cos t, sin t], [-sin t, cos t]].
Mat rotation_block(double theta);

/// R(theta_1) ⋄ ... ⋄ R(theta_n).
Mat rotation_normal_form(const std::vector<double>& angles);

// Orthosymplectic matrix [[P1, P2], [-P2, P1]].
struct SymplecticRotation {
    Mat p1;
    Mat p2;

    Mat assemble() const;
    CMat as_unitary() const { return p1.cast<cplx>() - cplx(0, 1) * p2.cast<cplx>(); }
    static SymplecticRotation from_unitary(const CMat& u);
    static SymplecticRotation from_matrix(const Mat& m);
};

/// <psi, phi>_G = -phi^* i J psi.
cplx krein_product(const CVec& psi, const CVec& phi);
double krein_amplitude(const CVec& psi);

/// Gram matrix H_jk = <b_k, b_j>_G of the columns of b (Hermitian).
CMat krein_gram(const CMat& basis);

struct KreinType {
    int p = 0;
    int q = 0;
    bool operator==(const KreinType&) const = default;
};

struct EigenCluster {
    cplx value;              // cluster mean
    int algebraic = 0;       // number of eigenvalues in the cluster
    int geometric = 0;       // nullity of (M - value I) at rank tolerance
    double circle_distance = 0.0;
    bool on_circle = false;
    bool semi_simple = false;
    std::optional<KreinType> krein;  // set for on-circle semi-simple clusters
};

struct StabilityReport {
    std::vector<cplx> eigenvalues;
    std::vector<EigenCluster> clusters;
    bool stable = false;
    std::string diagnostic;  // empty when stable
    double tolerance = kStabilityTol;
    double max_modulus = 0.0;
};

struct ClusterOptions {
    double cluster_tol = kClusterTol;
    double rank_tol = kRankTol;
};

/// Eigenvalues of m grouped into numerically coincident clusters, each with
/// algebraic and geometric multiplicity. Clusters are ordered by argument.
std::vector<EigenCluster> eigen_clusters(const Mat& m, const ClusterOptions& opts = {});

/// Stable iff every cluster is within tol of the unit circle and semi-simple.
StabilityReport stability_verdict(const Mat& m, double tol = kStabilityTol,
                                  const ClusterOptions& opts = {});

/// Orthonormal basis of the root space of eigenvalue `lambda` with the given
/// multiplicity, taken as the null space of (M - lambda I)^power. Real when
/// lambda is real so the basis is closed under conjugation.
CMat root_space_basis(const Mat& m, cplx lambda, int multiplicity, int power = 1);

/// Inertia of G restricted to the span of `basis`. Eigenvalues of the Gram
/// matrix with |d| <= degeneracy_tol are counted in neither p nor q.
KreinType krein_inertia(const CMat& basis, double degeneracy_tol = 1e-11);

}  // namespace symplectic
}  // namespace hamstab
