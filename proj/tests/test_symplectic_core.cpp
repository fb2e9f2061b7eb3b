#include "generators.hpp"
#include "hamstab/errors.hpp"
#include "hamstab/symplectic_core.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace hamstab;
using namespace hamstab::symplectic;

TEST_CASE("standard form") {
    const Mat j = standard_form(2);
    CHECK((j * j + Mat::Identity(4, 4)).norm() == 0.0);
    CHECK((j.transpose() + j).norm() == 0.0);
    CHECK_THROWS_AS(standard_form(0), InvalidDimension);
}

TEST_CASE("is_symplectic") {
    Mat drift(2, 2);
    drift << 1, 1, 0, 1;
    CHECK(is_symplectic(drift).ok);
    CHECK(is_symplectic(Mat::Identity(4, 4)).ok);
    Mat scaled = 2.0 * Mat::Identity(2, 2);
    CHECK_FALSE(is_symplectic(scaled).ok);
    CHECK_THROWS_AS(require_symplectic(scaled), NotSymplectic);
    CHECK_THROWS_AS(is_symplectic(Mat::Identity(3, 3)), InvalidDimension);
    CHECK_THROWS_AS(is_symplectic(Mat::Identity(2, 4)), InvalidDimension);
}

TEST_CASE("symplectic inverse") {
    std::mt19937_64 rng(11);
    for (int n = 1; n <= 4; ++n) {
        const Mat m = testgen::random_symplectic(rng, n);
        CHECK((symplectic_inverse(m) * m - Mat::Identity(2 * n, 2 * n)).norm() < 1e-10);
    }
}

TEST_CASE("diamond interleaves coordinates") {
    Mat a(2, 2), b(2, 2);
    a << 1, 2, 3, 7;
    b << 5, 6, 7, 8;
    Mat want(4, 4);
    want << 1, 0, 2, 0,
            0, 5, 0, 6,
            3, 0, 7, 0,
            0, 7, 0, 8;
    CHECK((diamond(a, b) - want).norm() == 0.0);

    std::mt19937_64 rng(3);
    const Mat x = testgen::random_symplectic(rng, 1);
    const Mat y = testgen::random_symplectic(rng, 2);
    CHECK(is_symplectic(diamond(x, y), 1e-12).ok);
    CHECK((diamond(std::vector<Mat>{x, y}) - diamond(x, y)).norm() == 0.0);
}

TEST_CASE("rotation normal form") {
    const Mat r = rotation_normal_form({0.3, 1.1});
    CHECK((r - diamond(rotation_block(0.3), rotation_block(1.1))).norm() < 1e-15);
    CHECK((r * r.transpose() - Mat::Identity(4, 4)).norm() < 1e-14);
    CHECK(is_symplectic(r).ok);
}

TEST_CASE("symplectic rotation and unitary picture") {
    std::mt19937_64 rng(5);
    const Mat u = testgen::random_rotation(rng, 3);
    const auto rot = SymplecticRotation::from_matrix(u);
    CHECK((rot.assemble() - u).norm() < 1e-15);
    const CMat w = rot.as_unitary();
    CHECK((w.adjoint() * w - CMat::Identity(3, 3)).norm() < 1e-13);
    CHECK((SymplecticRotation::from_unitary(w).assemble() - u).norm() < 1e-15);
}

TEST_CASE("Krein product of a rotation eigenvector") {
    const double theta = 0.8;
    CVec psi(2);
    psi << 1.0, cplx(0, 1);
    const CVec mpsi = rotation_block(theta).cast<cplx>() * psi;
    CHECK(std::abs(mpsi(0) - std::polar(1.0, theta) * psi(0)) < 1e-15);
    CHECK(krein_amplitude(psi) == doctest::Approx(2.0));
    CHECK(krein_amplitude(psi.conjugate()) == doctest::Approx(-2.0));
    CHECK(std::abs(krein_product(psi, psi.conjugate())) < 1e-15);
}

TEST_CASE("eigen clusters group conjugate and repeated eigenvalues") {
    const Mat m = rotation_normal_form({0.5, 0.5, 2.0});
    const auto cl = eigen_clusters(m);
    REQUIRE(cl.size() == 4);
    CHECK(cl[0].algebraic == 2);
    CHECK(cl[0].geometric == 2);
    CHECK(std::arg(cl[0].value) == doctest::Approx(0.5));
    CHECK(cl[1].algebraic == 1);
}

TEST_CASE("stability verdict") {
    SUBCASE("rotation is stable with Krein type (1,0)") {
        const auto rep = stability_verdict(rotation_block(0.7));
        CHECK(rep.stable);
        CHECK(rep.diagnostic.empty());
        REQUIRE(rep.clusters.size() == 2);
        CHECK(rep.clusters[0].krein == KreinType{1, 0});
        CHECK(rep.clusters[1].krein == KreinType{0, 1});
    }
    SUBCASE("identity is stable, double eigenvalue of type (1,1)") {
        const auto rep = stability_verdict(Mat::Identity(2, 2));
        CHECK(rep.stable);
        REQUIRE(rep.clusters.size() == 1);
        CHECK(rep.clusters[0].krein == KreinType{1, 1});
    }
    SUBCASE("drift is a Jordan block") {
        Mat drift(2, 2);
        drift << 1, 1, 0, 1;
        const auto rep = stability_verdict(drift);
        CHECK_FALSE(rep.stable);
        CHECK(rep.diagnostic.find("not semi-simple") != std::string::npos);
    }
    SUBCASE("hyperbolic matrix is off the circle") {
        Mat h(2, 2);
        h << 2.0, 0.0, 0.0, 0.5;
        const auto rep = stability_verdict(h);
        CHECK_FALSE(rep.stable);
        CHECK(rep.max_modulus == doctest::Approx(2.0));
        CHECK(rep.diagnostic.find("off the unit circle") != std::string::npos);
    }
    SUBCASE("conjugated rotations stay stable") {
        std::mt19937_64 rng(9);
        for (int trial = 0; trial < 50; ++trial) {
            const Mat f = testgen::random_symplectic(rng, 3);
            const Mat m = f * rotation_normal_form({0.4, 1.9, 4.0}) * symplectic_inverse(f);
            CHECK(stability_verdict(m).stable);
        }
    }
}

TEST_CASE("Krein inertia of a mixed-sign collision") {
    // R(0.6) ⋄ R(-0.6): e^{0.6 i} appears with positive and negative signature.
    const Mat m = rotation_normal_form({0.6, 2.0 * std::numbers::pi - 0.6});
    const auto rep = stability_verdict(m);
    CHECK(rep.stable);
    for (const auto& c : rep.clusters) {
        CHECK(c.algebraic == 2);
        CHECK(c.krein == KreinType{1, 1});
    }
}
