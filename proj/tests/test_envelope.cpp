#include "generators.hpp"
#include "hamstab/envelope.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace hamstab;
using namespace hamstab::envelope;
using dynamics::Coefficients;
using dynamics::PeriodicHamiltonian;

namespace {

Coefficients scalar(double kappa) {
    return {Mat::Constant(1, 1, kappa), Mat::Zero(1, 1), Mat::Identity(1, 1)};
}

Mat one(double x) { return Mat::Constant(1, 1, x); }

// Random w0 with V0 w0^T symmetric, i.e. S0 symplectic.
EnvelopeState random_state(std::mt19937_64& rng, int n) {
    const Mat w = testgen::random_orthogonal(rng, n) * testgen::random_spd(rng, n, 0.6, 1.6);
    const Mat sigma = testgen::random_symmetric(rng, n, 0.5);
    return {w, sigma * w.inverse().transpose(), 0.0};
}

}  // namespace

TEST_CASE("mu examples") {
    const EnvelopeState unit{one(1.0), one(0.0), 0.0};
    CHECK(mu_of(unit, scalar(1.0))(0, 0) == doctest::Approx(1.0));
    const double kappa = 2.7;
    const EnvelopeState matched{one(std::pow(kappa, -0.25)), one(0.0), 0.0};
    CHECK(mu_of(matched, scalar(kappa))(0, 0) == doctest::Approx(std::sqrt(kappa)));
    std::mt19937_64 rng(3);
    const auto s = random_state(rng, 3);
    const Coefficients c{Mat::Identity(3, 3), Mat::Zero(3, 3), testgen::random_spd(rng, 3)};
    const Mat mu = mu_of(s, c);
    CHECK((mu - mu.transpose()).norm() < 1e-14);
    CHECK(Eigen::SelfAdjointEigenSolver<Mat>(mu).eigenvalues().minCoeff() > 0.0);
    CHECK_THROWS_AS(mu_of(EnvelopeState{one(0.0), one(0.0), 1.5}, scalar(1.0)), EnvelopeSingular);
}

TEST_CASE("envelope right-hand side") {
    SUBCASE("scalar equation") {
        const double w = 1.3, wd = -0.4, kappa = 0.8;
        const auto c = scalar(kappa);
        const auto s = make_state(c, one(w), one(wd), 0.0);
        const auto r = envelope_rhs(s, c);
        CHECK(r.w_dot(0, 0) == doctest::Approx(wd));
        CHECK(r.v_dot(0, 0) == doctest::Approx(std::pow(w, -3) - kappa * w));
    }
    SUBCASE("stationary constant focusing") {
        const double kappa = 3.0;
        const auto r = envelope_rhs(EnvelopeState{one(std::pow(kappa, -0.25)), one(0.0), 0.0}, scalar(kappa));
        CHECK(std::abs(r.v_dot(0, 0)) < 1e-15);
    }
    SUBCASE("isotropic n=2") {
        const Coefficients c{Mat::Identity(2, 2), Mat::Zero(2, 2), Mat::Identity(2, 2)};
        const auto r = envelope_rhs(EnvelopeState{Mat::Identity(2, 2), Mat::Zero(2, 2), 0.0}, c);
        CHECK(r.v_dot.norm() < 1e-15);
        CHECK(r.w_dot.norm() < 1e-15);
    }
    SUBCASE("make_state and w_dot are inverse") {
        std::mt19937_64 rng(5);
        const Coefficients c{testgen::random_symmetric(rng, 2), Mat::Random(2, 2), testgen::random_spd(rng, 2)};
        const Mat w = Mat::Random(2, 2) + 2.0 * Mat::Identity(2, 2);
        const Mat wd = Mat::Random(2, 2);
        CHECK((w_dot(make_state(c, w, wd, 0.0), c) - wd).norm() < 1e-13);
    }
}

TEST_CASE("S factor is symplectic with closed-form inverse") {
    std::mt19937_64 rng(8);
    for (int n = 1; n <= 3; ++n) {
        const auto s = random_state(rng, n);
        const Mat sf = s_factor(s);
        CHECK(symplectic::is_symplectic(sf, 1e-12).ok);
        CHECK((s_inverse(s) * sf - Mat::Identity(2 * n, 2 * n)).norm() < 1e-12);
        const auto tw = twiss_blocks(s);
        const Mat sts = sf.transpose() * sf;
        CHECK((sts.bottomLeftCorner(n, n) - tw.alpha).norm() < 1e-12);
        CHECK((sts.topRightCorner(n, n) - tw.alpha.transpose()).norm() < 1e-12);
        CHECK((sts.bottomRightCorner(n, n) - tw.beta).norm() < 1e-12);
        CHECK((sts.topLeftCorner(n, n) - tw.gamma).norm() < 1e-12);
    }
}

TEST_CASE("matched SHO envelope is constant and P^-1 = R(t)") {
    const auto h = PeriodicHamiltonian::constant(1, 2.0 * std::numbers::pi, scalar(1.0));
    const auto env = integrate_envelope(EnvelopeState{one(1.0), one(0.0), 0.0}, h, h.period());
    for (const auto& node : env.nodes()) CHECK(std::abs(node.w(0, 0) - 1.0) < 1e-14);
    const auto ph = phase_advance(env, 1.1);
    CHECK((ph.matrix().transpose() - symplectic::rotation_block(1.1)).norm() < 1e-10);
    const auto tm = solution_map_from_envelope(env, ph);
    CHECK((tm.matrix - symplectic::rotation_block(1.1)).norm() < 1e-10);
    CHECK((solution_map_from_envelope(env, phase_advance(env, 0.0)).matrix - Mat::Identity(2, 2)).norm() == 0.0);
}

TEST_CASE("zero mu leaves P at the identity") {
    // m^-1 -> small: mu scales with m^-1, so P stays near I.
    const Coefficients c{one(0.0), one(0.0), one(1e-9)};
    const auto h = PeriodicHamiltonian::constant(1, 1.0, c);
    const auto env = integrate_envelope(EnvelopeState{one(1.0), one(0.0), 0.0}, h, 1.0);
    CHECK((phase_advance(env, 1.0).matrix() - Mat::Identity(2, 2)).norm() < 1e-8);
}

TEST_CASE("envelope route reproduces the transfer map") {
    std::mt19937_64 rng(42);
    for (int trial = 0; trial < 12; ++trial) {
        const int n = 1 + trial % 3;
        const auto h = testgen::random_lattice(rng, n);
        const auto s0 = random_state(rng, n);
        EnvelopeOptions eo;
        const double t_end = h.period();
        const auto env = integrate_envelope(s0, h, t_end, eo);
        CHECK(env.max_symplectic_residual() < dynamics::kIntegTol);
        std::vector<double> times;
        for (int k = 1; k <= 8; ++k) times.push_back(t_end * k / 8.0);
        const auto track = phase_track(env, times);
        for (const auto& ph : track) {
            const Mat via_env = solution_map_from_envelope(env, ph).matrix;
            const Mat direct = dynamics::transfer_map(h, 0.0, ph.t).matrix;
            CHECK(testgen::relative_error(via_env, direct) < 1e-7);
        }
    }
}

TEST_CASE("block-diagonal lattice decouples") {
    const auto h2 = PeriodicHamiltonian::constant(
        2, 2.0, {Mat(Eigen::Vector2d(1.5, 0.7).asDiagonal()), Mat::Zero(2, 2), Mat::Identity(2, 2)});
    const auto ha = PeriodicHamiltonian::constant(1, 2.0, scalar(1.5));
    const auto hb = PeriodicHamiltonian::constant(1, 2.0, scalar(0.7));
    const EnvelopeState s2{Mat(Eigen::Vector2d(1.2, 0.8).asDiagonal()),
                           Mat(Eigen::Vector2d(0.1, -0.2).asDiagonal()), 0.0};
    const auto e2 = integrate_envelope(s2, h2, 2.0);
    const auto ea = integrate_envelope(EnvelopeState{one(1.2), one(0.1), 0.0}, ha, 2.0);
    const auto eb = integrate_envelope(EnvelopeState{one(0.8), one(-0.2), 0.0}, hb, 2.0);
    const auto w2 = e2.at(1.3).w;
    CHECK(std::abs(w2(0, 0) - ea.at(1.3).w(0, 0)) < 1e-13);
    CHECK(std::abs(w2(1, 1) - eb.at(1.3).w(0, 0)) < 1e-13);
    CHECK(std::abs(w2(0, 1)) < 1e-14);
    const Mat p2 = phase_advance(e2, 1.3).matrix();
    const Mat want = symplectic::diamond(phase_advance(ea, 1.3).matrix(), phase_advance(eb, 1.3).matrix());
    CHECK((p2 - want).norm() < 1e-12);
}

TEST_CASE("invariants") {
    const EnvelopeState unit{one(1.0), one(0.0), 0.0};
    CHECK(cs_invariant(Vec::Zero(2), unit) == 0.0);
    CHECK(cs_invariant(Eigen::Vector2d(0.3, -0.4), unit) == doctest::Approx(0.25));

    // Scalar form x^2/w^2 + (w x' - w' x)^2.
    const double w = 1.4, wd = 0.3, x = 0.7, xd = -0.2;
    const auto s = make_state(scalar(1.0), one(w), one(wd), 0.0);
    CHECK(cs_invariant(Eigen::Vector2d(x, xd), s) ==
          doctest::Approx(x * x / (w * w) + std::pow(w * xd - wd * x, 2)));

    std::mt19937_64 rng(12);
    const auto h = testgen::random_lattice(rng, 2);
    const auto s0 = random_state(rng, 2);
    const auto env = integrate_envelope(s0, h, h.period());
    const auto ph = phase_advance(env, 0.6 * h.period());
    const auto st = env.at(0.6 * h.period());
    const Vec z = Vec::Random(4);
    CHECK(general_invariant(z, Mat::Identity(4, 4), st, ph) == doctest::Approx(cs_invariant(z, st)));
    const Mat xi = testgen::random_spd(rng, 4);
    CHECK(general_invariant(z, 3.0 * xi, st, ph) == doctest::Approx(3.0 * general_invariant(z, xi, st, ph)));
    CHECK_THROWS_AS(general_invariant(z, -xi, st, ph), InvalidArgument);

    // Conservation along the flow.
    const Vec z0 = Vec::Random(4);
    const double i0 = general_invariant(z0, xi, env.nodes().front(), phase_advance(env, 0.0));
    const Vec zt = dynamics::propagate(h, z0, 0.6 * h.period());
    CHECK(general_invariant(zt, xi, st, ph) == doctest::Approx(i0).epsilon(1e-8));
}

TEST_CASE("matched constant focusing") {
    const double k = 1.7;
    const auto h = PeriodicHamiltonian::constant(1, 1.0, scalar(k * k));
    const auto m = matched_envelope(h);
    CHECK(m.accepted);
    CHECK(m.initial.w(0, 0) == doctest::Approx(1.0 / std::sqrt(k)).epsilon(1e-12));
    CHECK(std::abs(m.w_dot0(0, 0)) < 1e-12);
    CHECK(m.residual < 1e-12);
    CHECK(m.s0_symplectic_residual < 1e-12);
}

TEST_CASE("matched SHO") {
    const auto h = PeriodicHamiltonian::constant(1, 2.0 * std::numbers::pi - 0.1, scalar(1.0));
    const auto m = matched_envelope(h);
    CHECK(m.initial.w(0, 0) == doctest::Approx(1.0));
    CHECK(std::abs(m.w_dot0(0, 0)) < 1e-10);
}

TEST_CASE("matched Mathieu points") {
    const auto stable = matched_envelope(testgen::mathieu(0.2, 0.1));
    CHECK(stable.accepted);
    CHECK(stable.residual < kMatchTol);
    try {
        matched_envelope(testgen::mathieu(1.0, 0.5));
        FAIL("expected an unstable lattice");
    } catch (const UnstableLattice& e) {
        CHECK_FALSE(e.report().stable);
        CHECK(e.kind() == InstabilityKind::off_circle);
        CHECK(e.report().max_modulus > 1.0 + 1e-8);
    }
}

TEST_CASE("matched envelope on random coupled lattices") {
    std::mt19937_64 rng(77);
    testgen::LatticeOptions o;
    o.kappa_shift = 2.0;
    o.kappa_scale = 0.3;
    int stable = 0;
    for (int trial = 0; trial < 20; ++trial) {
        const auto h = testgen::random_lattice(rng, 1 + trial % 3, o);
        try {
            const auto m = matched_envelope(h);
            ++stable;
            CHECK(m.residual < kMatchTol);
            const auto& wT = m.trajectory.nodes().back().w;
            CHECK(std::isfinite(wT.norm()));
        } catch (const UnstableLattice&) {
        }
    }
    CHECK(stable > 5);
}

TEST_CASE("singular initial envelope is rejected") {
    const auto h = PeriodicHamiltonian::constant(1, 1.0, scalar(1.0));
    CHECK_THROWS_AS(integrate_envelope(EnvelopeState{one(0.0), one(0.0), 0.0}, h, 1.0), EnvelopeSingular);
    const auto env = integrate_envelope(EnvelopeState{one(1.0), one(0.0), 0.0}, h, 1.0);
    CHECK_THROWS_AS(phase_advance(env, 1.5), InvalidArgument);
}
