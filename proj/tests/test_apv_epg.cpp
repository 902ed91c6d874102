#include <gtest/gtest.h>
#include <fasec/apv_epg.hpp>
#include <fasec/verification.hpp>
#include "test_support.hpp"

using namespace fasec;
using fasec::testing::baseline_params;
using fasec::testing::random_beamformers;
using fasec::testing::random_layout;
using fasec::testing::rel_err;

namespace {

struct Point
{
    Scenario s;
    rvec d;
    ChannelSet ch;
    BeamformerSet w;
    SurrogateState st;
};

Point random_point(std::mt19937_64& rng, int M, int K, double probing, GainConvention conv)
{
    auto p = baseline_params(M, K, probing, conv);
    for (int k = 0; k < K; ++k) p.user_angles[k] = fasec::testing::random_angle(rng);
    p.sensing_angle = fasec::testing::random_angle(rng);
    p.eavesdropper_angles.clear();
    Scenario s(p);
    rvec d = random_layout(rng, s);
    auto ch = build_channels(s, d);
    auto w = random_beamformers(rng, M, K, 1.0);
    // auxiliaries taken at an unrelated point so the gradient is generic
    auto st = initial_surrogate(ch, random_beamformers(rng, M, K, 0.5), s);
    return {std::move(s), std::move(d), std::move(ch), std::move(w), std::move(st)};
}

} // namespace

// ---------------------------------------------------------------- gradient

TEST(ApvGradient, ZeroBeamformersGiveZeroGradient)
{
    std::mt19937_64 rng(1);
    auto pt = random_point(rng, 6, 2, 0.0, GainConvention::power);
    const auto g = apv_gradient(pt.ch, BeamformerSet::zeros(6, 2), pt.st);
    EXPECT_EQ(g.lpNorm<Eigen::Infinity>(), 0.0);
}

TEST(ApvGradient, SingleAntennaMatchesScalarDerivative)
{
    std::mt19937_64 rng(2);
    auto pt = random_point(rng, 1, 1, 0.0, GainConvention::power);
    const auto g = apv_gradient(pt.ch, pt.w, pt.st);
    const auto fd = fd_gradient([&](const rvec& x) { return surrogate_in_positions(pt.s, x, pt.w, pt.st); }, pt.d, 1e-6);
    EXPECT_LE(std::abs(g(0) - fd(0)), 1e-5 * std::abs(fd(0)));
}

TEST(ApvGradient, SingleAntennaVanishesAtTangentAuxiliaries)
{
    std::mt19937_64 rng(2);
    auto pt = random_point(rng, 1, 2, 0.0, GainConvention::power);
    const auto st = initial_surrogate(pt.ch, pt.w, pt.s);
    const auto g = apv_gradient(pt.ch, pt.w, st);
    const auto scale = apv_gradient(pt.ch, pt.w, pt.st);
    EXPECT_LE(std::abs(g(0)), 1e-10 * std::abs(scale(0)));
}

TEST(ApvGradient, MatchesCentralDifferences)
{
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        const auto conv = trial % 2 ? GainConvention::power : GainConvention::amplitude;
        auto pt = random_point(rng, 8, 2, 0.0, conv);
        const rvec an = apv_gradient(pt.ch, pt.w, pt.st);
        const rvec fd = fd_gradient([&](const rvec& x) { return surrogate_in_positions(pt.s, x, pt.w, pt.st); }, pt.d, 1e-6);
        EXPECT_LE((an - fd).norm() / fd.norm(), 1e-5) << "trial " << trial;
    }
}

TEST(ApvGradient, MatchesCentralDifferencesMultiEve)
{
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        auto p = baseline_params(5, 3, 0.0, GainConvention::power);
        p.eavesdropper_angles = {p.sensing_angle, fasec::testing::random_angle(rng)};
        p.eavesdropper_distances = {80.0, 120.0};
        const Scenario s(p);
        const rvec d = random_layout(rng, s);
        const auto ch = build_channels(s, d);
        const auto w = random_beamformers(rng, 5, 3, 1.0);
        const auto st = initial_surrogate(ch, random_beamformers(rng, 5, 3, 0.3), s);
        const rvec an = apv_gradient(ch, w, st);
        const rvec fd = fd_gradient([&](const rvec& x) { return surrogate_in_positions(s, x, w, st); }, d, 1e-6);
        EXPECT_LE((an - fd).norm() / fd.norm(), 1e-5) << "trial " << trial;
    }
}

// ---------------------------------------------------------------- Taylor minorant

TEST(TaylorBound, TightAtCenterAndGlobalMinorant)
{
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 0.1);
    for (int trial = 0; trial < 10; ++trial) {
        auto pt = random_point(rng, 3 + trial % 6, 2, 0.0, GainConvention::amplitude);
        const auto& p = pt.s.params();
        const auto tb = build_taylor_bound(pt.w, pt.d, p.sensing_angle, p.wavelength);
        const double at_center = probing_power(pt.d, pt.w, p.sensing_angle, p.wavelength);
        EXPECT_LE(rel_err(tb.evaluate(pt.d), at_center), 1e-9);
        for (int i = 0; i < 10000; ++i) {
            rvec x(pt.d.size());
            for (auto& v : x) v = u(rng);
            ASSERT_LE(tb.evaluate(x), probing_power(x, pt.w, p.sensing_angle, p.wavelength) + 1e-9);
        }
    }
}

TEST(TaylorBound, QuadraticPartIsNegativeSemidefinite)
{
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 20; ++trial) {
        auto pt = random_point(rng, 2 + trial % 7, 1 + trial % 3, 0.0, GainConvention::power);
        const auto tb = build_taylor_bound(pt.w, pt.d, pt.s.params().sensing_angle, 0.01);
        Eigen::SelfAdjointEigenSolver<rmat> es(tb.Q, Eigen::EigenvaluesOnly);
        EXPECT_LE(es.eigenvalues().maxCoeff(), 1e-10 * std::abs(es.eigenvalues().minCoeff()));
        EXPECT_LT((tb.Q - tb.Q.transpose()).norm(), 1e-12 * tb.Q.norm());
    }
}

TEST(TaylorBound, SingleAntennaIsConstant)
{
    std::mt19937_64 rng(7);
    const auto w = random_beamformers(rng, 1, 3, 0.7);
    rvec c(1);
    c << 0.03;
    const auto tb = build_taylor_bound(w, c, deg_to_rad(60), 0.01);
    EXPECT_EQ(tb.Q(0, 0), 0.0);
    rvec x(1);
    x << 0.08;
    EXPECT_NEAR(tb.evaluate(x), 0.7, 1e-14);
}

// ---------------------------------------------------------------- projection

TEST(ProjectFeasible, FeasiblePointIsFixed)
{
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 10; ++trial) {
        auto pt = random_point(rng, 6, 2, 0.0, GainConvention::amplitude);
        const auto& p = pt.s.params();
        const auto tb = build_taylor_bound(pt.w, pt.d, p.sensing_angle, p.wavelength);
        auto q = p;
        q.probing_threshold = 0.5 * tb.evaluate(pt.d);
        const auto r = project_feasible(pt.d, tb, Scenario(q));
        EXPECT_FALSE(r.relaxed_set_empty);
        EXPECT_LT((r.d - pt.d).lpNorm<Eigen::Infinity>(), 1e-8);
    }
}

TEST(ProjectFeasible, TwoPointIsotonicExample)
{
    auto p = baseline_params(2, 1, 0.0);
    p.min_spacing = 0.2 * p.aperture_length;
    const Scenario s(p);
    const double L = p.aperture_length;
    rvec kappa(2);
    kappa << 0.6 * L, 0.6 * L;
    TaylorBound tb;
    tb.Q = rmat::Zero(2, 2);
    tb.p = rvec::Zero(2);
    const auto r = project_feasible(kappa, tb, s);
    EXPECT_NEAR(r.d(0), 0.5 * L, 1e-10);
    EXPECT_NEAR(r.d(1), 0.7 * L, 1e-10);
}

TEST(ProjectFeasible, ChainOnlyMatchesGridProjection)
{
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-0.02, 0.12);
    auto p = baseline_params(3, 1, 0.0);
    const Scenario s(p);
    TaylorBound tb;
    tb.Q = rmat::Zero(3, 3);
    tb.p = rvec::Zero(3);
    for (int trial = 0; trial < 5; ++trial) {
        rvec kappa(3);
        for (auto& v : kappa) v = u(rng);
        const auto r = project_feasible(kappa, tb, s);
        const auto grid = grid_project(kappa, {p.aperture_length, p.min_spacing, {}, 0.0}, 1e-3 * p.aperture_length);
        ASSERT_TRUE(grid.has_value());
        EXPECT_LE((r.d - *grid).lpNorm<Eigen::Infinity>(), 1e-3 * p.aperture_length);
    }
}

TEST(ProjectFeasible, ActiveProbingMatchesGridOracle)
{
    std::mt19937_64 rng(10);
    std::uniform_real_distribution<double> u(0.0, 0.1);
    int cases = 0;
    while (cases < 10) {
        auto pt = random_point(rng, 2, 1, 0.0, GainConvention::amplitude);
        auto p = pt.s.params();
        const auto tb = build_taylor_bound(pt.w, pt.d, p.sensing_angle, p.wavelength);
        rvec kappa(2);
        kappa << u(rng), u(rng);
        const double gk = tb.evaluate(detail::snap_to_chain(kappa, p.aperture_length, p.min_spacing));
        const double gc = tb.evaluate(pt.d);
        if (!(gc > 1.05 * gk) || gk <= 0) continue;
        p.probing_threshold = 0.5 * (gk + gc);
        const Scenario s(p);
        const auto r = project_feasible(kappa, tb, s);
        ASSERT_FALSE(r.relaxed_set_empty);
        EXPECT_GE(tb.evaluate(r.d), p.probing_threshold * (1 - 1e-8));
        EXPECT_LE(apv_violation(r.d, p.aperture_length, p.min_spacing), 1e-12);
        const auto grid = grid_project(kappa,
                                       {p.aperture_length, p.min_spacing, [&](const rvec& x) { return tb.evaluate(x); },
                                        p.probing_threshold},
                                       1e-3 * p.aperture_length);
        ASSERT_TRUE(grid.has_value());
        EXPECT_LE((r.d - *grid).lpNorm<Eigen::Infinity>(), 1e-3 * p.aperture_length) << "case " << cases;
        ++cases;
    }
}

TEST(ProjectFeasible, IdempotentAndSatisfiesConstraints)
{
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-0.01, 0.11);
    for (int trial = 0; trial < 20; ++trial) {
        auto pt = random_point(rng, 4 + trial % 5, 2, 0.0, GainConvention::amplitude);
        auto p = pt.s.params();
        const auto tb = build_taylor_bound(pt.w, pt.d, p.sensing_angle, p.wavelength);
        p.probing_threshold = 0.9 * tb.evaluate(pt.d);
        const Scenario s(p);
        rvec kappa(pt.d.size());
        for (auto& v : kappa) v = u(rng);
        const auto r = project_feasible(kappa, tb, s);
        if (r.relaxed_set_empty) continue;
        EXPECT_LE(apv_violation(r.d, p.aperture_length, p.min_spacing), 1e-8);
        EXPECT_GE(tb.evaluate(r.d), p.probing_threshold - 1e-8);
        // minorant property carries feasibility over to the true probing power
        EXPECT_GE(probing_power(r.d, pt.w, p.sensing_angle, p.wavelength), p.probing_threshold - 1e-8);
        const auto again = project_feasible(r.d, tb, s);
        EXPECT_LT((again.d - r.d).lpNorm<Eigen::Infinity>(), 1e-8);
    }
}

TEST(ProjectFeasible, UnreachableThresholdIsFlagged)
{
    std::mt19937_64 rng(12);
    auto pt = random_point(rng, 4, 2, 0.0, GainConvention::amplitude);
    auto p = pt.s.params();
    const auto tb = build_taylor_bound(pt.w, pt.d, p.sensing_angle, p.wavelength);
    p.probing_threshold = 10.0 * pt.w.total_power() * 4; // above M |w|^2, out of reach
    const auto r = project_feasible(pt.d, tb, Scenario(p));
    EXPECT_TRUE(r.relaxed_set_empty);
    EXPECT_LE(apv_violation(r.d, p.aperture_length, p.min_spacing), 1e-12);
}

TEST(GridProject, EmptyGridIsSignalled)
{
    rvec kappa(2);
    kappa << 0.01, 0.02;
    GridConstraint c{0.1, 0.005, [](const rvec&) { return 0.0; }, 1.0};
    EXPECT_FALSE(grid_project(kappa, c, 1e-3).has_value());
    EXPECT_THROW(grid_project(rvec::Zero(4), c, 1e-3), InvalidArgument);
}

// ---------------------------------------------------------------- EPG

TEST(Epg, MomentumSequence)
{
    EpgState st = EpgState::start(rvec::Zero(2), 0.0);
    advance_momentum(st);
    EXPECT_EQ(st.varsigma, 1.0);
    EXPECT_EQ(st.eta, 0.0);
    advance_momentum(st);
    EXPECT_NEAR(st.varsigma, 0.5 * (1 + std::sqrt(5.0)), 1e-15);
    EXPECT_NEAR(st.eta, 1 - 2 / (1 + std::sqrt(5.0)), 1e-15);
}

TEST(Epg, ZeroGradientIsFixedPoint)
{
    std::mt19937_64 rng(13);
    auto pt = random_point(rng, 5, 2, 0.0, GainConvention::amplitude);
    const auto w0 = BeamformerSet::zeros(5, 2);
    const auto in = EpgState::start(pt.d, surrogate_in_positions(pt.s, pt.d, w0, pt.st));
    const auto out = epg_step(in, pt.ch, w0, pt.st, pt.s);
    EXPECT_LT((out.d - pt.d).lpNorm<Eigen::Infinity>(), 1e-12);
}

TEST(Epg, AcceptedStepsDescendAndStayFeasible)
{
    std::mt19937_64 rng(14);
    for (int trial = 0; trial < 5; ++trial) {
        auto pt = random_point(rng, 6, 2, 0.0, GainConvention::power);
        auto p = pt.s.params();
        p.probing_threshold = 0.8 * probing_power(pt.d, pt.w, p.sensing_angle, p.wavelength);
        const Scenario s(p);
        EpgState st = EpgState::start(pt.d, surrogate_in_positions(s, pt.d, pt.w, pt.st));
        for (int i = 0; i < 100; ++i) {
            const auto next = epg_step(st, pt.ch, pt.w, pt.st, s);
            EXPECT_LE(next.value, st.value + 1e-9 * (1 + std::abs(st.value)));
            EXPECT_NEAR(next.value, surrogate_in_positions(s, next.d, pt.w, pt.st), 1e-12 * (1 + std::abs(next.value)));
            EXPECT_LE(apv_violation(next.d, p.aperture_length, p.min_spacing), 1e-9);
            EXPECT_GE(probing_power(next.d, pt.w, p.sensing_angle, p.wavelength), p.probing_threshold * (1 - 1e-6));
            st = next;
            if (st.stalled) break;
        }
    }
}

TEST(ApvBlock, SingleAntennaKeepsInitialPosition)
{
    std::mt19937_64 rng(15);
    auto pt = random_point(rng, 1, 1, 0.0, GainConvention::power);
    const auto r = solve_apv_block(pt.ch, pt.w, pt.st, pt.d, pt.s);
    EXPECT_LT(std::abs(r.d(0) - pt.d(0)), 1e-9);
}

TEST(ApvBlock, UniformStartDoesNotIncreaseSurrogate)
{
    std::mt19937_64 rng(16);
    for (int trial = 0; trial < 5; ++trial) {
        auto p = baseline_params(8, 2, 1.0, GainConvention::power);
        const Scenario s(p);
        const rvec d0 = uniform_layout(s);
        const auto ch = build_channels(s, d0);
        const auto w = restore_feasibility(random_beamformers(rng, 8, 2, 1.0), ch.sensing_steering(), 1.0, 1.0);
        const auto st = initial_surrogate(ch, w, s);
        const auto r = solve_apv_block(ch, w, st, d0, s);
        EXPECT_LE(surrogate_in_positions(s, r.d, w, st), surrogate_in_positions(s, d0, w, st));
        EXPECT_GE(probing_power(r.d, w, p.sensing_angle, p.wavelength), p.probing_threshold * (1 - 1e-6));
        for (std::size_t i = 1; i < r.trace.size(); ++i) EXPECT_LE(r.trace[i], r.trace[i - 1] + 1e-12);
    }
}
