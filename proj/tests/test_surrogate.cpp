#include <gtest/gtest.h>
#include <Eigen/Eigenvalues>
#include <fasec/surrogate.hpp>
#include "test_support.hpp"

using namespace fasec;
using fasec::testing::baseline_params;
using fasec::testing::rel_err;

namespace {

// Literal evaluation of every user/eve bound term from the auxiliaries.
double oracle_surrogate(const ChannelSet& ch, const BeamformerSet& w, const SurrogateState& st, const Scenario& s)
{
    const auto& p = s.params();
    const int K = static_cast<int>(w.num_users());
    double F = 0;
    auto power = [&](const cvec& h, int skip) {
        double acc = 0;
        for (int i = 0; i < K; ++i)
            if (i != skip) acc += std::norm(h.dot(w.w.col(i)));
        return acc;
    };
    for (int k = 0; k < K; ++k) {
        const cvec& h = ch.users[k].channel;
        const complex_t c = h.dot(w.w.col(k));
        const double mse = 1 - 2 * (std::conj(st.u(k)) * c).real() + std::norm(st.u(k)) * (power(h, -1) + p.noise_user[k]);
        F += st.rho(k) * mse - std::log(st.rho(k)) - 1;
    }
    const double se = p.noise_eve;
    for (std::size_t q = 0; q < st.eves.size(); ++q) {
        const cvec& h = ch.eves[q].channel;
        const auto& ea = st.eves[q];
        const double S = power(h, -1);
        for (int k = 0; k < K; ++k) {
            F += ea.tau(k) * (S + se) - std::log(ea.tau(k)) - 1;
            const double omega = 1 / (se * ea.eta(k) * ea.tau(k));
            complex_t cross = 0;
            double vn = 0;
            for (int i = 0; i < K; ++i) {
                if (i == k) continue;
                const complex_t v = -imag_unit * ea.eta(k) * ea.xi(i);
                cross += std::conj(v) * h.dot(w.w.col(i));
                vn += std::norm(v);
            }
            const double mse = 1 - 2 * cross.real() + vn * (power(h, k) + se);
            F += omega * mse - std::log(omega) - 1 - std::log(se);
        }
    }
    return F;
}

// -ln(1+g_k) + sum_q ln(1+g_{q,k}); the function the surrogate majorizes.
double target_objective(const ChannelSet& ch, const BeamformerSet& w, const Scenario& s)
{
    const auto& p = s.params();
    double acc = 0;
    for (Eigen::Index k = 0; k < w.num_users(); ++k) {
        acc -= std::log1p(user_sinr(ch, w, k, p.noise_user[k]));
        for (std::size_t q = 0; q < ch.eves.size(); ++q) acc += std::log1p(eve_sinr(ch, w, k, p.noise_eve, q));
    }
    return acc;
}

struct Instance
{
    Scenario s;
    ChannelSet ch;
    BeamformerSet w;
};

Instance random_instance(std::mt19937_64& rng, int M, int K, GainConvention conv, int extra_eves = 0)
{
    auto p = baseline_params(M, K, 0.5, conv);
    for (int k = 0; k < K; ++k) p.user_angles[k] = fasec::testing::random_angle(rng);
    p.sensing_angle = fasec::testing::random_angle(rng);
    p.eavesdropper_angles = {p.sensing_angle};
    for (int e = 0; e < extra_eves; ++e) p.eavesdropper_angles.push_back(fasec::testing::random_angle(rng));
    Scenario s(p);
    auto ch = build_channels(s, fasec::testing::random_layout(rng, s));
    auto w = fasec::testing::random_beamformers(rng, M, K, p.power_budget);
    return {std::move(s), std::move(ch), std::move(w)};
}

} // namespace

TEST(Auxiliaries, RhoAndEtaIdentities)
{
    std::mt19937_64 rng(21);
    for (auto conv : {GainConvention::amplitude, GainConvention::power}) {
        for (int trial = 0; trial < 40; ++trial) {
            auto in = random_instance(rng, 4 + trial % 5, 1 + trial % 4, conv, trial % 3);
            const auto st = initial_surrogate(in.ch, in.w, in.s);
            const auto& p = in.s.params();
            for (Eigen::Index k = 0; k < in.w.num_users(); ++k) {
                EXPECT_LT(rel_err(st.rho(k), 1 + user_sinr(in.ch, in.w, k, p.noise_user[k])), 1e-10);
                for (std::size_t q = 0; q < st.eves.size(); ++q) {
                    EXPECT_LT(rel_err(st.eves[q].eta(k), 1 + eve_sinr(in.ch, in.w, k, p.noise_eve, q)), 1e-10);
                }
            }
        }
    }
}

TEST(Auxiliaries, ZeroBeamformers)
{
    const Scenario s(baseline_params(4, 3, 0.5));
    const auto ch = build_channels(s, uniform_layout(s));
    const auto st = initial_surrogate(ch, BeamformerSet::zeros(4, 3), s);
    EXPECT_EQ(st.u.norm(), 0.0);
    EXPECT_EQ(st.eves[0].xi.norm(), 0.0);
    EXPECT_LT((st.rho - rvec::Ones(3)).norm(), 1e-15);
    EXPECT_LT((st.eves[0].eta - rvec::Ones(3)).norm(), 1e-15);
    EXPECT_EQ(st.A.norm(), 0.0);
    EXPECT_EQ(st.b.norm(), 0.0);
}

TEST(Surrogate, MatchesLiteralTermEvaluation)
{
    std::mt19937_64 rng(22);
    for (int trial = 0; trial < 40; ++trial) {
        auto in = random_instance(rng, 3 + trial % 6, 1 + trial % 4, GainConvention::power, trial % 2);
        const auto st = initial_surrogate(in.ch, in.w, in.s);
        // evaluate away from the expansion point as well
        const auto w2 = fasec::testing::random_beamformers(rng, in.w.num_antennas(), in.w.num_users(), 0.6);
        for (const BeamformerSet* w : {static_cast<const BeamformerSet*>(&in.w), &w2}) {
            const double o = oracle_surrogate(in.ch, *w, st, in.s);
            EXPECT_NEAR(eval_surrogate(in.ch, *w, st).total(), o, 1e-9 * (1 + std::abs(o)));
            EXPECT_NEAR(eval_surrogate_from_caches(*w, st), o, 1e-9 * (1 + std::abs(o)));
        }
    }
}

TEST(Surrogate, TightAtAuxiliaryOptimum)
{
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 30; ++trial) {
        auto in = random_instance(rng, 4 + trial % 4, 1 + trial % 3, GainConvention::power);
        const auto st = initial_surrogate(in.ch, in.w, in.s);
        const auto r = evaluate_metrics(in.s, in.ch, in.w);
        EXPECT_NEAR(eval_surrogate(in.ch, in.w, st).total(), -std::log(2.0) * r.unclamped_sum_secrecy,
                    1e-9 * (1 + std::abs(r.unclamped_sum_secrecy)));
    }
    // low-SNR regime: absolute agreement far below the rate magnitude
    for (int trial = 0; trial < 10; ++trial) {
        auto in = random_instance(rng, 8, 2, GainConvention::amplitude);
        const auto st = initial_surrogate(in.ch, in.w, in.s);
        const auto r = evaluate_metrics(in.s, in.ch, in.w);
        EXPECT_NEAR(eval_surrogate(in.ch, in.w, st).total(), -std::log(2.0) * r.unclamped_sum_secrecy, 1e-13);
    }
}

TEST(Surrogate, MajorizesTargetEverywhere)
{
    std::mt19937_64 rng(24);
    for (int trial = 0; trial < 30; ++trial) {
        auto in = random_instance(rng, 4, 1 + trial % 4, GainConvention::power, trial % 2);
        const auto st = initial_surrogate(in.ch, in.w, in.s);
        for (int j = 0; j < 20; ++j) {
            const auto w2 = fasec::testing::random_beamformers(rng, 4, in.w.num_users(), std::exp(j % 5 - 2.0));
            const double f = eval_surrogate(in.ch, w2, st).total();
            const double t = target_objective(in.ch, w2, in.s);
            EXPECT_GE(f, t - 1e-9 * (1 + std::abs(t)));
        }
    }
}

TEST(Surrogate, AuxiliaryUpdateIsBlockOptimal)
{
    std::mt19937_64 rng(25);
    for (int trial = 0; trial < 50; ++trial) {
        auto in = random_instance(rng, 4 + trial % 5, 1 + trial % 4, GainConvention::power, trial % 2);
        auto st = initial_surrogate(in.ch, in.w, in.s);
        const auto w2 = fasec::testing::random_beamformers(rng, in.w.num_antennas(), in.w.num_users(), 0.8);
        const double before = eval_surrogate(in.ch, w2, st).total();
        update_auxiliaries(in.ch, w2, st, in.s);
        const double after = eval_surrogate(in.ch, w2, st).total();
        EXPECT_LE(after, before + 1e-9);
    }
}

TEST(Surrogate, CachesHermitianPsd)
{
    std::mt19937_64 rng(26);
    for (int trial = 0; trial < 20; ++trial) {
        auto in = random_instance(rng, 6, 3, trial % 2 ? GainConvention::power : GainConvention::amplitude, 1);
        const auto st = initial_surrogate(in.ch, in.w, in.s);
        for (const cmat* m : {&st.A, &st.T, &st.E}) {
            const double scale = std::max(m->norm(), 1e-300);
            EXPECT_LT((*m - m->adjoint()).norm() / scale, 1e-12);
            Eigen::SelfAdjointEigenSolver<cmat> es(*m);
            EXPECT_GE(es.eigenvalues().minCoeff(), -1e-12 * scale);
        }
        for (const auto& ek : st.E_k) {
            Eigen::SelfAdjointEigenSolver<cmat> es(ek);
            EXPECT_GE(es.eigenvalues().minCoeff(), -1e-12 * std::max(ek.norm(), 1e-300));
        }
        for (Eigen::Index k = 0; k < 3; ++k) {
            Eigen::SelfAdjointEigenSolver<cmat> es(st.stream_operator(k));
            EXPECT_GE(es.eigenvalues().minCoeff(), -1e-12 * st.stream_operator(k).norm());
        }
    }
}

TEST(Surrogate, RankOneUserOperator)
{
    auto p = baseline_params(4, 1, 0.5, GainConvention::power);
    const Scenario s(p);
    const auto ch = build_channels(s, uniform_layout(s));
    SurrogateState st;
    st.u = cvec::Constant(1, complex_t(0.6, 0.8));
    st.rho = rvec::Ones(1);
    st.eves = {EveAuxiliaries{cvec::Zero(1), rvec::Ones(1), rvec::Ones(1)}};
    rebuild_caches(ch, st, s);
    const cvec& h = ch.users[0].channel;
    EXPECT_LT((st.A - h * h.adjoint()).norm() / st.A.norm(), 1e-14);
    Eigen::SelfAdjointEigenSolver<cmat> es(st.A);
    EXPECT_LT(std::abs(es.eigenvalues()(2)), 1e-12 * st.A.norm());
}

TEST(Surrogate, SingleUserHasNoCrossTerm)
{
    std::mt19937_64 rng(27);
    auto in = random_instance(rng, 5, 1, GainConvention::power);
    const auto st = initial_surrogate(in.ch, in.w, in.s);
    EXPECT_EQ(st.E.norm(), 0.0);
    EXPECT_EQ(st.g.norm(), 0.0);
}

TEST(Surrogate, RejectsNonpositiveAuxiliaries)
{
    const Scenario s(baseline_params(4, 1, 0.5));
    const auto ch = build_channels(s, uniform_layout(s));
    SurrogateState st;
    st.u = cvec::Zero(1);
    st.rho = rvec::Constant(1, -1.0);
    st.eves = {EveAuxiliaries{cvec::Zero(1), rvec::Ones(1), rvec::Ones(1)}};
    EXPECT_THROW(rebuild_caches(ch, st, s), NumericalError);
    st.rho = rvec::Ones(1);
    st.eves[0].eta(0) = 0;
    EXPECT_THROW(rebuild_caches(ch, st, s), NumericalError);
}
