// SPDX-License-Identifier: Apache-2.0
//
// cfmimo: uplink simulator for cell-free massive MIMO-OFDM with impaired access points
// Copyright (C) 2026 The cfmimo authors
// ------------------------------------------------------------------------

#include <gtest/gtest.h>

#include "cfmimo/receiver.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace cfmimo;
using cfmimo::testing::random_matrix;
using cfmimo::testing::random_psd;

namespace {

CVec random_vector(RandomStream& rng, Eigen::Index n) { return random_matrix(rng, n, 1).col(0); }

// Linear-chain statistics: B columns sqrt(p_k) g_k[m], C = sigma^2 I.
BussgangStatistics analytic_linear_statistics(const ChannelRealization& ch, const NetworkScenario& net)
{
    BussgangStatistics st;
    st.samples = 0;
    const double sigma2 = net.config.radio.noise_power_w();
    for (int m = 0; m < ch.M; ++m) {
        st.gain.push_back(linear_gain(ch, net, m));
        st.distortion.push_back(sigma2 * CMat::Identity(st.gain.back().rows(), st.gain.back().rows()));
    }
    return st;
}

} // namespace

TEST(Combiner, SingleUserIsMaximumRatio)
{
    RandomStream rng(1);
    const CMat B = random_matrix(rng, 5, 1);
    const double sigma2 = 0.3;
    const CVec v = optimal_combiner(B, sigma2 * CMat::Identity(5, 5), 0);
    EXPECT_LT((v - B.col(0) / sigma2).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Combiner, SinrScaleInvariance)
{
    RandomStream rng(2);
    const CMat B = random_matrix(rng, 4, 3);
    const CMat C = random_psd(rng, 4, 4);
    const CVec v = random_vector(rng, 4);
    const double g = sinr(v, B, C, 1);
    for (cd c : {cd(2.0, 0.0), cd(0.0, -3.0), cd(1e-6, 1e-6)})
        EXPECT_NEAR(sinr(c * v, B, C, 1) / g, 1.0, 1e-12);
    // B -> sqrt(c) B, C -> c C: v* -> v* / sqrt(c), optimal SINR unchanged.
    const double c = 4.0;
    const CVec v1 = optimal_combiner(B, C, 0);
    const CVec v2 = optimal_combiner(std::sqrt(c) * B, c * C, 0);
    EXPECT_LT((std::sqrt(c) * v2 - v1).norm() / v1.norm(), 1e-12);
    EXPECT_NEAR(sinr(v2, std::sqrt(c) * B, c * C, 0) / sinr(v1, B, C, 0), 1.0, 1e-12);
    EXPECT_THROW(sinr(CVec::Zero(4), B, C, 0), std::invalid_argument);
}

TEST(Combiner, BruteForceOptimality)
{
    RandomStream rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const CMat B = random_matrix(rng, 4, 2);
        const CMat C = random_psd(rng, 4, 4);
        for (int k = 0; k < 2; ++k) {
            const double best = sinr(optimal_combiner(B, C, k), B, C, k);
            for (int i = 0; i < 1000; ++i) {
                CVec v = random_vector(rng, 4);
                v.normalize();
                EXPECT_LE(sinr(v, B, C, k), best * (1.0 + 1e-12));
            }
        }
    }
}

TEST(Combiner, ClosedFormIdentity)
{
    RandomStream rng(4);
    for (int trial = 0; trial < 120; ++trial) {
        const int n = 2 + trial % 7;
        const int K = 1 + trial % 4;
        const CMat B = random_matrix(rng, n, K);
        const CMat C = random_psd(rng, n, n) + 1e-3 * CMat::Identity(n, n);
        const int k = trial % K;
        const double via_sinr = sinr(optimal_combiner(B, C, k), B, C, k);
        const double closed = optimal_sinr_closed_form(B, C, k);
        const double oracle_value = oracle::quadratic_form_inverse(interference_plus_distortion(B, C, k), B.col(k));
        EXPECT_NEAR(via_sinr / closed, 1.0, 1e-9);
        EXPECT_NEAR(closed / oracle_value, 1.0, 1e-9);
    }
}

TEST(Combiner, OrthogonalMatchedFilter)
{
    CMat B = CMat::Zero(3, 2);
    B(0, 0) = cd(2.0, 1.0);
    B(1, 1) = cd(0.0, 3.0);
    const double sigma2 = 0.5;
    const CMat C = sigma2 * CMat::Identity(3, 3);
    EXPECT_NEAR(sinr(B.col(0), B, C, 0), B.col(0).squaredNorm() / sigma2, 1e-12);
}

TEST(Combiner, SingularStatisticsFallBackOrThrow)
{
    SolveCounter counter;
    CMat B = CMat::Zero(3, 2);
    B(0, 0) = 1.0;
    B(0, 1) = 1.0;
    // Rank-deficient interference-plus-distortion: pseudo-inverse path.
    const CVec v = optimal_combiner(B, CMat::Zero(3, 3), 0, 7, &counter);
    EXPECT_EQ(counter.fallbacks.load(), 1u);
    EXPECT_TRUE(v.allFinite());

    const CMat lone = CMat::Identity(3, 1);
    try {
        optimal_combiner(lone, CMat::Zero(3, 3), 0, 5, &counter);
        FAIL() << "expected SolveError";
    } catch (const SolveError& e) {
        EXPECT_EQ(e.subcarrier(), 5);
    }
    EXPECT_THROW(optimal_combiner(lone, CMat::Zero(3, 3), 1), std::invalid_argument);
}

TEST(Unaware, SingleUserIsChannelMatched)
{
    const ScenarioConfig cfg = cfmimo::testing::small_config(2, 2, 1, 8, 2);
    const auto in = cfmimo::testing::make_instance(cfg, 2);
    for (int m = 0; m < 8; ++m) {
        const CVec v = unaware_combiner(in.ch, in.net, m, 0);
        const CVec g = in.ch.stacked(0, m);
        const cd c = (g.adjoint() * v)(0, 0) / g.squaredNorm();
        EXPECT_LT((v - c * g).norm() / v.norm(), 1e-10);
    }
}

TEST(Unaware, EqualsAwareUnderLinearStatistics)
{
    const ScenarioConfig cfg = cfmimo::testing::small_config(3, 2, 4, 16, 3);
    const auto in = cfmimo::testing::make_instance(cfg, 3);
    const auto st = analytic_linear_statistics(in.ch, in.net);
    const auto aware = evaluate_se(&st, in.ch, in.net, CombinerKind::DistortionAware);
    const auto unaware = evaluate_se(&st, in.ch, in.net, CombinerKind::DistortionUnaware);
    const auto perfect = evaluate_se(nullptr, in.ch, in.net, CombinerKind::PerfectHardware);
    for (int k = 0; k < 4; ++k)
        for (int m = 0; m < 16; ++m) {
            EXPECT_NEAR(unaware.se(k, m) / aware.se(k, m), 1.0, 1e-6);
            EXPECT_NEAR(perfect.se(k, m) / aware.se(k, m), 1.0, 1e-9);
        }
}

TEST(Unaware, NeverBeatsAwareOnSameStatistics)
{
    const ScenarioConfig cfg = cfmimo::testing::small_config(2, 2, 3, 16, 3);
    const auto in = cfmimo::testing::make_instance(cfg, 4);
    const auto fe = make_front_end(in.corr, cfg);
    const auto st = estimate_statistics(in.ch, in.net, fe, 64, 5);
    const auto aware = evaluate_se(&st, in.ch, in.net, CombinerKind::DistortionAware);
    const auto unaware = evaluate_se(&st, in.ch, in.net, CombinerKind::DistortionUnaware);
    for (int k = 0; k < 3; ++k)
        for (int m = 0; m < 16; ++m) {
            EXPECT_GE(aware.se(k, m), unaware.se(k, m) - 1e-12);
            EXPECT_GE(unaware.se(k, m), 0.0);
            EXPECT_TRUE(std::isfinite(aware.se(k, m)));
            const double closed = spectral_efficiency(optimal_sinr_closed_form(
                st.gain[static_cast<std::size_t>(m)], st.distortion[static_cast<std::size_t>(m)], k));
            EXPECT_NEAR(aware.se(k, m), closed, 1e-9 * std::max(1.0, closed));
        }
    EXPECT_EQ(aware.failures(), 0u);
    EXPECT_THROW(evaluate_se(nullptr, in.ch, in.net, CombinerKind::DistortionAware), std::invalid_argument);
}

TEST(Perfect, ScalarChannel)
{
    ScenarioConfig cfg = cfmimo::testing::small_config(1, 1, 1, 4, 1);
    const auto in = cfmimo::testing::make_instance(cfg, 6);
    const auto se = perfect_hardware_se(in.ch, in.net);
    const double sigma2 = cfg.radio.noise_power_w();
    for (int m = 0; m < 4; ++m) {
        const double gamma = cfg.uplink_power(0) * std::norm(in.ch.stacked(0, m)(0)) / sigma2;
        EXPECT_NEAR(se.se(0, m), std::log2(1.0 + gamma), 1e-9 * std::max(1.0, se.se(0, m)));
    }
}

TEST(Perfect, MonotoneInOwnPower)
{
    ScenarioConfig cfg = cfmimo::testing::small_config(2, 2, 3, 8, 2);
    auto in = cfmimo::testing::make_instance(cfg, 7);
    const auto base = perfect_hardware_se(in.ch, in.net);
    in.net.config.radio.uplink_power_w[1] *= 2.0;
    const auto boosted = perfect_hardware_se(in.ch, in.net);
    for (int m = 0; m < 8; ++m)
        EXPECT_GT(boosted.se(1, m), base.se(1, m));
}

TEST(SpectralEfficiency, SpotValues)
{
    EXPECT_EQ(spectral_efficiency(0.0), 0.0);
    EXPECT_EQ(spectral_efficiency(1.0), 1.0);
    EXPECT_NEAR(spectral_efficiency(3.0), 2.0, 1e-15);

    SEResult r;
    r.se = RMat(1, 3);
    r.se << 1.0, std::numeric_limits<double>::quiet_NaN(), 3.0;
    EXPECT_DOUBLE_EQ(r.average(0), 2.0);
    EXPECT_EQ(r.failures(), 1u);
}

TEST(CombinerKindNames, RoundTrip)
{
    for (auto k : {CombinerKind::DistortionAware, CombinerKind::DistortionUnaware, CombinerKind::PerfectHardware})
        EXPECT_EQ(parse_combiner(to_string(k)), k);
    EXPECT_THROW(parse_combiner("mrc"), std::invalid_argument);
}
