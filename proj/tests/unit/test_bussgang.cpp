// SPDX-License-Identifier: Apache-2.0
//
// cfmimo: uplink simulator for cell-free massive MIMO-OFDM with impaired access points
// Copyright (C) 2026 The cfmimo authors
// ------------------------------------------------------------------------

#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "cfmimo/bussgang.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace cfmimo;
using cfmimo::testing::Instance;

namespace {

struct Rig {
    ScenarioConfig cfg;
    Instance in;
    ReceiverFrontEnd fe;
};

Rig make_setup(int L, int N, int K, int M, int R, ImpairmentToggles toggles, std::uint64_t seed)
{
    Rig s;
    s.cfg = cfmimo::testing::small_config(L, N, K, M, R);
    s.cfg.impairments.toggles = toggles;
    s.in = cfmimo::testing::make_instance(s.cfg, seed);
    s.in.net.config = s.cfg;
    s.fe = make_front_end(s.in.corr, s.cfg);
    return s;
}

// sum_k sqrt(p_k) g_k[m] s_k[m] with g from the brute-force tap DFT.
CVec linear_oracle(const Rig& s, const CMat& symbols, int m)
{
    const auto& ch = s.in.ch;
    CVec y = CVec::Zero(static_cast<Eigen::Index>(ch.L) * ch.N);
    for (int k = 0; k < ch.K; ++k)
        for (int l = 0; l < ch.L; ++l)
            y.segment(l * ch.N, ch.N) +=
                std::sqrt(s.cfg.uplink_power(k)) * oracle::tap_dft(ch.tap_matrix(k, l), m, ch.M) * symbols(k, m);
    return y;
}

double relative_gain_error(const BussgangStatistics& st, const Rig& s)
{
    double worst = 0.0;
    for (int m = 0; m < s.in.ch.M; ++m)
        for (int k = 0; k < s.in.ch.K; ++k) {
            const CVec ref = std::sqrt(s.cfg.uplink_power(k)) * s.in.ch.stacked(k, m);
            worst = std::max(worst, (st.gain[static_cast<std::size_t>(m)].col(k) - ref).norm() / ref.norm());
        }
    return worst;
}

} // namespace

TEST(ChainOnce, LinearChainMatchesOracle)
{
    for (int M : {8, 64})
        for (int R : {1, 4}) {
            const Rig s = make_setup(2, 3, 3, M, R, ImpairmentToggles::none(), 100 + M + R);
            const ChainSample smp = run_chain_once(s.in.ch, s.in.net, s.fe, 5, false);
            ASSERT_EQ(smp.received.rows(), 6);
            ASSERT_EQ(smp.received.cols(), M);
            double scale = 0.0;
            for (int m = 0; m < M; ++m)
                scale = std::max(scale, linear_oracle(s, smp.symbols, m).cwiseAbs().maxCoeff());
            for (int m = 0; m < M; ++m)
                EXPECT_LT((smp.received.col(m) - linear_oracle(s, smp.symbols, m)).cwiseAbs().maxCoeff(), 1e-9 * scale);
        }
}

TEST(ChainOnce, DeterministicUnderSeed)
{
    const Rig s = make_setup(2, 2, 2, 16, 3, {}, 1);
    const auto a = run_chain_once(s.in.ch, s.in.net, s.fe, 77);
    const auto b = run_chain_once(s.in.ch, s.in.net, s.fe, 77);
    const auto c = run_chain_once(s.in.ch, s.in.net, s.fe, 78);
    EXPECT_EQ(a.symbols, b.symbols);
    EXPECT_EQ(a.received, b.received);
    EXPECT_NE(a.received, c.received);
}

TEST(ChainOnce, NoUsersLeavesWhiteNoise)
{
    const ScenarioConfig cfg = cfmimo::testing::small_config(2, 2, 1, 16, 2);
    NetworkScenario net;
    net.config = cfg;
    net.config.radio.uplink_power_w.clear();
    ChannelRealization ch;
    ch.L = 2;
    ch.N = 2;
    ch.R = 2;
    ch.M = 16;
    ch.refresh_frequency();
    ReceiverFrontEnd fe;
    fe.params.toggles = ImpairmentToggles::none();
    fe.antennas_per_ap = 2;

    const double sigma2 = cfg.radio.noise_power_w();
    double acc = 0.0;
    const int runs = 1000;
    for (int t = 0; t < runs; ++t)
        acc += run_chain_once(ch, net, fe, static_cast<std::uint64_t>(t)).received.squaredNorm();
    EXPECT_NEAR(acc / (runs * 4.0 * 16.0) / sigma2, 1.0, 0.03);
}

TEST(Statistics, GainConvergesToLinearChannel)
{
    const Rig s = make_setup(2, 2, 2, 16, 3, ImpairmentToggles::none(), 3);
    const int T = 1000;
    const auto st = estimate_statistics(s.in.ch, s.in.net, s.fe, T, 9, false);
    EXPECT_EQ(st.samples, T);
    EXPECT_LT(relative_gain_error(st, s), 5.0 / std::sqrt(T));
}

TEST(Statistics, DistortionIsWhiteNoiseWithoutImpairments)
{
    const Rig s = make_setup(2, 2, 2, 16, 3, ImpairmentToggles::none(), 4);
    const int T = 1000;
    const auto st = estimate_statistics(s.in.ch, s.in.net, s.fe, T, 10);
    const double sigma2 = s.cfg.radio.noise_power_w();
    EXPECT_LT(relative_gain_error(st, s), 0.1);
    for (const auto& C : st.distortion) {
        CMat off = C;
        off.diagonal().setZero();
        EXPECT_LT(off.cwiseAbs().maxCoeff(), 5.0 * sigma2 / std::sqrt(T));
        for (Eigen::Index i = 0; i < C.rows(); ++i)
            EXPECT_NEAR(C(i, i).real() / sigma2, 1.0, 5.0 / std::sqrt(T));
    }
}

TEST(Statistics, ResidualExactlyOrthogonalToSymbols)
{
    const Rig s = make_setup(2, 2, 2, 16, 3, {}, 5);
    const int T = 300;
    const auto st = estimate_statistics(s.in.ch, s.in.net, s.fe, T, 11);
    const auto xc = residual_signal_correlation(st, s.in.ch, s.in.net, s.fe, 11);
    for (int m = 0; m < 16; ++m) {
        const double scale = st.gain[static_cast<std::size_t>(m)].cwiseAbs().maxCoeff();
        EXPECT_LT(xc[static_cast<std::size_t>(m)].cwiseAbs().maxCoeff(), 1e-8 * scale);
    }
}

TEST(Statistics, DistortionHermitianPsd)
{
    const Rig s = make_setup(2, 2, 3, 16, 3, {}, 6);
    const auto st = estimate_statistics(s.in.ch, s.in.net, s.fe, 64, 12);
    for (const auto& C : st.distortion) {
        EXPECT_LT((C - C.adjoint()).cwiseAbs().maxCoeff(), 1e-12 * C.cwiseAbs().maxCoeff());
        Eigen::SelfAdjointEigenSolver<CMat> es(C);
        EXPECT_GE(es.eigenvalues().minCoeff(), -1e-8 * C.trace().real());
    }
}

TEST(Statistics, ErrorShrinksLikeInverseRootT)
{
    ScenarioConfig cfg = cfmimo::testing::small_config(1, 2, 2, 8, 2);
    cfg.impairments.pn_variance_form = PhaseNoiseVarianceForm::Ar1Stationary;
    cfg.resolve();
    const Instance in = cfmimo::testing::make_instance(cfg, 7);
    const auto fe = make_front_end(in.corr, cfg);
    const int T = 100;
    std::vector<double> e1, e2;
    for (int rep = 0; rep < 24; ++rep) {
        const std::uint64_t base = derive_seed(99, rep);
        const auto ref = estimate_statistics(in.ch, in.net, fe, 8 * T, derive_seed(base, 0));
        const auto a = estimate_statistics(in.ch, in.net, fe, T, derive_seed(base, 1));
        const auto b = estimate_statistics(in.ch, in.net, fe, 2 * T, derive_seed(base, 2));
        double da = 0.0, db = 0.0;
        for (int m = 0; m < 8; ++m) {
            da += (a.gain[static_cast<std::size_t>(m)] - ref.gain[static_cast<std::size_t>(m)]).squaredNorm();
            db += (b.gain[static_cast<std::size_t>(m)] - ref.gain[static_cast<std::size_t>(m)]).squaredNorm();
        }
        e1.push_back(std::sqrt(da));
        e2.push_back(std::sqrt(db));
    }
    auto median = [](std::vector<double> v) {
        std::nth_element(v.begin(), v.begin() + static_cast<long>(v.size() / 2), v.end());
        return v[v.size() / 2];
    };
    const double ratio = median(e1) / median(e2);
    EXPECT_GE(ratio, 1.2);
    EXPECT_LE(ratio, 1.7);
}

TEST(Statistics, FiniteWithAdcOff)
{
    const Rig s = make_setup(3, 2, 3, 32, 4, {true, true, true, false}, 8);
    const auto st = estimate_statistics(s.in.ch, s.in.net, s.fe, 100, 13);
    for (int m = 0; m < 32; ++m) {
        EXPECT_TRUE(st.gain[static_cast<std::size_t>(m)].allFinite());
        EXPECT_TRUE(st.distortion[static_cast<std::size_t>(m)].allFinite());
        Eigen::SelfAdjointEigenSolver<CMat> es(st.distortion[static_cast<std::size_t>(m)]);
        EXPECT_GT(es.eigenvalues().minCoeff(), 0.0);
    }
}

TEST(Statistics, RejectsTooFewSamples)
{
    const Rig s = make_setup(1, 2, 3, 8, 2, {}, 9);
    EXPECT_THROW(estimate_statistics(s.in.ch, s.in.net, s.fe, 1, 1), std::invalid_argument);
    EXPECT_THROW(estimate_statistics(s.in.ch, s.in.net, s.fe, 2, 1), std::invalid_argument);
}

TEST(RepairPsd, FloorsNegativeSpectrum)
{
    CMat C = CMat::Identity(3, 3);
    C(2, 2) = -1e-3;
    C(0, 1) = cd(0.0, 1e-14);
    const double floor = 1e-8 * C.trace().real();
    EXPECT_TRUE(repair_psd(C));
    EXPECT_LT((C - C.adjoint()).cwiseAbs().maxCoeff(), 1e-15);
    Eigen::SelfAdjointEigenSolver<CMat> es(C);
    EXPECT_NEAR(es.eigenvalues().minCoeff(), floor, 1e-12 * floor);
    EXPECT_NEAR(es.eigenvalues().maxCoeff(), 1.0, 1e-12);

    CMat good = 2.0 * CMat::Identity(2, 2);
    EXPECT_FALSE(repair_psd(good));
    EXPECT_EQ(good, 2.0 * CMat::Identity(2, 2));
}

TEST(StatisticsDump, RoundTrip)
{
    const Rig s = make_setup(1, 2, 2, 8, 2, {}, 10);
    const auto st = estimate_statistics(s.in.ch, s.in.net, s.fe, 16, 14);
    std::stringstream buf;
    write_statistics_dump(buf, st);
    const auto back = read_statistics_dump(buf);
    ASSERT_EQ(back.subcarriers(), 8);
    EXPECT_EQ(back.samples, 16);
    for (std::size_t m = 0; m < 8; ++m) {
        EXPECT_LT((back.gain[m] - st.gain[m]).cwiseAbs().maxCoeff(), 1e-6 * st.gain[m].cwiseAbs().maxCoeff());
        EXPECT_LT((back.distortion[m] - st.distortion[m]).cwiseAbs().maxCoeff(),
                  1e-6 * st.distortion[m].cwiseAbs().maxCoeff());
    }
}
