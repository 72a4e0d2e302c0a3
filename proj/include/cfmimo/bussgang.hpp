// SPDX-License-Identifier: Apache-2.0
//
// cfmimo: uplink simulator for cell-free massive MIMO-OFDM with impaired access points
// Copyright (C) 2026 The cfmimo authors
// ------------------------------------------------------------------------

#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "cfmimo/binary_io.hpp"
#include "cfmimo/channel.hpp"
#include "cfmimo/impairments.hpp"
#include "cfmimo/ofdm.hpp"
#include "cfmimo/rng.hpp"
#include "cfmimo/scenario.hpp"
#include "cfmimo/types.hpp"

namespace cfmimo {

// One pass through the uplink: the transmitted frequency symbols and the stacked
// frequency-domain signal the CPU sees.
struct ChainSample {
    CMat symbols;  // K x M
    CMat received; // LN x M
};

// Draws fresh data, noise and phase noise from streams derived from seed, then runs
// modulate -> FIR channel (per AP) -> impairment chain -> demodulate and stacks the APs.
inline ChainSample run_chain_once(const ChannelRealization& ch, const NetworkScenario& net,
                                  const ReceiverFrontEnd& fe, std::uint64_t seed, bool with_noise = true)
{
    const int K = ch.K, L = ch.L, N = ch.N, M = ch.M;
    const int cp = std::max(ch.R - 1, 0);
    const auto& powers = net.config.radio.uplink_power_w;
    const double noise_var = net.config.radio.noise_power_w();

    ChainSample out;
    out.symbols.resize(K, M);
    RandomStream sym(derive_seed(seed, Stream::Symbols));
    for (int k = 0; k < K; ++k)
        for (int m = 0; m < M; ++m)
            out.symbols(k, m) = sym.complex_normal(1.0);

    std::vector<TimeSignal> tx;
    tx.reserve(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k)
        tx.push_back(ofdm_modulate(out.symbols.row(k).transpose(), cp));

    out.received.resize(static_cast<Eigen::Index>(L) * N, M);
    for (int l = 0; l < L; ++l) {
        RandomStream noise(derive_seed(seed, Stream::Noise, l));
        RandomStream pn(derive_seed(seed, Stream::PhaseNoise, l));
        const CMat clean = apply_fir_channel(tx, ch, std::span<const double>(powers.data(), powers.size()), l,
                                             noise_var, with_noise ? &noise : nullptr);
        out.received.middleRows(static_cast<Eigen::Index>(l) * N, N) =
            ofdm_demodulate_rows(impairment_chain(clean, l, fe, &pn));
    }
    return out;
}

inline std::uint64_t chain_sample_seed(std::uint64_t seed, int t) { return derive_seed(seed, Stream::Bussgang, t); }

struct BussgangStatistics {
    std::vector<CMat> gain;       // per subcarrier, LN x K
    std::vector<CMat> distortion; // per subcarrier, LN x LN, Hermitian PSD
    int samples = 0;

    int subcarriers() const { return static_cast<int>(gain.size()); }
};

// Symmetrizes C and raises eigenvalues below rel_floor * trace up to that floor.
// Returns true when the spectrum had to be modified.
inline bool repair_psd(CMat& C, double rel_floor = 1e-8)
{
    C = (0.5 * (C + C.adjoint())).eval();
    if (C.size() == 0)
        return false;
    const double floor = rel_floor * std::max(C.trace().real(), 0.0);
    // Fast path: C - floor*I positive definite means nothing to clamp.
    Eigen::LLT<CMat> llt(C - floor * CMat::Identity(C.rows(), C.cols()));
    if (llt.info() == Eigen::Success && floor > 0.0)
        return false;
    Eigen::SelfAdjointEigenSolver<CMat> es(C);
    RVec ev = es.eigenvalues();
    if (ev.minCoeff() >= floor)
        return false;
    ev = ev.cwiseMax(floor);
    C = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().adjoint();
    C = (0.5 * (C + C.adjoint())).eval();
    return true;
}

// Monte-Carlo Bussgang decomposition conditioned on one channel realization.
//
// With T chain samples, the gain is the least-squares fit B = R_ys R_ss^{-1}, which
// converges to E{y s^H} because E{s s^H} = I, and leaves residuals exactly orthogonal
// to the sample symbols. The distortion covariance is the residual sample covariance
// R_yy - B R_sy. Sample t uses chain_sample_seed(seed, t).
inline BussgangStatistics estimate_statistics(const ChannelRealization& ch, const NetworkScenario& net,
                                              const ReceiverFrontEnd& fe, int T, std::uint64_t seed,
                                              bool with_noise = true)
{
    if (T < 2)
        throw std::invalid_argument("estimate_statistics: need at least 2 samples");
    if (T < ch.K)
        throw std::invalid_argument("estimate_statistics: need at least K samples for the gain fit");
    const Eigen::Index LN = static_cast<Eigen::Index>(ch.L) * ch.N;
    const int K = ch.K, M = ch.M;

    std::vector<CMat> Ryy(static_cast<std::size_t>(M), CMat::Zero(LN, LN));
    std::vector<CMat> Rys(static_cast<std::size_t>(M), CMat::Zero(LN, K));
    std::vector<CMat> Rss(static_cast<std::size_t>(M), CMat::Zero(K, K));

    constexpr int chunk = 64;
    std::vector<CMat> Y(static_cast<std::size_t>(M)), S(static_cast<std::size_t>(M));
    for (int t0 = 0; t0 < T; t0 += chunk) {
        const int n = std::min(chunk, T - t0);
        for (int m = 0; m < M; ++m) {
            Y[static_cast<std::size_t>(m)].resize(LN, n);
            S[static_cast<std::size_t>(m)].resize(K, n);
        }
        for (int i = 0; i < n; ++i) {
            const ChainSample smp = run_chain_once(ch, net, fe, chain_sample_seed(seed, t0 + i), with_noise);
            for (int m = 0; m < M; ++m) {
                Y[static_cast<std::size_t>(m)].col(i) = smp.received.col(m);
                S[static_cast<std::size_t>(m)].col(i) = smp.symbols.col(m);
            }
        }
        for (std::size_t m = 0; m < static_cast<std::size_t>(M); ++m) {
            Ryy[m].noalias() += Y[m] * Y[m].adjoint();
            Rys[m].noalias() += Y[m] * S[m].adjoint();
            Rss[m].noalias() += S[m] * S[m].adjoint();
        }
    }

    BussgangStatistics st;
    st.samples = T;
    st.gain.resize(static_cast<std::size_t>(M));
    st.distortion.resize(static_cast<std::size_t>(M));
    for (std::size_t m = 0; m < static_cast<std::size_t>(M); ++m) {
        const double inv_t = 1.0 / T;
        if (K > 0) {
            Eigen::LDLT<CMat> ldlt(Rss[m]);
            st.gain[m] = ldlt.solve(Rys[m].adjoint()).adjoint();
        } else {
            st.gain[m] = CMat::Zero(LN, 0);
        }
        st.distortion[m] = inv_t * (Ryy[m] - st.gain[m] * Rys[m].adjoint());
        repair_psd(st.distortion[m]);
    }
    return st;
}

// Empirical distortion-signal cross-correlation (1/T) sum_t (y_t - B s_t) s_t^H per
// subcarrier, replaying the exact sample streams used by estimate_statistics.
inline std::vector<CMat> residual_signal_correlation(const BussgangStatistics& st, const ChannelRealization& ch,
                                                     const NetworkScenario& net, const ReceiverFrontEnd& fe,
                                                     std::uint64_t seed, bool with_noise = true)
{
    const Eigen::Index LN = static_cast<Eigen::Index>(ch.L) * ch.N;
    std::vector<CMat> acc(static_cast<std::size_t>(ch.M), CMat::Zero(LN, ch.K));
    for (int t = 0; t < st.samples; ++t) {
        const ChainSample smp = run_chain_once(ch, net, fe, chain_sample_seed(seed, t), with_noise);
        for (int m = 0; m < ch.M; ++m) {
            const CVec eta = smp.received.col(m) - st.gain[static_cast<std::size_t>(m)] * smp.symbols.col(m);
            acc[static_cast<std::size_t>(m)].noalias() += eta * smp.symbols.col(m).adjoint();
        }
    }
    for (auto& a : acc)
        a /= static_cast<double>(st.samples);
    return acc;
}

// ---------- binary dump ----------
// Little-endian layout:
//   char[4] "CFBG", u32 version(=1), u32 LN, K, M, T,
//   gain        complex64[M][LN][K]
//   distortion  complex64[M][LN][LN]

inline void write_statistics_dump(std::ostream& out, const BussgangStatistics& st)
{
    const auto LN = st.gain.empty() ? 0 : st.gain.front().rows();
    const auto K = st.gain.empty() ? 0 : st.gain.front().cols();
    out.write("CFBG", 4);
    for (auto v : {Eigen::Index{1}, LN, K, static_cast<Eigen::Index>(st.subcarriers()),
                   static_cast<Eigen::Index>(st.samples)})
        binio::write_u32(out, static_cast<std::uint32_t>(v));
    for (const auto& B : st.gain)
        for (Eigen::Index i = 0; i < LN; ++i)
            for (Eigen::Index j = 0; j < K; ++j)
                binio::write_c64(out, B(i, j));
    for (const auto& C : st.distortion)
        for (Eigen::Index i = 0; i < LN; ++i)
            for (Eigen::Index j = 0; j < LN; ++j)
                binio::write_c64(out, C(i, j));
    if (!out)
        throw std::runtime_error("write_statistics_dump: stream error");
}

inline BussgangStatistics read_statistics_dump(std::istream& in)
{
    binio::expect_magic(in, "CFBG");
    if (binio::read_u32(in) != 1)
        throw std::runtime_error("read_statistics_dump: unsupported version");
    const auto LN = static_cast<Eigen::Index>(binio::read_u32(in));
    const auto K = static_cast<Eigen::Index>(binio::read_u32(in));
    const auto M = static_cast<std::size_t>(binio::read_u32(in));
    BussgangStatistics st;
    st.samples = static_cast<int>(binio::read_u32(in));
    st.gain.assign(M, CMat(LN, K));
    st.distortion.assign(M, CMat(LN, LN));
    for (auto& B : st.gain)
        for (Eigen::Index i = 0; i < LN; ++i)
            for (Eigen::Index j = 0; j < K; ++j)
                B(i, j) = binio::read_c64(in);
    for (auto& C : st.distortion)
        for (Eigen::Index i = 0; i < LN; ++i)
            for (Eigen::Index j = 0; j < LN; ++j)
                C(i, j) = binio::read_c64(in);
    return st;
}

} // namespace cfmimo
