// SPDX-License-Identifier: Apache-2.0
//
// cfmimo: uplink simulator for cell-free massive MIMO-OFDM with impaired access points
// Copyright (C) 2026 The cfmimo authors
// ------------------------------------------------------------------------

#pragma once

#include <cmath>
#include <span>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "cfmimo/channel.hpp"
#include "cfmimo/rng.hpp"
#include "cfmimo/types.hpp"

namespace cfmimo {

// Time-domain OFDM symbol: a cyclic prefix of length cp followed by M body samples.
// Sample index q runs from -cp to M-1.
struct TimeSignal {
    CVec samples;
    int cp = 0;

    int body_length() const { return static_cast<int>(samples.size()) - cp; }
    cd at(int q) const { return samples[q + cp]; }
    auto body() const { return samples.tail(body_length()); }
};

namespace detail {

inline Eigen::FFT<double>& fft_engine()
{
    // Eigen::FFT caches twiddles per size and is not safe to share between threads.
    thread_local Eigen::FFT<double> fft = [] {
        Eigen::FFT<double> f;
        f.SetFlag(Eigen::FFT<double>::Unscaled);
        return f;
    }();
    return fft;
}

} // namespace detail

// s[q] = M^{-1/2} sum_m s_bar[m] exp(j 2 pi q m / M), q = -cp..M-1.
// The prefix is a literal copy of the body tail, identical to evaluating the sum at q < 0.
inline TimeSignal ofdm_modulate(const CVec& freq, int cp)
{
    const auto M = freq.size();
    if (cp < 0 || cp > M)
        throw std::invalid_argument("ofdm_modulate: cyclic prefix must lie in [0, M]");
    if (M == 0)
        throw std::invalid_argument("ofdm_modulate: empty symbol");
    CVec body(M);
    // kissfft faults on length 1; the unitary DFT of size 1 is the identity.
    if (M == 1)
        body = freq;
    else
        detail::fft_engine().inv(body, freq);
    body /= std::sqrt(static_cast<double>(M));

    TimeSignal sig;
    sig.cp = cp;
    sig.samples.resize(M + cp);
    sig.samples.head(cp) = body.tail(cp);
    sig.samples.tail(M) = body;
    return sig;
}

// y_bar[m] = M^{-1/2} sum_q y[q] exp(-j 2 pi q m / M) over exactly M body samples.
inline CVec ofdm_demodulate(const CVec& body)
{
    if (body.size() == 0)
        throw std::invalid_argument("ofdm_demodulate: empty body");
    CVec out(body.size());
    if (body.size() == 1)
        out = body;
    else
        detail::fft_engine().fwd(out, body);
    out /= std::sqrt(static_cast<double>(body.size()));
    return out;
}

// Demodulates every row of an antenna x M block.
inline CMat ofdm_demodulate_rows(const CMat& block)
{
    CMat out(block.rows(), block.cols());
    for (Eigen::Index n = 0; n < block.rows(); ++n)
        out.row(n) = ofdm_demodulate(block.row(n).transpose()).transpose();
    return out;
}

// Distortion-free received block of AP l (N x M, body samples q = 0..M-1):
//   y'_l[q] = sum_k sum_r h_kl[r] sqrt(p_k) s_k[q-r] + w'_l[q],  w' ~ CN(0, noise_var I).
// Pass noise == nullptr for the noise-free signal.
inline CMat apply_fir_channel(std::span<const TimeSignal> tx, const ChannelRealization& ch,
                              std::span<const double> powers, int ap, double noise_var, RandomStream* noise)
{
    if (tx.size() != static_cast<std::size_t>(ch.K) || powers.size() != static_cast<std::size_t>(ch.K))
        throw std::invalid_argument("apply_fir_channel: need one signal and one power per UE");
    if (ap < 0 || ap >= ch.L)
        throw std::invalid_argument("apply_fir_channel: AP index out of range");
    const int M = ch.M;
    CMat y = CMat::Zero(ch.N, M);
    for (int k = 0; k < ch.K; ++k) {
        const TimeSignal& s = tx[static_cast<std::size_t>(k)];
        if (s.body_length() != M || s.cp < ch.R - 1)
            throw std::invalid_argument("apply_fir_channel: transmit signal needs M body samples and cp >= R-1");
        const CMat& h = ch.tap_matrix(k, ap);
        const double amp = std::sqrt(powers[static_cast<std::size_t>(k)]);
        // Row vector of the transmitted samples delayed by r, i.e. s[q - r] for q = 0..M-1.
        for (int r = 0; r < ch.R; ++r)
            y.noalias() += (amp * h.col(r)) * s.samples.segment(s.cp - r, M).transpose();
    }
    if (noise != nullptr)
        for (Eigen::Index q = 0; q < y.cols(); ++q)
            for (Eigen::Index n = 0; n < y.rows(); ++n)
                y(n, q) += noise->complex_normal(noise_var);
    return y;
}

} // namespace cfmimo
