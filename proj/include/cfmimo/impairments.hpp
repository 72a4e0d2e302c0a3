// SPDX-License-Identifier: Apache-2.0
//
// cfmimo: uplink simulator for cell-free massive MIMO-OFDM with impaired access points
// Copyright (C) 2026 The cfmimo authors
// ------------------------------------------------------------------------

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <mutex>
#include <span>
#include <vector>

#include "cfmimo/channel.hpp"
#include "cfmimo/rng.hpp"
#include "cfmimo/scenario.hpp"
#include "cfmimo/types.hpp"

namespace cfmimo {

// ---------- per-sample stage maps ----------

// Third-order quasi-memoryless LNA: b1*y + (b2/P_in)*|y|^2*y.
inline cd lna(cd y, double input_power, cd b1, cd b2)
{
    return b1 * y + (b2 / input_power) * std::norm(y) * y;
}

// Common-LO phase rotation applied after IQ imbalance: exp(j psi) * (y + alpha * conj(y)).
inline cd iqi_pn(cd y, cd alpha, double psi)
{
    return std::polar(1.0, psi) * (y + alpha * std::conj(y));
}

inline double phase_noise_sample(RandomStream& rng, double variance)
{
    if (variance < 0.0)
        throw std::invalid_argument("phase_noise_sample: variance must be nonnegative");
    return variance == 0.0 ? 0.0 : std::sqrt(variance) * rng.normal();
}

// ---------- uniform midrise quantizer ----------

struct QuantizerSpec {
    int bits = 0;
    double step = 0.0;
    std::vector<double> levels;     // l_1 .. l_D
    std::vector<double> thresholds; // v_1 .. v_{D-1}; v_0 = -inf and v_D = +inf are implicit

    int level_count() const { return static_cast<int>(levels.size()); }

    // Q(x) = l_d for x in [v_{d-1}, v_d)
    double quantize(double x) const
    {
        const auto d = std::upper_bound(thresholds.begin(), thresholds.end(), x) - thresholds.begin();
        return levels[static_cast<std::size_t>(d)];
    }
};

inline cd quantize_complex(cd y, const QuantizerSpec& q) { return {q.quantize(y.real()), q.quantize(y.imag())}; }

// l_d = (2d - D - 1) * step / 2 and v_d = (d - D/2) * step.
inline QuantizerSpec make_uniform_quantizer(int bits, double step)
{
    if (bits < 1 || bits > 24)
        throw std::invalid_argument("quantizer: bits must be in [1, 24]");
    if (!(step > 0.0))
        throw std::invalid_argument("quantizer: step must be positive");
    QuantizerSpec q;
    q.bits = bits;
    q.step = step;
    const long D = 1L << bits;
    q.levels.resize(static_cast<std::size_t>(D));
    q.thresholds.resize(static_cast<std::size_t>(D - 1));
    for (long d = 1; d <= D; ++d)
        q.levels[static_cast<std::size_t>(d - 1)] = static_cast<double>(2 * d - D - 1) * step / 2.0;
    for (long d = 1; d < D; ++d)
        q.thresholds[static_cast<std::size_t>(d - 1)] = static_cast<double>(d - D / 2) * step;
    return q;
}

namespace detail {

inline double std_normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * kPi); }
inline double std_normal_tail(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

// MSE of the uniform midrise quantizer with the given step on a unit-variance Gaussian.
// Overload cells use the closed form; granular cells use 5-point Gauss-Legendre, which
// stays accurate for narrow cells where the closed form cancels badly.
inline double gaussian_uniform_quantizer_mse(int bits, double step)
{
    const long D = 1L << bits;
    const long half = D / 2;
    static constexpr std::array<double, 5> nodes{-0.9061798459386640, -0.5384693101056831, 0.0, 0.5384693101056831,
                                                 0.9061798459386640};
    static constexpr std::array<double, 5> weights{0.2369268850561891, 0.4786286704993665, 0.5688888888888889,
                                                   0.4786286704993665, 0.2369268850561891};
    // Outer cell [v, inf) with level l, doubled for the mirror cell.
    const double v = static_cast<double>(half - 1) * step;
    const double l = (static_cast<double>(D) - 1.0) * step / 2.0;
    double mse = 2.0 * ((1.0 + l * l) * std_normal_tail(v) + (v - 2.0 * l) * std_normal_pdf(v));
    // Granular cells on the positive side, doubled by symmetry.
    for (long d = half + 1; d < D; ++d) {
        const double a = static_cast<double>(d - 1 - half) * step;
        const double level = a + step / 2.0;
        double cell = 0.0;
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            const double x = level + nodes[i] * step / 2.0;
            cell += weights[i] * (x - level) * (x - level) * std_normal_pdf(x);
        }
        mse += 2.0 * cell * step / 2.0;
    }
    return mse;
}

} // namespace detail

// Step size (in units of the per-component standard deviation) minimizing the MSE of a
// uniform quantizer on Gaussian input. Bits 1..4 use the classic tabulated values;
// wider quantizers are optimized numerically.
inline double optimal_uniform_step(int bits)
{
    static constexpr std::array<double, 4> table{1.596, 0.996, 0.586, 0.335};
    if (bits < 1 || bits > 24)
        throw std::invalid_argument("optimal_uniform_step: bits must be in [1, 24]");
    if (bits <= 4)
        return table[static_cast<std::size_t>(bits - 1)];

    static std::mutex mutex;
    static std::map<int, double> cache;
    std::lock_guard lock(mutex);
    if (auto it = cache.find(bits); it != cache.end())
        return it->second;

    // Golden-section search on step * D, which lies in [0.5, 24] for all supported widths.
    const double D = static_cast<double>(1L << bits);
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    double lo = 0.5, hi = 24.0;
    double x1 = hi - g * (hi - lo), x2 = lo + g * (hi - lo);
    double f1 = detail::gaussian_uniform_quantizer_mse(bits, x1 / D);
    double f2 = detail::gaussian_uniform_quantizer_mse(bits, x2 / D);
    while (hi - lo > 1e-7) {
        if (f1 < f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = detail::gaussian_uniform_quantizer_mse(bits, x1 / D);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = detail::gaussian_uniform_quantizer_mse(bits, x2 / D);
        }
    }
    const double step = 0.5 * (lo + hi) / D;
    cache.emplace(bits, step);
    return step;
}

// Quantizer for a complex input of power adc_power: each component has standard
// deviation sqrt(adc_power/2) and the step is the Gaussian-optimal multiple of it.
inline QuantizerSpec build_quantizer(int bits, double adc_power)
{
    if (!(adc_power > 0.0))
        throw std::invalid_argument("build_quantizer: ADC input power must be positive");
    const double sigma_c = std::sqrt(adc_power / 2.0);
    return make_uniform_quantizer(bits, optimal_uniform_step(bits) * sigma_c);
}

// ---------- automatic gain control ----------

// Long-term per-antenna powers (averaged over data and fading), L x N.
struct AgcState {
    RMat input_power; // E{|y'|^2}: normalizes the LNA cubic term
    RMat adc_power;   // E{|y'''|^2}: scales the quantizer
};

// Raw moments E{P^j}, j = 1..3, of the conditional LNA input power P. Given one channel
// realization the input is circularly-symmetric Gaussian with power P; over fading, P is
// noise plus a sum of independent exponentials, one per (UE, tap).
struct InputPowerMoments {
    double m1 = 0.0, m2 = 0.0, m3 = 0.0;

    static InputPowerMoments deterministic(double p) { return {p, p * p, p * p * p}; }

    // sigma2 + sum_i X_i with X_i ~ Exp(means[i]); exponential cumulants are (j-1)! mu^j.
    static InputPowerMoments exponential_sum(double sigma2, std::span<const double> means)
    {
        double k1 = sigma2, k2 = 0.0, k3 = 0.0;
        for (double mu : means) {
            k1 += mu;
            k2 += mu * mu;
            k3 += 2.0 * mu * mu * mu;
        }
        return {k1, k2 + k1 * k1, k3 + 3.0 * k2 * k1 + k1 * k1 * k1};
    }
};

// Power in front of the ADC. With E|y|^4 = 2 E{P^2} and E|y|^6 = 6 E{P^3} for conditionally
// Gaussian y, and the LNA normalized by m1. Phase noise does not change the power.
inline double adc_input_power(const InputPowerMoments& mom, const FrontEndCoefficients& c, const ImpairmentToggles& t)
{
    double p = mom.m1;
    if (t.lna) {
        const cd b1 = c.b1(), b2 = c.b2();
        p = std::norm(b1) * mom.m1 + 4.0 * (b1 * std::conj(b2)).real() * mom.m2 / mom.m1 +
            6.0 * std::norm(b2) * mom.m3 / (mom.m1 * mom.m1);
    }
    if (t.iqi)
        p *= 1.0 + std::norm(c.alpha());
    return p;
}

// Fixed-power Gaussian input: P (|b1|^2 + 4 Re(b1 b2^*) + 6 |b2|^2) (1 + |alpha|^2).
inline double adc_input_power(double input_power, const FrontEndCoefficients& c, const ImpairmentToggles& t)
{
    return adc_input_power(InputPowerMoments::deterministic(input_power), c, t);
}

// Long-term AGC: expectations over fading, data and noise.
inline AgcState compute_agc(const SpatialCorrelation& corr, std::span<const double> powers, double noise_var,
                            const ImpairmentParams& params)
{
    if (powers.size() != static_cast<std::size_t>(corr.K))
        throw std::invalid_argument("compute_agc: one power per UE required");
    AgcState agc;
    agc.input_power.resize(corr.L, corr.N);
    agc.adc_power.resize(corr.L, corr.N);
    std::vector<double> means(static_cast<std::size_t>(corr.K) * corr.R);
    for (int l = 0; l < corr.L; ++l)
        for (int n = 0; n < corr.N; ++n) {
            for (int k = 0; k < corr.K; ++k)
                for (int r = 0; r < corr.R; ++r)
                    means[static_cast<std::size_t>(k) * corr.R + r] =
                        powers[static_cast<std::size_t>(k)] * corr.at(k, l, r)(n, n).real();
            const auto mom = InputPowerMoments::exponential_sum(noise_var, means);
            agc.input_power(l, n) = mom.m1;
            agc.adc_power(l, n) = adc_input_power(mom, params.for_ap(l), params.toggles);
        }
    return agc;
}

// Everything the per-AP impairment chain needs, fixed for one drop and one toggle set.
struct ReceiverFrontEnd {
    ImpairmentParams params;
    AgcState agc;
    int adc_bits = 0;
    int antennas_per_ap = 0;
    std::vector<QuantizerSpec> quantizers; // index l*N + n; empty when the ADC stage is off

    const QuantizerSpec& quantizer(int l, int n) const
    {
        return quantizers[static_cast<std::size_t>(l) * antennas_per_ap + n];
    }
};

inline ReceiverFrontEnd make_front_end(const SpatialCorrelation& corr, const ScenarioConfig& cfg)
{
    ReceiverFrontEnd fe;
    fe.params = cfg.impairments;
    fe.adc_bits = cfg.dims.adc_bits;
    fe.antennas_per_ap = corr.N;
    fe.agc = compute_agc(corr, cfg.radio.uplink_power_w, cfg.radio.noise_power_w(), cfg.impairments);
    if (cfg.impairments.toggles.adc) {
        fe.quantizers.reserve(static_cast<std::size_t>(corr.L) * corr.N);
        for (int l = 0; l < corr.L; ++l)
            for (int n = 0; n < corr.N; ++n)
                fe.quantizers.push_back(build_quantizer(cfg.dims.adc_bits, fe.agc.adc_power(l, n)));
    }
    return fe;
}

// Applies LNA -> (IQ imbalance + phase noise) -> ADC to the N x M body block of AP l.
// Disabled stages are the identity. One phase-noise draw per time sample is shared by
// all antennas of the AP; pn may be null when phase noise is off.
inline CMat impairment_chain(const CMat& y, int ap, const ReceiverFrontEnd& fe, RandomStream* pn)
{
    const auto& t = fe.params.toggles;
    if (!t.any())
        return y;
    if (t.phase_noise && pn == nullptr)
        throw std::invalid_argument("impairment_chain: phase noise enabled without a random stream");

    const FrontEndCoefficients& c = fe.params.for_ap(ap);
    const cd b1 = c.b1(), b2 = c.b2();
    const cd alpha = t.iqi ? c.alpha() : cd{0.0, 0.0};

    CMat out(y.rows(), y.cols());
    for (Eigen::Index q = 0; q < y.cols(); ++q) {
        const double psi = t.phase_noise ? phase_noise_sample(*pn, fe.params.sigma2_psi) : 0.0;
        for (Eigen::Index n = 0; n < y.rows(); ++n) {
            cd v = y(n, q);
            if (t.lna)
                v = lna(v, fe.agc.input_power(ap, n), b1, b2);
            if (t.phase_noise || t.iqi)
                v = iqi_pn(v, alpha, psi);
            if (t.adc)
                v = quantize_complex(v, fe.quantizer(ap, static_cast<int>(n)));
            out(n, q) = v;
        }
    }
    return out;
}

} // namespace cfmimo
