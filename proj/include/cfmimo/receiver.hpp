// SPDX-License-Identifier: Apache-2.0
//
// cfmimo: uplink simulator for cell-free massive MIMO-OFDM with impaired access points
// Copyright (C) 2026 The cfmimo authors
// ------------------------------------------------------------------------

#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "cfmimo/bussgang.hpp"
#include "cfmimo/channel.hpp"
#include "cfmimo/scenario.hpp"
#include "cfmimo/types.hpp"

namespace cfmimo {

enum class CombinerKind { DistortionAware, DistortionUnaware, PerfectHardware };

inline std::string_view to_string(CombinerKind kind)
{
    switch (kind) {
    case CombinerKind::DistortionAware:
        return "aware";
    case CombinerKind::DistortionUnaware:
        return "unaware";
    case CombinerKind::PerfectHardware:
        return "perfect";
    }
    return "unknown";
}

inline CombinerKind parse_combiner(std::string_view name)
{
    if (name == "aware")
        return CombinerKind::DistortionAware;
    if (name == "unaware")
        return CombinerKind::DistortionUnaware;
    if (name == "perfect")
        return CombinerKind::PerfectHardware;
    throw std::invalid_argument("unknown combiner '" + std::string(name) + "' (expected aware, unaware or perfect)");
}

// Counts how often a Hermitian solve fell back to the pseudo-inverse.
struct SolveCounter {
    std::atomic<std::uint64_t> fallbacks{0};
};

inline constexpr double kMaxCondition = 1e12;

// Solves A x = b for Hermitian PSD A. Uses a Cholesky factorization when A is well
// conditioned, otherwise the eigenvalue pseudo-inverse (relative cutoff 1/kMaxCondition).
inline CVec solve_hermitian(const CMat& A, const CVec& b, int subcarrier = -1, SolveCounter* counter = nullptr)
{
    Eigen::LLT<CMat> llt(A);
    if (llt.info() == Eigen::Success && llt.rcond() > 1.0 / kMaxCondition)
        return llt.solve(b);

    if (counter != nullptr)
        ++counter->fallbacks;
    Eigen::SelfAdjointEigenSolver<CMat> es(A);
    if (es.info() != Eigen::Success)
        throw SolveError("eigendecomposition failed", subcarrier);
    const RVec& ev = es.eigenvalues();
    const double top = ev.cwiseAbs().maxCoeff();
    if (!(top > 0.0) || !std::isfinite(top))
        throw SolveError("degenerate statistics: interference-plus-distortion matrix is zero", subcarrier);
    RVec inv = RVec::Zero(ev.size());
    for (Eigen::Index i = 0; i < ev.size(); ++i)
        if (ev[i] > top / kMaxCondition)
            inv[i] = 1.0 / ev[i];
    return es.eigenvectors() * (inv.asDiagonal() * (es.eigenvectors().adjoint() * b));
}

// sum_{i != k} b_i b_i^H + C
inline CMat interference_plus_distortion(const CMat& B, const CMat& C, int k)
{
    CMat A = C;
    for (Eigen::Index i = 0; i < B.cols(); ++i)
        if (i != k)
            A.noalias() += B.col(i) * B.col(i).adjoint();
    return A;
}

// SINR-maximizing combiner v = (sum_{i != k} b_i b_i^H + C)^{-1} b_k.
inline CVec optimal_combiner(const CMat& B, const CMat& C, int k, int subcarrier = -1,
                             SolveCounter* counter = nullptr)
{
    if (k < 0 || k >= B.cols())
        throw std::invalid_argument("optimal_combiner: UE index out of range");
    return solve_hermitian(interference_plus_distortion(B, C, k), B.col(k), subcarrier, counter);
}

// |v^H b_k|^2 / (sum_{i != k} |v^H b_i|^2 + v^H C v)
inline double sinr(const CVec& v, const CMat& B, const CMat& C, int k)
{
    if (v.squaredNorm() == 0.0)
        throw std::invalid_argument("sinr: combining vector must be nonzero");
    const Eigen::RowVectorXcd vb = v.adjoint() * B;
    double interference = (v.adjoint() * C * v)(0, 0).real();
    for (Eigen::Index i = 0; i < B.cols(); ++i)
        if (i != k)
            interference += std::norm(vb[i]);
    if (!(interference > 0.0))
        throw SolveError("sinr: zero interference-plus-distortion power", -1);
    return std::norm(vb[k]) / interference;
}

// b_k^H (sum_{i != k} b_i b_i^H + C)^{-1} b_k, the SINR reached by optimal_combiner.
inline double optimal_sinr_closed_form(const CMat& B, const CMat& C, int k, int subcarrier = -1,
                                       SolveCounter* counter = nullptr)
{
    const CVec x = solve_hermitian(interference_plus_distortion(B, C, k), B.col(k), subcarrier, counter);
    return std::max((B.col(k).adjoint() * x)(0, 0).real(), 0.0);
}

// Columns sqrt(p_k) * g_k[m]: the effective channel of the impairment-free model.
inline CMat linear_gain(const ChannelRealization& ch, const NetworkScenario& net, int m)
{
    CMat G(static_cast<Eigen::Index>(ch.L) * ch.N, ch.K);
    for (int k = 0; k < ch.K; ++k)
        G.col(k) = std::sqrt(net.config.uplink_power(k)) * ch.stacked(k, m);
    return G;
}

// Combiner designed for perfect hardware: MMSE for the true channel with white noise.
inline CVec unaware_combiner(const ChannelRealization& ch, const NetworkScenario& net, int m, int k,
                             SolveCounter* counter = nullptr)
{
    const CMat G = linear_gain(ch, net, m);
    const double noise = net.config.radio.noise_power_w();
    return optimal_combiner(G, noise * CMat::Identity(G.rows(), G.rows()), k, m, counter);
}

struct SEMetadata {
    std::uint64_t seed = 0;
    int drop = 0;
    int realization = 0;
    CombinerKind combiner = CombinerKind::DistortionAware;
    ImpairmentToggles toggles;
};

// Per-UE, per-subcarrier log2(1 + SINR). Entries are NaN where the combiner solve failed.
struct SEResult {
    RMat se; // K x M
    SEMetadata meta;

    // Subcarrier-averaged SE of UE k, ignoring failed subcarriers (NaN if all failed).
    double average(int k) const
    {
        double sum = 0.0;
        int n = 0;
        for (Eigen::Index m = 0; m < se.cols(); ++m)
            if (std::isfinite(se(k, m))) {
                sum += se(k, m);
                ++n;
            }
        return n > 0 ? sum / n : std::numeric_limits<double>::quiet_NaN();
    }

    std::size_t failures() const
    {
        std::size_t n = 0;
        for (Eigen::Index i = 0; i < se.size(); ++i)
            n += std::isfinite(se.data()[i]) ? 0 : 1;
        return n;
    }
};

inline double spectral_efficiency(double gamma) { return std::log2(1.0 + gamma); }

// Ideal hardware with the optimal (MMSE) combiner, evaluated analytically.
inline SEResult perfect_hardware_se(const ChannelRealization& ch, const NetworkScenario& net,
                                    SolveCounter* counter = nullptr)
{
    SEResult res;
    res.meta.combiner = CombinerKind::PerfectHardware;
    res.meta.toggles = ImpairmentToggles::none();
    res.se.resize(ch.K, ch.M);
    const double noise = net.config.radio.noise_power_w();
    for (int m = 0; m < ch.M; ++m) {
        const CMat G = linear_gain(ch, net, m);
        const CMat C = noise * CMat::Identity(G.rows(), G.rows());
        for (int k = 0; k < ch.K; ++k) {
            try {
                res.se(k, m) = spectral_efficiency(optimal_sinr_closed_form(G, C, k, m, counter));
            } catch (const SolveError&) {
                res.se(k, m) = std::numeric_limits<double>::quiet_NaN();
            }
        }
    }
    return res;
}

// SE of every UE and subcarrier for the given combiner against the true (impaired)
// Bussgang statistics. PerfectHardware ignores the statistics.
inline SEResult evaluate_se(const BussgangStatistics* st, const ChannelRealization& ch, const NetworkScenario& net,
                            CombinerKind kind, SolveCounter* counter = nullptr)
{
    if (kind == CombinerKind::PerfectHardware)
        return perfect_hardware_se(ch, net, counter);
    if (st == nullptr || st->subcarriers() != ch.M)
        throw std::invalid_argument("evaluate_se: Bussgang statistics required for impaired combiners");

    SEResult res;
    res.meta.combiner = kind;
    res.meta.toggles = net.config.impairments.toggles;
    res.se.resize(ch.K, ch.M);
    for (int m = 0; m < ch.M; ++m) {
        const CMat& B = st->gain[static_cast<std::size_t>(m)];
        const CMat& C = st->distortion[static_cast<std::size_t>(m)];
        for (int k = 0; k < ch.K; ++k) {
            try {
                const CVec v = kind == CombinerKind::DistortionAware ? optimal_combiner(B, C, k, m, counter)
                                                                     : unaware_combiner(ch, net, m, k, counter);
                res.se(k, m) = spectral_efficiency(sinr(v, B, C, k));
            } catch (const SolveError&) {
                res.se(k, m) = std::numeric_limits<double>::quiet_NaN();
            }
        }
    }
    return res;
}

} // namespace cfmimo
