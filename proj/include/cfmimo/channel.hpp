// SPDX-License-Identifier: Apache-2.0
//
// cfmimo: uplink simulator for cell-free massive MIMO-OFDM with impaired access points
// Copyright (C) 2026 The cfmimo authors
// ------------------------------------------------------------------------

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Eigenvalues>

#include "cfmimo/binary_io.hpp"
#include "cfmimo/rng.hpp"
#include "cfmimo/scenario.hpp"
#include "cfmimo/types.hpp"

namespace cfmimo {

// Half-wavelength horizontal ULA: a_n = exp(j*pi*n*sin(azimuth)*cos(elevation)).
inline CVec ula_response(double azimuth, double elevation, int N)
{
    if (N < 1)
        throw std::invalid_argument("ula_response: N must be >= 1");
    const double phase = kPi * std::sin(azimuth) * std::cos(elevation);
    CVec a(N);
    for (int n = 0; n < N; ++n)
        a[n] = std::polar(1.0, phase * n);
    return a;
}

// Tap powers of each multipath cluster. Row c is cluster c, column r is tap r.
// All entries are nonnegative and sum to one.
struct PowerDelayProfile {
    RMat power;                    // n_clusters x R
    std::vector<int> arrival_taps; // first tap of each cluster

    int clusters() const { return static_cast<int>(power.rows()); }
    int taps() const { return static_cast<int>(power.cols()); }
};

inline PowerDelayProfile delay_profile_from_arrivals(std::span<const int> arrival_taps, int R,
                                                     double cluster_decay, double ray_decay)
{
    if (R < 1 || arrival_taps.empty())
        throw std::invalid_argument("delay profile: need R >= 1 and at least one cluster");
    if (!(cluster_decay > 0.0) || !(ray_decay > 0.0))
        throw std::invalid_argument("delay profile: decay constants must be positive");

    PowerDelayProfile pdp;
    pdp.arrival_taps.assign(arrival_taps.begin(), arrival_taps.end());
    pdp.power = RMat::Zero(static_cast<Eigen::Index>(arrival_taps.size()), R);
    for (std::size_t c = 0; c < arrival_taps.size(); ++c) {
        const int start = arrival_taps[c];
        if (start < 0 || start >= R)
            throw std::invalid_argument("delay profile: arrival tap outside [0, R-1]");
        const double cluster_power = std::exp(-start / cluster_decay);
        for (int r = start; r < R; ++r)
            pdp.power(static_cast<Eigen::Index>(c), r) = cluster_power * std::exp(-(r - start) / ray_decay);
    }
    pdp.power /= pdp.power.sum();
    return pdp;
}

// Saleh-Valenzuela power-delay profile on the tap grid. The first cluster arrives at
// tap 0; later clusters follow exponential inter-arrival times with a mean of one tap,
// rounded to the nearest tap and clipped to R-1.
inline PowerDelayProfile sv_power_delay_profile(std::uint64_t seed, int R, int n_clusters, double cluster_decay,
                                                double ray_decay)
{
    if (n_clusters < 1)
        throw std::invalid_argument("sv_power_delay_profile: n_clusters must be >= 1");
    RandomStream rng(seed);
    std::vector<int> arrivals(static_cast<std::size_t>(n_clusters), 0);
    double t = 0.0;
    for (int c = 1; c < n_clusters; ++c) {
        t += rng.exponential(1.0);
        arrivals[static_cast<std::size_t>(c)] = std::min(static_cast<int>(std::lround(t)), R - 1);
    }
    return delay_profile_from_arrivals(arrivals, R, cluster_decay, ray_decay);
}

// ---------- spatial correlation ----------

struct SpatialCorrelation {
    int K = 0, L = 0, N = 0, R = 0;
    std::vector<CMat> mats; // index ((k*L + l)*R + r), each N x N

    const CMat& at(int k, int l, int r) const { return mats[index(k, l, r)]; }
    CMat& at(int k, int l, int r) { return mats[index(k, l, r)]; }

    std::size_t index(int k, int l, int r) const
    {
        return (static_cast<std::size_t>(k) * L + static_cast<std::size_t>(l)) * R + static_cast<std::size_t>(r);
    }
};

struct ClusterDirection {
    double azimuth = 0.0;
    double elevation = 0.0;
};

// R_r = beta * sum_c P_c[r] a(dir_c) a(dir_c)^H
inline std::vector<CMat> cluster_correlations(double beta, const PowerDelayProfile& pdp,
                                              std::span<const ClusterDirection> directions, int N)
{
    if (directions.size() != static_cast<std::size_t>(pdp.clusters()))
        throw std::invalid_argument("cluster_correlations: one direction per cluster required");
    std::vector<CMat> out(static_cast<std::size_t>(pdp.taps()), CMat::Zero(N, N));
    for (int c = 0; c < pdp.clusters(); ++c) {
        const CVec a = ula_response(directions[static_cast<std::size_t>(c)].azimuth,
                                    directions[static_cast<std::size_t>(c)].elevation, N);
        const CMat outer = a * a.adjoint();
        for (int r = 0; r < pdp.taps(); ++r)
            if (pdp.power(c, r) > 0.0)
                out[static_cast<std::size_t>(r)] += (beta * pdp.power(c, r)) * outer;
    }
    return out;
}

// Builds R_klr for every UE/AP pair of a drop. Each (k, l) pair gets its own delay
// profile and cluster directions drawn uniformly within +-angle_spread of the nominal
// line-of-sight azimuth/elevation from AP l toward UE k (elevation = atan2(h, d_2D)).
inline SpatialCorrelation build_correlations(const NetworkScenario& net, std::uint64_t seed)
{
    const auto& dims = net.dims();
    const auto& ch = net.config.channel;
    const double spread = ch.angle_spread_deg * kPi / 180.0;

    SpatialCorrelation corr;
    corr.K = dims.K;
    corr.L = dims.L;
    corr.N = dims.N;
    corr.R = dims.R;
    corr.mats.resize(static_cast<std::size_t>(dims.K) * dims.L * dims.R);

    for (int k = 0; k < dims.K; ++k)
        for (int l = 0; l < dims.L; ++l) {
            const auto pdp = sv_power_delay_profile(derive_seed(seed, Stream::DelayProfile, k, l), dims.R,
                                                    ch.n_clusters, ch.cluster_decay, ch.ray_decay);
            const Point3& ap = net.ap_positions[static_cast<std::size_t>(l)];
            const Point3& ue = net.ue_positions[static_cast<std::size_t>(k)];
            const double az0 = std::atan2(ue.y - ap.y, ue.x - ap.x);
            const double el0 = std::atan2(ap.z - ue.z, distance_2d(ap, ue));

            RandomStream angles(derive_seed(seed, Stream::Angles, k, l));
            std::vector<ClusterDirection> dirs(static_cast<std::size_t>(ch.n_clusters));
            for (auto& d : dirs) {
                d.azimuth = az0 + angles.uniform(-spread, spread);
                d.elevation = el0 + angles.uniform(-spread, spread);
            }
            auto taps = cluster_correlations(net.beta(k, l), pdp, dirs, dims.N);
            for (int r = 0; r < dims.R; ++r)
                corr.at(k, l, r) = std::move(taps[static_cast<std::size_t>(r)]);
        }
    return corr;
}

// Hermitian square root A with A*A^H = R. Eigenvalues below -1e-10*trace mean the input
// is not PSD; smaller negative values are rounding and are clamped to zero.
inline CMat psd_factor(const CMat& R)
{
    if (R.rows() != R.cols())
        throw std::invalid_argument("psd_factor: matrix must be square");
    if (R.size() == 0)
        return R;
    const double trace = R.trace().real();
    if (trace == 0.0 && R.cwiseAbs().maxCoeff() == 0.0)
        return CMat::Zero(R.rows(), R.cols());
    Eigen::SelfAdjointEigenSolver<CMat> es(R);
    if (es.info() != Eigen::Success)
        throw std::runtime_error("psd_factor: eigendecomposition failed");
    RVec ev = es.eigenvalues();
    if (ev.minCoeff() < -1e-10 * std::abs(trace))
        throw std::runtime_error("psd_factor: covariance is not positive semidefinite");
    ev = ev.cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().adjoint();
}

// One small-scale fading realization. Taps are stored per (k, l) as N x R matrices;
// the frequency response is stored per UE, stacked over APs (LN x M).
struct ChannelRealization {
    int K = 0, L = 0, N = 0, R = 0, M = 0;
    std::vector<CMat> taps; // index k*L + l, N x R
    std::vector<CMat> freq; // index k, LN x M

    const CMat& tap_matrix(int k, int l) const { return taps[static_cast<std::size_t>(k) * L + l]; }
    CMat& tap_matrix(int k, int l) { return taps[static_cast<std::size_t>(k) * L + l]; }

    // Stacked frequency-domain channel of UE k at subcarrier m.
    auto stacked(int k, int m) const { return freq[static_cast<std::size_t>(k)].col(m); }

    // h_kl[m] = sum_r h_kl[r] exp(-j 2 pi r m / M)
    void refresh_frequency()
    {
        freq.assign(static_cast<std::size_t>(K), CMat::Zero(static_cast<Eigen::Index>(L) * N, M));
        CMat twiddle(R, M);
        for (int r = 0; r < R; ++r)
            for (int m = 0; m < M; ++m)
                twiddle(r, m) = std::polar(1.0, -2.0 * kPi * static_cast<double>((static_cast<long>(r) * m) % M) / M);
        for (int k = 0; k < K; ++k)
            for (int l = 0; l < L; ++l)
                freq[static_cast<std::size_t>(k)].middleRows(static_cast<Eigen::Index>(l) * N, N) =
                    tap_matrix(k, l) * twiddle;
    }
};

// h_kl[r] = R_klr^{1/2} z with z ~ CN(0, I); independent across (k, l, r). The stream of
// pair (k, l) depends only on (seed, k, l).
inline ChannelRealization sample_channel(const SpatialCorrelation& corr, int M, std::uint64_t seed)
{
    ChannelRealization ch;
    ch.K = corr.K;
    ch.L = corr.L;
    ch.N = corr.N;
    ch.R = corr.R;
    ch.M = M;
    ch.taps.assign(static_cast<std::size_t>(corr.K) * corr.L, CMat::Zero(corr.N, corr.R));
    for (int k = 0; k < corr.K; ++k)
        for (int l = 0; l < corr.L; ++l) {
            RandomStream rng(derive_seed(seed, Stream::Channel, k, l));
            CMat& h = ch.tap_matrix(k, l);
            for (int r = 0; r < corr.R; ++r) {
                CVec z(corr.N);
                for (int n = 0; n < corr.N; ++n)
                    z[n] = rng.complex_normal(1.0);
                h.col(r) = psd_factor(corr.at(k, l, r)) * z;
            }
        }
    ch.refresh_frequency();
    return ch;
}

// ---------- binary dump ----------
// Little-endian layout:
//   char[4] "CFCH", u32 version(=1), u32 K, L, N, R, M,
//   taps  complex64[K][L][R][N]
//   freq  complex64[K][L][M][N]

inline void write_channel_dump(std::ostream& out, const ChannelRealization& ch)
{
    out.write("CFCH", 4);
    for (int v : {1, ch.K, ch.L, ch.N, ch.R, ch.M})
        binio::write_u32(out, static_cast<std::uint32_t>(v));
    for (int k = 0; k < ch.K; ++k)
        for (int l = 0; l < ch.L; ++l)
            for (int r = 0; r < ch.R; ++r)
                for (int n = 0; n < ch.N; ++n)
                    binio::write_c64(out, ch.tap_matrix(k, l)(n, r));
    for (int k = 0; k < ch.K; ++k)
        for (int l = 0; l < ch.L; ++l)
            for (int m = 0; m < ch.M; ++m)
                for (int n = 0; n < ch.N; ++n)
                    binio::write_c64(out, ch.freq[static_cast<std::size_t>(k)](l * ch.N + n, m));
    if (!out)
        throw std::runtime_error("write_channel_dump: stream error");
}

inline ChannelRealization read_channel_dump(std::istream& in)
{
    binio::expect_magic(in, "CFCH");
    if (binio::read_u32(in) != 1)
        throw std::runtime_error("read_channel_dump: unsupported version");
    ChannelRealization ch;
    ch.K = static_cast<int>(binio::read_u32(in));
    ch.L = static_cast<int>(binio::read_u32(in));
    ch.N = static_cast<int>(binio::read_u32(in));
    ch.R = static_cast<int>(binio::read_u32(in));
    ch.M = static_cast<int>(binio::read_u32(in));
    ch.taps.assign(static_cast<std::size_t>(ch.K) * ch.L, CMat::Zero(ch.N, ch.R));
    ch.freq.assign(static_cast<std::size_t>(ch.K), CMat::Zero(static_cast<Eigen::Index>(ch.L) * ch.N, ch.M));
    for (int k = 0; k < ch.K; ++k)
        for (int l = 0; l < ch.L; ++l)
            for (int r = 0; r < ch.R; ++r)
                for (int n = 0; n < ch.N; ++n)
                    ch.tap_matrix(k, l)(n, r) = binio::read_c64(in);
    for (int k = 0; k < ch.K; ++k)
        for (int l = 0; l < ch.L; ++l)
            for (int m = 0; m < ch.M; ++m)
                for (int n = 0; n < ch.N; ++n)
                    ch.freq[static_cast<std::size_t>(k)](l * ch.N + n, m) = binio::read_c64(in);
    return ch;
}

} // namespace cfmimo
