// SPDX-License-Identifier: Apache-2.0
//
// cfmimo: uplink simulator for cell-free massive MIMO-OFDM with impaired access points
// Copyright (C) 2026 The cfmimo authors
// ------------------------------------------------------------------------

#pragma once

#include <cstdint>

#include "cfmimo/channel.hpp"
#include "cfmimo/rng.hpp"
#include "cfmimo/scenario.hpp"

namespace cfmimo::testing {

inline ScenarioConfig small_config(int L, int N, int K, int M, int R)
{
    ScenarioConfig cfg;
    cfg.dims = {L, N, K, M, R, 2};
    cfg.mc.bussgang_samples = 200;
    cfg.resolve();
    return cfg;
}

// A drop with its correlations and one channel realization.
struct Instance {
    NetworkScenario net;
    SpatialCorrelation corr;
    ChannelRealization ch;
};

inline Instance make_instance(const ScenarioConfig& cfg, std::uint64_t seed)
{
    Instance in;
    in.net = drop_network(cfg, seed);
    in.corr = build_correlations(in.net, seed);
    in.ch = sample_channel(in.corr, cfg.dims.M, derive_seed(seed, 7));
    return in;
}

inline CMat random_matrix(RandomStream& rng, Eigen::Index rows, Eigen::Index cols)
{
    CMat A(rows, cols);
    for (Eigen::Index i = 0; i < A.size(); ++i)
        A.data()[i] = rng.complex_normal(1.0);
    return A;
}

inline CMat random_psd(RandomStream& rng, Eigen::Index n, Eigen::Index rank)
{
    const CMat A = random_matrix(rng, n, rank);
    return A * A.adjoint();
}

} // namespace cfmimo::testing
