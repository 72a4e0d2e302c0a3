// SPDX-License-Identifier: Apache-2.0
//
// cfmimo: uplink simulator for cell-free massive MIMO-OFDM with impaired access points
// Copyright (C) 2026 The cfmimo authors
// ------------------------------------------------------------------------

#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "cfmimo/types.hpp"

namespace cfmimo {

// Every random quantity in the simulator is drawn from a stream whose seed is derived
// from (master seed, indices..., stream tag). Streams never share engine state, so the
// result of one stage does not depend on how many draws another stage consumed.

constexpr std::uint64_t mix64(std::uint64_t x) noexcept
{
    // SplitMix64 finalizer
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

template <class... Tags>
constexpr std::uint64_t derive_seed(std::uint64_t base, Tags... tags) noexcept
{
    std::uint64_t h = mix64(base);
    ((h = mix64(h ^ static_cast<std::uint64_t>(tags))), ...);
    return h;
}

enum class Stream : std::uint64_t {
    Geometry = 0x1001,
    Shadowing,
    Angles,
    DelayProfile,
    Channel,
    Bussgang,
    Symbols,
    Noise,
    PhaseNoise,
};

class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

    double normal() { return normal_(engine_); }
    double uniform(double lo, double hi) { return lo + (hi - lo) * unit_(engine_); }
    double exponential(double mean) { return -mean * std::log1p(-unit_(engine_)); }

    // Circularly-symmetric complex Gaussian CN(0, variance).
    cd complex_normal(double variance = 1.0)
    {
        const double s = std::sqrt(variance / 2.0);
        const double re = normal();
        const double im = normal();
        return {s * re, s * im};
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> unit_{0.0, 1.0};
};

} // namespace cfmimo
