// SPDX-License-Identifier: Apache-2.0
//
// cfmimo: uplink simulator for cell-free massive MIMO-OFDM with impaired access points
// Copyright (C) 2026 The cfmimo authors
// ------------------------------------------------------------------------

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

#include "cfmimo/types.hpp"

// Little-endian primitives for the regression-fixture dumps.
namespace cfmimo::binio {

inline std::uint32_t to_le(std::uint32_t v)
{
    if constexpr (std::endian::native == std::endian::big)
        return ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
    else
        return v;
}

inline void write_u32(std::ostream& out, std::uint32_t v)
{
    v = to_le(v);
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline std::uint32_t read_u32(std::istream& in)
{
    std::uint32_t v = 0;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof v))
        throw std::runtime_error("binary dump: truncated input");
    return to_le(v);
}

inline void write_f32(std::ostream& out, float f) { write_u32(out, std::bit_cast<std::uint32_t>(f)); }
inline float read_f32(std::istream& in) { return std::bit_cast<float>(read_u32(in)); }

inline void write_c64(std::ostream& out, cd z)
{
    write_f32(out, static_cast<float>(z.real()));
    write_f32(out, static_cast<float>(z.imag()));
}

inline cd read_c64(std::istream& in)
{
    const float re = read_f32(in);
    const float im = read_f32(in);
    return {re, im};
}

inline void expect_magic(std::istream& in, const char (&magic)[5])
{
    char buf[4] = {};
    if (!in.read(buf, 4) || std::memcmp(buf, magic, 4) != 0)
        throw std::runtime_error(std::string("binary dump: expected magic ") + magic);
}

} // namespace cfmimo::binio
