/*
   Copyright 2026 The cellmix authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

/// @file rng.hpp
/// @brief Philox4x32-10 keyed by (seed, stream, counter) with Box-Muller normals.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>

#include "cellmix/fastmath.hpp"

namespace cellmix {

namespace philox {

inline constexpr std::uint32_t kM0 = 0xD2511F53u;
inline constexpr std::uint32_t kM1 = 0xCD9E8D57u;
inline constexpr std::uint32_t kW0 = 0x9E3779B9u;
inline constexpr std::uint32_t kW1 = 0xBB67AE85u;

/// One Philox4x32-10 block.
CELLMIX_KERNEL void block(std::uint32_t c[4], std::uint32_t k0, std::uint32_t k1)
{
#pragma GCC unroll 10
    for (int r = 0; r < 10; ++r) {
        const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * c[0];
        const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * c[2];
        const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
        const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
        const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
        const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
        const std::uint32_t n0 = hi1 ^ c[1] ^ k0;
        const std::uint32_t n2 = hi0 ^ c[3] ^ k1;
        c[0] = n0;
        c[1] = lo1;
        c[2] = n2;
        c[3] = lo0;
        k0 += kW0;
        k1 += kW1;
    }
}

/// Uniform in (0,1) from 32 random bits: (x + 1/2) 2^-32.
CELLMIX_KERNEL double to_open_unit(std::uint32_t x)
{
    return (static_cast<double>(x) + 0.5) * 2.3283064365386962890625e-10;
}

/// Counter domains, so that independent uses never share a block.
enum Domain : std::uint32_t {
    kGaussian = 0,
    kUniform = 1,
    kInitial = 2,
};

/// Box-Muller pair from two uniforms in (0,1).
CELLMIX_KERNEL void box_muller(double ua, double ub, double& n0, double& n1)
{
    const double r = std::sqrt(-2.0 * fastmath::log_pos(ua));
    double sn, cs;
    fastmath::sincos_pi(fastmath::kTwoPi * (ub - 0.5), sn, cs);
    n0 = r * cs;
    n1 = r * sn;
}

/// Four standard normals for (seed, stream, counter) in the Gaussian domain.
CELLMIX_KERNEL void normals4(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter,
                             double& n0, double& n1, double& n2, double& n3)
{
    std::uint32_t c[4] = {static_cast<std::uint32_t>(counter),
                          static_cast<std::uint32_t>(counter >> 32) & 0x00ffffffu,
                          static_cast<std::uint32_t>(stream),
                          static_cast<std::uint32_t>(stream >> 32)};
    block(c, static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32));
    box_muller(to_open_unit(c[0]), to_open_unit(c[1]), n0, n1);
    box_muller(to_open_unit(c[2]), to_open_unit(c[3]), n2, n3);
}

CELLMIX_KERNEL void normals4(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter,
                             double* out)
{
    normals4(seed, stream, counter, out[0], out[1], out[2], out[3]);
}

/// Four uniforms in (0,1) from a non-Gaussian domain.
CELLMIX_KERNEL void uniforms4(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter,
                      Domain domain, double* out)
{
    std::uint32_t c[4] = {static_cast<std::uint32_t>(counter),
                          (static_cast<std::uint32_t>(counter >> 32) & 0x00ffffffu) |
                              (static_cast<std::uint32_t>(domain) << 24),
                          static_cast<std::uint32_t>(stream),
                          static_cast<std::uint32_t>(stream >> 32)};
    block(c, static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32));
    for (int q = 0; q < 4; ++q) out[q] = to_open_unit(c[q]);
}

} // namespace philox

/// Deterministic stream of normals: block `counter` of stream `stream_index`
/// under key `seed`. Holds no hidden state beyond the counter.
class RngStream {
public:
    RngStream() = default;
    RngStream(std::uint64_t seed, std::uint64_t stream_index, std::uint64_t counter = 0)
        : seed_(seed), stream_(stream_index), counter_(counter) {}

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream_index() const { return stream_; }
    std::uint64_t counter() const { return counter_; }
    void set_counter(std::uint64_t c) { counter_ = c; }

    /// Next four normals; advances the counter by one block.
    std::array<double, 4> next_normals4()
    {
        std::array<double, 4> out{};
        philox::normals4(seed_, stream_, counter_++, out.data());
        return out;
    }

    /// Four uniforms from the given domain at an explicit counter; does not
    /// advance the Gaussian counter.
    std::array<double, 4> uniforms_at(std::uint64_t counter, philox::Domain domain) const
    {
        std::array<double, 4> out{};
        philox::uniforms4(seed_, stream_, counter, domain, out.data());
        return out;
    }

private:
    std::uint64_t seed_ = 0;
    std::uint64_t stream_ = 0;
    std::uint64_t counter_ = 0;
};

} // namespace cellmix
