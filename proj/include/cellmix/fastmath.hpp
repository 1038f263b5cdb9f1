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

/// @file fastmath.hpp
/// @brief Branch-free sin/cos/log kernels built from explicit fma chains.
///
/// sin_poly is odd and cos_poly is even bit for bit, which the mirror
/// couplings rely on. Both are accurate to a few ulp on |x| <= 2.2.

#pragma once

#include <bit>
#include <cmath>
#include <cstdint>

/// Forces inlining of the per-particle kernels so that the batch loops can be
/// vectorized.
#define CELLMIX_KERNEL inline __attribute__((always_inline))

namespace cellmix::fastmath {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 6.28318530717958647692;
inline constexpr double kHalfPi = 1.57079632679489661923;

CELLMIX_KERNEL double sin_poly(double x)
{
    const double z = x * x;
    double p = 6.4469502843844733962e-26;
    p = std::fma(p, z, -3.8681701706306840377e-23);
    p = std::fma(p, z, 1.9572941063391261231e-20);
    p = std::fma(p, z, -8.220635246624329717e-18);
    p = std::fma(p, z, 2.8114572543455207632e-15);
    p = std::fma(p, z, -7.6471637318198164759e-13);
    p = std::fma(p, z, 1.6059043836821614599e-10);
    p = std::fma(p, z, -2.5052108385441718775e-8);
    p = std::fma(p, z, 2.7557319223985890653e-6);
    p = std::fma(p, z, -1.984126984126984127e-4);
    p = std::fma(p, z, 8.3333333333333333333e-3);
    p = std::fma(p, z, -1.6666666666666666667e-1);
    return std::fma(x * z, p, x);
}

CELLMIX_KERNEL double cos_poly(double x)
{
    const double z = x * x;
    double p = 1.611737571096118349e-24;
    p = std::fma(p, z, -8.8967913924505732867e-22);
    p = std::fma(p, z, 4.1103176233121648585e-19);
    p = std::fma(p, z, -1.5619206968586226462e-16);
    p = std::fma(p, z, 4.7794773323873852974e-14);
    p = std::fma(p, z, -1.1470745597729724714e-11);
    p = std::fma(p, z, 2.0876756987868098979e-9);
    p = std::fma(p, z, -2.7557319223985890653e-7);
    p = std::fma(p, z, 2.4801587301587301587e-5);
    p = std::fma(p, z, -1.3888888888888888889e-3);
    p = std::fma(p, z, 4.1666666666666666667e-2);
    p = std::fma(p, z, -0.5);
    return std::fma(z, p, 1.0);
}

/// sin and cos of an angle in [-pi, pi], folded onto [-pi/2, pi/2].
CELLMIX_KERNEL void sincos_pi(double phi, double& s, double& c)
{
    const bool fold = std::fabs(phi) > kHalfPi;
    const double r = fold ? std::copysign(kPi, phi) - phi : phi;
    s = sin_poly(r);
    const double cr = cos_poly(r);
    c = fold ? -cr : cr;
}

/// Natural logarithm of a positive normal double.
CELLMIX_KERNEL double log_pos(double x)
{
    constexpr double kSqrt2 = 1.41421356237309504880;
    constexpr double kLn2Hi = 6.93147180369123816490e-01;
    constexpr double kLn2Lo = 1.90821492927058770002e-10;
    const std::uint64_t bits = std::bit_cast<std::uint64_t>(x);
    std::int64_t e = static_cast<std::int64_t>((bits >> 52) & 0x7ff) - 1023;
    double m = std::bit_cast<double>((bits & 0x000fffffffffffffULL) | 0x3ff0000000000000ULL);
    const bool high = m > kSqrt2;
    m = high ? 0.5 * m : m;
    e = high ? e + 1 : e;
    const double s = (m - 1.0) / (m + 1.0);
    const double z = s * s;
    double p = 0.086956521739130434783;
    p = std::fma(p, z, 0.095238095238095238095);
    p = std::fma(p, z, 0.10526315789473684211);
    p = std::fma(p, z, 0.11764705882352941176);
    p = std::fma(p, z, 0.13333333333333333333);
    p = std::fma(p, z, 0.15384615384615384615);
    p = std::fma(p, z, 0.18181818181818181818);
    p = std::fma(p, z, 0.22222222222222222222);
    p = std::fma(p, z, 0.28571428571428571429);
    p = std::fma(p, z, 0.4);
    p = std::fma(p, z, 0.66666666666666666667);
    const double de = static_cast<double>(e);
    const double tail = std::fma(s * z, p, de * kLn2Lo);
    return std::fma(de, kLn2Hi, std::fma(2.0, s, tail));
}

} // namespace cellmix::fastmath
