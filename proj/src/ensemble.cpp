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

#include "cellmix/ensemble.hpp"

#include <algorithm>

#include "cellmix/rng.hpp"

namespace cellmix {

const char* to_string(KernelMode mode)
{
    switch (mode) {
    case KernelMode::serial: return "serial";
    case KernelMode::simd: return "simd";
    case KernelMode::parallel: return "parallel";
    }
    return "?";
}

// The serial reference loops are compiled without the vectorizer so that the
// comparison against the simd paths exercises two different code shapes.
#define CELLMIX_SCALAR __attribute__((optimize("no-tree-vectorize")))

namespace {

CELLMIX_SCALAR void normals_serial(std::uint64_t seed, std::size_t n, const std::uint64_t* stream,
                                   const std::uint64_t* counter, double* out)
{
    for (std::size_t i = 0; i < n; ++i) {
        double v[4];
        philox::normals4(seed, stream[i], counter[i], v);
        for (int q = 0; q < 4; ++q) out[q * n + i] = v[q];
    }
}

void normals_simd(std::uint64_t seed, std::size_t n, const std::uint64_t* stream,
                  const std::uint64_t* counter, double* out)
{
    double* o0 = out;
    double* o1 = out + n;
    double* o2 = out + 2 * n;
    double* o3 = out + 3 * n;
#pragma omp simd
    for (std::size_t i = 0; i < n; ++i) {
        philox::normals4(seed, stream[i], counter[i], o0[i], o1[i], o2[i], o3[i]);
    }
}

CELLMIX_SCALAR void split_serial(const SplitConstants& c, std::size_t n, const double* dt,
                                 const double* dt_drift, const double* xi1, const double* xi2,
                                 std::int64_t* j1, double* s1, std::int64_t* j2, double* s2)
{
    for (std::size_t i = 0; i < n; ++i)
        kernel::split_step(c, dt[i], dt_drift[i], xi1[i], xi2[i], j1[i], s1[i], j2[i], s2[i]);
}

void split_simd(const SplitConstants& c, std::size_t n, const double* dt, const double* dt_drift,
                const double* xi1, const double* xi2, std::int64_t* j1, double* s1,
                std::int64_t* j2, double* s2)
{
#pragma omp simd
    for (std::size_t i = 0; i < n; ++i)
        kernel::split_step(c, dt[i], dt_drift[i], xi1[i], xi2[i], j1[i], s1[i], j2[i], s2[i]);
}

CELLMIX_SCALAR void split_uniform_serial(const SplitConstants& c, std::size_t n, double dt,
                                         const double* xi1, const double* xi2, std::int64_t* j1,
                                         double* s1, std::int64_t* j2, double* s2)
{
    for (std::size_t i = 0; i < n; ++i)
        kernel::split_step(c, dt, dt, xi1[i], xi2[i], j1[i], s1[i], j2[i], s2[i]);
}

void split_uniform_simd(const SplitConstants& c, std::size_t n, double dt, const double* xi1,
                        const double* xi2, std::int64_t* j1, double* s1, std::int64_t* j2,
                        double* s2)
{
#pragma omp simd
    for (std::size_t i = 0; i < n; ++i)
        kernel::split_step(c, dt, dt, xi1[i], xi2[i], j1[i], s1[i], j2[i], s2[i]);
}

CELLMIX_SCALAR void stream_serial(const SplitConstants& c, std::size_t n, const std::int64_t* j1,
                                  const double* s1, const std::int64_t* j2, const double* s2,
                                  double* H)
{
    for (std::size_t i = 0; i < n; ++i) {
        double h, d1, d2;
        kernel::stream_sample(kernel::parity_sign(j1[i], j2[i]), s1[i], s2[i], c.k, h, d1, d2);
        H[i] = h;
    }
}

void stream_simd(const SplitConstants& c, std::size_t n, const std::int64_t* j1, const double* s1,
                 const std::int64_t* j2, const double* s2, double* H)
{
#pragma omp simd
    for (std::size_t i = 0; i < n; ++i) {
        double h, d1, d2;
        kernel::stream_sample(kernel::parity_sign(j1[i], j2[i]), s1[i], s2[i], c.k, h, d1, d2);
        H[i] = h;
    }
}

/// Chunked dispatch: each thread runs the simd kernel on a contiguous slice.
template <class F>
void dispatch(std::size_t n, KernelMode mode, F&& body)
{
    if (mode != KernelMode::parallel) {
        body(std::size_t{0}, n);
        return;
    }
    constexpr std::size_t kChunk = 256;
    const std::ptrdiff_t chunks = static_cast<std::ptrdiff_t>((n + kChunk - 1) / kChunk);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t b = 0; b < chunks; ++b) {
        const std::size_t lo = static_cast<std::size_t>(b) * kChunk;
        body(lo, std::min(n, lo + kChunk));
    }
}

} // namespace

void normals_batch(std::uint64_t seed, std::size_t n, const std::uint64_t* stream,
                   const std::uint64_t* counter, double* out, KernelMode mode)
{
    if (mode == KernelMode::serial) {
        normals_serial(seed, n, stream, counter, out);
        return;
    }
    if (mode == KernelMode::simd) {
        normals_simd(seed, n, stream, counter, out);
        return;
    }
    // Component-major output needs the global n; each slice writes its part.
    constexpr std::size_t kChunk = 256;
    const std::ptrdiff_t chunks = static_cast<std::ptrdiff_t>((n + kChunk - 1) / kChunk);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t b = 0; b < chunks; ++b) {
        const std::size_t lo = static_cast<std::size_t>(b) * kChunk;
        const std::size_t hi = std::min(n, lo + kChunk);
        double* o0 = out;
        double* o1 = out + n;
        double* o2 = out + 2 * n;
        double* o3 = out + 3 * n;
#pragma omp simd
        for (std::size_t i = lo; i < hi; ++i) {
            philox::normals4(seed, stream[i], counter[i], o0[i], o1[i], o2[i], o3[i]);
        }
    }
}

void split_batch(const SplitConstants& c, std::size_t n, const double* dt, const double* dt_drift,
                 const double* xi1, const double* xi2, std::int64_t* j1, double* s1,
                 std::int64_t* j2, double* s2, KernelMode mode)
{
    if (mode == KernelMode::serial) {
        split_serial(c, n, dt, dt_drift, xi1, xi2, j1, s1, j2, s2);
        return;
    }
    dispatch(n, mode, [&](std::size_t lo, std::size_t hi) {
        split_simd(c, hi - lo, dt + lo, dt_drift + lo, xi1 + lo, xi2 + lo, j1 + lo, s1 + lo,
                   j2 + lo, s2 + lo);
    });
}

void split_batch_uniform(const SplitConstants& c, std::size_t n, double dt, const double* xi1,
                         const double* xi2, std::int64_t* j1, double* s1, std::int64_t* j2,
                         double* s2, KernelMode mode)
{
    if (mode == KernelMode::serial) {
        split_uniform_serial(c, n, dt, xi1, xi2, j1, s1, j2, s2);
        return;
    }
    dispatch(n, mode, [&](std::size_t lo, std::size_t hi) {
        split_uniform_simd(c, hi - lo, dt, xi1 + lo, xi2 + lo, j1 + lo, s1 + lo, j2 + lo, s2 + lo);
    });
}

void stream_batch(const SplitConstants& c, std::size_t n, const std::int64_t* j1, const double* s1,
                  const std::int64_t* j2, const double* s2, double* H, KernelMode mode)
{
    if (mode == KernelMode::serial) {
        stream_serial(c, n, j1, s1, j2, s2, H);
        return;
    }
    dispatch(n, mode, [&](std::size_t lo, std::size_t hi) {
        stream_simd(c, hi - lo, j1 + lo, s1 + lo, j2 + lo, s2 + lo, H + lo);
    });
}

void run_free_batch(const SplitConstants& c, std::uint64_t seed, std::uint64_t first_stream,
                    std::uint64_t counter0, ParticleBatch& batch, double dt, std::uint64_t steps,
                    KernelMode mode)
{
    const std::size_t n = batch.size();
    std::vector<std::uint64_t> stream(n), counter(n);
    for (std::size_t i = 0; i < n; ++i) stream[i] = first_stream + i;
    std::vector<double> xi(4 * n);
    for (std::uint64_t s = 0; s < steps; ++s) {
        const int half = static_cast<int>(s & 1);
        if (half == 0) {
            std::fill(counter.begin(), counter.end(), counter0 + s / 2);
            normals_batch(seed, n, stream.data(), counter.data(), xi.data(), mode);
        }
        const double* x1 = xi.data() + (2 * half) * n;
        const double* x2 = xi.data() + (2 * half + 1) * n;
        split_batch_uniform(c, n, dt, x1, x2, batch.j1.data(), batch.s1.data(), batch.j2.data(),
                            batch.s2.data(), mode);
    }
}

} // namespace cellmix
