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

/// @file ensemble.hpp
/// @brief Structure-of-arrays particle batches and the batched step kernels.
///
/// Every kernel exists in three execution modes that produce bitwise
/// identical results:
///   - serial:   plain per-particle loop, kept as the reference;
///   - simd:     one thread, `omp simd` over particles;
///   - parallel: `omp parallel for simd` over particles.

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "cellmix/flowfield.hpp"
#include "cellmix/sde.hpp"

namespace cellmix {

enum class KernelMode { serial, simd, parallel };

const char* to_string(KernelMode mode);

/// Particle states in lattice form, one array per component.
struct ParticleBatch {
    std::vector<std::int64_t> j1, j2;
    std::vector<double> s1, s2;

    ParticleBatch() = default;
    explicit ParticleBatch(std::size_t n) { resize(n); }

    std::size_t size() const { return s1.size(); }
    void resize(std::size_t n)
    {
        j1.resize(n);
        j2.resize(n);
        s1.resize(n);
        s2.resize(n);
    }
    LatticePoint get(std::size_t i) const { return {{j1[i], j2[i]}, {s1[i], s2[i]}}; }
    void set(std::size_t i, const LatticePoint& p)
    {
        j1[i] = p.j[0];
        j2[i] = p.j[1];
        s1[i] = p.s[0];
        s2[i] = p.s[1];
    }
};

/// Four normals per particle from (seed, stream[i], counter[i]); out is laid
/// out component-major: out[q * n + i], q = 0..3.
void normals_batch(std::uint64_t seed, std::size_t n, const std::uint64_t* stream,
                   const std::uint64_t* counter, double* out, KernelMode mode);

/// One split step for n particles with per-particle step sizes.
void split_batch(const SplitConstants& c, std::size_t n, const double* dt, const double* dt_drift,
                 const double* xi1, const double* xi2, std::int64_t* j1, double* s1,
                 std::int64_t* j2, double* s2, KernelMode mode);

/// Same with one step size for all particles.
void split_batch_uniform(const SplitConstants& c, std::size_t n, double dt, const double* xi1,
                         const double* xi2, std::int64_t* j1, double* s1, std::int64_t* j2,
                         double* s2, KernelMode mode);

/// Stream value H for n lattice states.
void stream_batch(const SplitConstants& c, std::size_t n, const std::int64_t* j1, const double* s1,
                  const std::int64_t* j2, const double* s2, double* H, KernelMode mode);

/// Advances independent particles (stream index = first_stream + i) for
/// `steps` steps of size dt. Normals are drawn two steps per Philox block
/// starting at block `counter0`.
void run_free_batch(const SplitConstants& c, std::uint64_t seed, std::uint64_t first_stream,
                    std::uint64_t counter0, ParticleBatch& batch, double dt, std::uint64_t steps,
                    KernelMode mode);

} // namespace cellmix
