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


// Serial reference vs SIMD vs OpenMP-parallel kernels. Range argument: batch
// size (particles or pairs). Thread count for the parallel mode comes from
// OMP_NUM_THREADS.

#include <benchmark/benchmark.h>
#include <omp.h>

#include <cstdint>
#include <random>
#include <vector>

#include "cellmix/coupling.hpp"
#include "cellmix/ensemble.hpp"
#include "cellmix/spectral.hpp"

using namespace cellmix;

namespace {

FlowParams bench_params()
{
    FlowParams p;
    p.epsilon = 0.125;
    p.amplitude = 100.0;
    p.kappa = 0.01;
    return p;
}

void set_label(benchmark::State& state, KernelMode mode) { state.SetLabel(to_string(mode)); }

void BM_normals(benchmark::State& state, KernelMode mode)
{
    const std::size_t n = static_cast<std::size_t>(state.range(0));
    std::vector<std::uint64_t> stream(n), counter(n, 0);
    for (std::size_t i = 0; i < n; ++i) stream[i] = i;
    std::vector<double> out(4 * n);
    for (auto _ : state) {
        normals_batch(42, n, stream.data(), counter.data(), out.data(), mode);
        for (auto& c : counter) ++c;
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
    set_label(state, mode);
}

void BM_split(benchmark::State& state, KernelMode mode)
{
    const std::size_t n = static_cast<std::size_t>(state.range(0));
    const FlowParams p = bench_params();
    const FlowField f(p);
    const SplitConstants c(f, p.kappa);
    const double dt = make_policy(p).dt;
    ParticleBatch b(n);
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> g;
    for (std::size_t i = 0; i < n; ++i) b.set(i, f.to_lattice({u(rng), u(rng)}));
    std::vector<double> xi1(n), xi2(n);
    for (std::size_t i = 0; i < n; ++i) {
        xi1[i] = g(rng);
        xi2[i] = g(rng);
    }
    for (auto _ : state) {
        split_batch_uniform(c, n, dt, xi1.data(), xi2.data(), b.j1.data(), b.s1.data(), b.j2.data(),
                            b.s2.data(), mode);
        benchmark::DoNotOptimize(b.s1.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
    set_label(state, mode);
}

void BM_free_run(benchmark::State& state, KernelMode mode)
{
    const std::size_t n = static_cast<std::size_t>(state.range(0));
    const FlowParams p = bench_params();
    const FlowField f(p);
    const SplitConstants c(f, p.kappa);
    const double dt = make_policy(p).dt;
    ParticleBatch b(n);
    for (std::size_t i = 0; i < n; ++i) b.set(i, f.to_lattice({0.3, 0.7}));
    std::uint64_t counter = 0;
    for (auto _ : state) {
        run_free_batch(c, 7, 0, counter, b, dt, 64, mode);
        counter += 32;
    }
    state.SetItemsProcessed(state.iterations() * 64 * static_cast<std::int64_t>(n));
    set_label(state, mode);
}

void BM_couple(benchmark::State& state, KernelMode mode)
{
    const std::size_t n = static_cast<std::size_t>(state.range(0));
    FlowParams p;
    p.epsilon = 0.5;
    p.amplitude = 4.0;
    p.kappa = 0.04;
    const FlowField f(p);
    StepPolicy pol = make_policy(p);
    pol.adaptive_core = true;
    std::vector<std::pair<LatticePoint, LatticePoint>> pairs;
    for (std::uint64_t i = 0; i < n; ++i) {
        const auto [x, y] = starting_pair(PairDistribution::uniform, 3, i, p.epsilon);
        pairs.emplace_back(f.to_lattice(x), f.to_lattice(y));
    }
    TauOptions opt;
    opt.mode = mode;
    opt.threads = mode == KernelMode::parallel ? omp_get_max_threads() : 1;
    for (auto _ : state) {
        auto out = couple_pairs(f, pairs, pol, 3, 0, opt);
        benchmark::DoNotOptimize(out.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
    set_label(state, mode);
}

void BM_spectral_step(benchmark::State& state)
{
    const int n = static_cast<int>(state.range(0));
    FlowParams p;
    p.epsilon = 0.5;
    p.amplitude = 0.1;
    p.kappa = 0.05;
    SolverConfig c;
    c.n = n;
    AdvectionDiffusion solver(p, c);
    FourierField fld = gaussian_source(n, {0.3, 0.4}, 2.0 / n);
    for (auto _ : state) solver.step(fld);
    state.SetItemsProcessed(state.iterations());
}

} // namespace

BENCHMARK_CAPTURE(BM_normals, serial, KernelMode::serial)->Arg(1024)->Arg(16384);
BENCHMARK_CAPTURE(BM_normals, simd, KernelMode::simd)->Arg(1024)->Arg(16384);
BENCHMARK_CAPTURE(BM_normals, parallel, KernelMode::parallel)->Arg(1024)->Arg(16384);
BENCHMARK_CAPTURE(BM_split, serial, KernelMode::serial)->Arg(1024)->Arg(16384);
BENCHMARK_CAPTURE(BM_split, simd, KernelMode::simd)->Arg(1024)->Arg(16384);
BENCHMARK_CAPTURE(BM_split, parallel, KernelMode::parallel)->Arg(1024)->Arg(16384);
BENCHMARK_CAPTURE(BM_free_run, serial, KernelMode::serial)->Arg(4096);
BENCHMARK_CAPTURE(BM_free_run, simd, KernelMode::simd)->Arg(4096);
BENCHMARK_CAPTURE(BM_free_run, parallel, KernelMode::parallel)->Arg(4096);
BENCHMARK_CAPTURE(BM_couple, serial, KernelMode::serial)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_couple, simd, KernelMode::simd)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_couple, parallel, KernelMode::parallel)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_spectral_step)->Arg(128)->Arg(256)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
