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

/// @file coupling.hpp
/// @brief Staged coupling of two copies of the cellular diffusion.
///
/// Stages, in order:
///   1. projections onto the eps-torus: independent noise until both copies
///      sit in the core {|H| > h0} of the same cell, then reflected noise
///      until the separation along n changes sign (or a copy leaves
///      {|H| > 1/2}, which restarts the independent phase);
///   2. synchronous noise until x1 reaches a lattice line;
///   3. noise mirrored in x1 until x1 reaches a line a + (1/2)Z, where
///      2a = X^1 + X~^1 (lifted);
///   4-5. stages 2 and 3 on x2.
///
/// In stages 2-5 the partner is an exact lattice image of X (shift by an
/// even number of half cells, or a mirror), so by default only X is
/// integrated. `paired` integrates both and checks the identities.

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cellmix/ensemble.hpp"
#include "cellmix/flowfield.hpp"
#include "cellmix/rng.hpp"
#include "cellmix/sde.hpp"

namespace cellmix {

/// I - 2 n n^T for n along the shortest eps-torus displacement y - y~.
/// Throws DegeneratePair when |y - y~| < 1e-14.
NoiseTransform reflection_transform(Vec2 y, Vec2 y_tilde, double eps);

struct CellRegions {
    double h0 = 0.9;
    /// Level bounding U (the drift-free region), cutoff_outer of the field.
    double u_level = 0.5;

    CellRegions() = default;
    CellRegions(double h0_level, double u_level_value);

    /// |H| > u_level.
    bool in_U(double H) const { return std::fabs(H) > u_level; }
    /// |H| > h0.
    bool in_U_prime(double H) const { return std::fabs(H) > h0; }

    /// Smallest value of H - u_level over the corners of the square K
    /// (centre y, side |y - y~|, sides parallel to the bisector) for pairs
    /// sampled on the boundary of U'. Positive means K lies in U.
    double inscribed_margin(int samples = 96) const;
    /// Throws ValidationError unless inscribed_margin() > 0.
    void validate() const;
};

/// Cell of the eps-torus containing a lattice point, per axis in {0, 1}.
std::array<int, 2> cell_of(const LatticePoint& p);

enum class Stage : int { stage1 = 0, stage2v = 1, stage3v = 2, stage2h = 3, stage3h = 4, done = 5 };

const char* stage_name(int stage);

struct CouplingOutcome {
    /// stage1, stage2v, stage3v, stage2h, stage3h.
    std::array<double, 5> stage_durations{};
    /// Reflection attempts in stage 1.
    int stage1_attempts = 0;
    double tau_cpl = 0.0;
    bool success = false;
    /// Stage in which the cap fired (-1 on success).
    int failed_stage = -1;
    /// Plane position of X when each stage completed.
    std::array<Vec2, 5> glue_positions{};
    LatticePoint final_x;
    LatticePoint final_x_tilde;
    std::uint64_t steps = 0;
    /// Largest deviations from the stage identities seen along the path
    /// (paired mode only, absolute lengths): projection equality in the
    /// synchronous stages, the mirrored coordinate in the mirror stages, and
    /// the other coordinate mod eps in the mirror stages.
    double max_sync_deviation = 0.0;
    double max_mirror_deviation = 0.0;
    double max_transverse_deviation = 0.0;
};

struct CouplingOptions {
    CellRegions regions{};
    /// Integrate the partner in stages 2-5 instead of deriving it.
    bool paired = false;
    /// First and last stage to run (inclusive).
    int first_stage = 0;
    int last_stage = 4;
    /// Exact Brownian-bridge test for the separation sign change in the
    /// drift-free reflection phase.
    bool bridge_in_core = true;
};

/// One paired run from (x, x~) with the stage range of `options`. The pair
/// uses normals from (seed, stream) starting at block 0.
CouplingOutcome run_coupling(const FlowField& field, const LatticePoint& x,
                             const LatticePoint& x_tilde, const StepPolicy& policy,
                             std::uint64_t seed, std::uint64_t stream,
                             const CouplingOptions& options = {});

/// Full coupling, stages 1 through 5.
CouplingOutcome run_full_coupling(const FlowField& field, const LatticePoint& x,
                                  const LatticePoint& x_tilde, const StepPolicy& policy,
                                  std::uint64_t seed, std::uint64_t stream);

/// Single-stage drivers. Each returns the outcome of that stage alone; the
/// preconditions of the stage are checked.
struct StageResult {
    double duration = 0.0;
    LatticePoint x;
    LatticePoint x_tilde;
    bool success = false;
    int attempts = 0;
    double max_deviation = 0.0;
    std::uint64_t steps = 0;
};

StageResult stage1_couple_projections(const FlowField& field, const LatticePoint& x,
                                      const LatticePoint& x_tilde, const CellRegions& regions,
                                      const StepPolicy& policy, std::uint64_t seed,
                                      std::uint64_t stream);
/// axis 0 or 1. Throws DesyncDetected in paired mode if the projections
/// separate.
StageResult stage2_sync_to_lattice(const FlowField& field, const LatticePoint& x,
                                   const LatticePoint& x_tilde, int axis, const StepPolicy& policy,
                                   std::uint64_t seed, std::uint64_t stream, bool paired = true);
/// axis 0 or 1. Throws DesyncDetected in paired mode if the mirror
/// relations break beyond 1e-6 eps.
StageResult stage3_mirror_to_bisector(const FlowField& field, const LatticePoint& x,
                                      const LatticePoint& x_tilde, int axis,
                                      const StepPolicy& policy, std::uint64_t seed,
                                      std::uint64_t stream, bool paired = true);

enum class PairDistribution { uniform, grid };

PairDistribution parse_pair_distribution(const std::string& name);
const char* to_string(PairDistribution d);

/// Starting pair number `index` of the distribution (uniform pairs use the
/// initial-condition RNG domain of (seed, index)).
std::pair<Vec2, Vec2> starting_pair(PairDistribution dist, std::uint64_t seed, std::uint64_t index,
                                    double eps);

struct TauStatistics {
    std::size_t n_samples = 0;
    std::size_t failures = 0;
    /// Over successful pairs.
    double mean = 0.0;
    double median = 0.0;
    double upper_quartile = 0.0;
    double standard_error = 0.0;
    /// Means of the per-stage durations over successful pairs.
    std::array<double, 5> stage_means{};
    /// Mean of the selected stage sum (see TauOptions::stage_sum).
    double stage_sum_mean = 0.0;
    double stage_sum_se = 0.0;
    std::vector<CouplingOutcome> outcomes;
};

struct TauOptions {
    CouplingOptions coupling{};
    /// Pairs per SIMD batch.
    std::size_t batch = 256;
    /// Stages summed into stage_sum_mean (bit i selects stage i).
    unsigned stage_sum = 0x1f;
    KernelMode mode = KernelMode::simd;
    int threads = 1;
};

/// tau_cpl statistics over n_samples independent pairs (pair i uses
/// stream i). Requires n_samples >= 30.
TauStatistics estimate_tau_cpl(const FlowParams& params, std::size_t n_samples,
                               PairDistribution dist, const StepPolicy& policy, std::uint64_t seed,
                               const TauOptions& options = {});

/// Couples a list of pairs in SIMD batches; outcome i belongs to pair i and
/// uses stream first_stream + i. Results do not depend on batch size,
/// kernel mode or thread count.
std::vector<CouplingOutcome> couple_pairs(const FlowField& field,
                                          const std::vector<std::pair<LatticePoint, LatticePoint>>& pairs,
                                          const StepPolicy& policy, std::uint64_t seed,
                                          std::uint64_t first_stream, const TauOptions& options);

} // namespace cellmix
