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

/// @file sweep.hpp
/// @brief Parameter sweeps over (eps, A, kappa) grids.
///
/// Sweep spec (TOML):
///
///     name = "regime3"
///     estimator = "tau_cpl"     # see Estimator
///     eps = [0.0625]
///     amp = [2.0, 8.0, 32.0]
///     kappa = [1e-3]
///     samples = 200
///     seed = 1
///
/// Optional keys: dist, safety, adaptive_core, bridge, t_max, first_stage,
/// last_stage, n (spectral grid), probes, n_list (walk diagnostics),
/// allow_out_of_theory.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cellmix/coupling.hpp"
#include "cellmix/csv.hpp"
#include "cellmix/experiments.hpp"

namespace cellmix {

enum class Estimator {
    /// Mean coupling time over pairs.
    tau_cpl,
    /// Mean of the stage durations first_stage..last_stage.
    stage_sum,
    /// Mean time of the n-th diagonal return (n = last of n_list).
    tau_check,
    /// E S_n^2 of the lifted walk (n = last of n_list).
    moment_s2,
    /// Median time of the n-th vertical-line return (n = last of n_list).
    tau_return,
    tdiss,
    tmix,
    deff,
    /// t_diss / (3 t_mix).
    relation,
    /// Branch value of the predicted bound.
    bound,
};

Estimator parse_estimator(const std::string& name);
const char* to_string(Estimator e);

struct SweepSpec {
    std::string name = "sweep";
    Estimator estimator = Estimator::tau_cpl;
    std::vector<double> eps;
    std::vector<double> amp;
    std::vector<double> kappa;
    std::size_t samples = 30;
    std::uint64_t seed = 1;
    PairDistribution dist = PairDistribution::uniform;
    double safety = 0.05;
    bool adaptive_core = true;
    bool bridge = false;
    /// 0 uses the default cap.
    double t_max = 0.0;
    int first_stage = 0;
    int last_stage = 4;
    /// Spectral grid.
    int n = 128;
    int probes = 16;
    std::vector<int> n_list{1};
    bool allow_out_of_theory = false;

    void validate() const;
    /// Resolved configuration for output headers.
    ConfigList describe() const;
};

SweepSpec parse_sweep_spec(const std::string& toml_text);
SweepSpec load_sweep_spec(const std::string& path);

struct SweepRow {
    FlowParams params;
    Regime regime = Regime::out_of_theory;
    std::string estimator;
    double value = 0.0;
    double se = 0.0;
    std::size_t n_samples = 0;
    std::size_t failures = 0;
    double wall_time = 0.0;
    /// "ok", or the error kind and message for a failed point.
    std::string status = "ok";
};

/// One row per grid point in (eps, amp, kappa) lexicographic order. Failing
/// points are recorded in their row and the sweep continues.
std::vector<SweepRow> run_sweep(const SweepSpec& spec, int jobs = 1);

/// Evaluates the estimator at one point.
SweepRow evaluate_point(const SweepSpec& spec, const FlowParams& params, int jobs = 1);

/// Rows as a table; wall_time is included only when `timing` is set so the
/// default output is reproducible byte for byte.
CsvTable sweep_table(const SweepSpec& spec, const std::vector<SweepRow>& rows, bool timing);

} // namespace cellmix
