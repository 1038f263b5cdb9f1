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

/// @file experiments.hpp
/// @brief Regime classification, predicted bounds, power-law fits and the
/// lifted-walk diagnostics.

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cellmix/flowfield.hpp"
#include "cellmix/sde.hpp"

namespace cellmix {

enum class Regime { I, II, III, out_of_theory };

const char* to_string(Regime r);

struct RegimeThresholds {
    /// Factor standing in for "much larger than".
    double separation = 10.0;
};

/// Label plus the ratios of A to each branch threshold (> 1 means above).
struct RegimeLabel {
    Regime regime = Regime::out_of_theory;
    double delta = 0.0;
    /// A / (kappa |ln delta|^2 / eps^4).
    double margin_I = 0.0;
    /// A / (kappa / eps^4).
    double margin_II = 0.0;
    /// A / (separation * kappa / eps^2).
    double margin_III = 0.0;
    /// eps^2 / kappa, reported only; the labels do not use it.
    double cell_time = 0.0;
};

RegimeLabel classify_regime(const FlowParams& params, const RegimeThresholds& thresholds = {});

struct BoundPrediction {
    Regime regime = Regime::out_of_theory;
    /// eps^2/kappa (I), eps^2/kappa + |ln delta|^2/(eps^2 A) (II),
    /// 1/sqrt(kappa A) (III).
    double branch = 0.0;
    /// eps^2/kappa + |ln delta|^2/(eps^2 A).
    double averaging = 0.0;
};

/// Throws OutOfTheory outside the three branches.
BoundPrediction predicted_bound(const FlowParams& params, const RegimeThresholds& thresholds = {});

struct FitResult {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
    /// Standard error of the slope (0 for an exact fit).
    double slope_se = 0.0;
    /// Largest |residual| in log space.
    double residual_band = 0.0;
    std::size_t n_points = 0;
};

/// Least squares on (ln x, ln y). Needs >= 3 points (TooFewPoints), x
/// strictly increasing and y > 0 (ValidationError).
FitResult fit_power_law(const std::vector<std::pair<double, double>>& points);

struct MeanEstimate {
    double mean = 0.0;
    double se = 0.0;
};

MeanEstimate mean_and_se(const std::vector<double>& values);

struct WalkOptions {
    StepPolicy policy{};
    int threads = 1;
};

struct MomentReport {
    std::vector<int> n_values;
    /// Per n: E S_n, E S_n^2, E S_n^4 over successful samples.
    std::vector<MeanEstimate> s1, s2, s4;
    /// Per m = 0 .. max n - 1: E xi_m^2, E xi_m^4.
    std::vector<MeanEstimate> xi2, xi4;
    std::size_t samples = 0;
    std::size_t failures = 0;
};

/// Lifted trajectories from x = (0, y) with y uniform; S_n is the lifted
/// first coordinate at the n-th boundary-layer return to a vertical line.
/// Requires samples >= 100 and regime I or II.
MomentReport moment_report(const FlowParams& params, const std::vector<int>& n_values,
                           std::size_t samples, std::uint64_t seed, const WalkOptions& options = {});

struct CrossingReport {
    Regime regime = Regime::out_of_theory;
    int n = 0;
    std::size_t samples = 0;
    std::size_t failures = 0;
    /// Regimes I/II: t_grid and P(tau_n^1 <= t), plus median tau_m^1 for
    /// m = 1 .. n.
    std::vector<double> t_grid;
    std::vector<double> cdf;
    std::vector<double> median_tau;
    /// Regime III: E tau_check_m for m = 1 .. n.
    std::vector<MeanEstimate> mean_tau_check;
};

/// Requires samples >= 100. `force_check` runs the diagonal clock whatever
/// the regime.
CrossingReport crossing_rate_report(const FlowParams& params, int n, const std::vector<double>& t_grid,
                                    std::size_t samples, std::uint64_t seed,
                                    const WalkOptions& options = {}, bool force_check = false);

} // namespace cellmix
