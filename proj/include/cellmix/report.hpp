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

/// @file report.hpp
/// @brief Power-law fits and log-log plots of sweep results.

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "cellmix/csv.hpp"
#include "cellmix/experiments.hpp"

namespace cellmix {

/// Rows of one estimator that differ only in `variable` (eps, amp or kappa).
struct ReportSeries {
    std::string estimator;
    std::string variable;
    /// The other two parameters, e.g. "eps=0.0625 kappa=0.001".
    std::string fixed;
    /// (x, value, se) of the usable rows, x increasing.
    std::vector<std::pair<double, double>> points;
    std::vector<double> se;
    bool fitted = false;
    FitResult fit;
    /// Why no fit was made, when fitted is false.
    std::string note;
};

/// Groups the rows of a sweep table into series along every parameter that
/// varies, and fits those with >= 3 usable points.
std::vector<ReportSeries> build_report(const CsvTable& table);

/// Plain-text summary, one line per series.
std::string fit_summary(const std::vector<ReportSeries>& series);

/// Standalone SVG log-log plot of one series with its fitted line.
std::string render_svg(const ReportSeries& series);

/// File-name-safe stem for a series.
std::string series_stem(const ReportSeries& series);

} // namespace cellmix
