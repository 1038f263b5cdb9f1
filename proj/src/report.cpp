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

#include "cellmix/report.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "cellmix/errors.hpp"

namespace cellmix {

namespace {

const char* const kVars[3] = {"eps", "amp", "kappa"};

std::string fmt(double v, int prec = 6)
{
    std::ostringstream s;
    s.precision(prec);
    s << v;
    return s.str();
}

} // namespace

std::vector<ReportSeries> build_report(const CsvTable& table)
{
    const std::size_t c_est = table.column("estimator");
    const std::size_t c_val = table.column("value");
    const std::size_t c_se = table.column("se");
    const std::size_t c_status = table.column("status");
    const std::size_t c_par[3] = {table.column("eps"), table.column("amp"), table.column("kappa")};

    std::vector<ReportSeries> out;
    for (int v = 0; v < 3; ++v) {
        // Key: estimator plus the two fixed parameters (as written).
        std::map<std::pair<std::string, std::string>, std::vector<std::size_t>> groups;
        for (std::size_t r = 0; r < table.rows.size(); ++r) {
            const auto& row = table.rows[r];
            std::string fixed;
            for (int w = 0; w < 3; ++w) {
                if (w == v) continue;
                fixed += (fixed.empty() ? "" : " ") + std::string(kVars[w]) + "=" + row[c_par[w]];
            }
            groups[{row[c_est], fixed}].push_back(r);
        }
        for (const auto& [key, idx] : groups) {
            std::map<double, std::size_t> xs;
            for (std::size_t r : idx) xs[parse_double(table.rows[r][c_par[v]])] = r;
            if (xs.size() < 2) continue;
            ReportSeries s;
            s.estimator = key.first;
            s.variable = kVars[v];
            s.fixed = key.second;
            std::size_t skipped = 0;
            for (const auto& [x, r] : xs) {
                const auto& row = table.rows[r];
                const double y = parse_double(row[c_val]);
                if (row[c_status] != "ok" || !(y > 0.0) || !(x > 0.0) || !std::isfinite(y)) {
                    ++skipped;
                    continue;
                }
                s.points.emplace_back(x, y);
                s.se.push_back(parse_double(row[c_se]));
            }
            if (s.points.size() >= 3) {
                s.fit = fit_power_law(s.points);
                s.fitted = true;
            } else {
                s.note = "only " + std::to_string(s.points.size()) + " usable points";
            }
            if (skipped) s.note += (s.note.empty() ? "" : "; ") + std::to_string(skipped) + " rows skipped";
            out.push_back(std::move(s));
        }
    }
    return out;
}

std::string fit_summary(const std::vector<ReportSeries>& series)
{
    std::ostringstream o;
    o << "estimator,variable,fixed,points,slope,slope_se,intercept,r2,residual_band,note\n";
    for (const auto& s : series) {
        o << s.estimator << ',' << s.variable << ',' << s.fixed << ',' << s.points.size() << ',';
        if (s.fitted)
            o << format_double(s.fit.slope) << ',' << format_double(s.fit.slope_se) << ','
              << format_double(s.fit.intercept) << ',' << format_double(s.fit.r2) << ','
              << format_double(s.fit.residual_band);
        else
            o << ",,,,";
        o << ',' << s.note << '\n';
    }
    return o.str();
}

std::string series_stem(const ReportSeries& series)
{
    std::string s = series.estimator + "_vs_" + series.variable + "_" + series.fixed;
    for (char& c : s)
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '.' && c != '-' && c != '_') c = '_';
    return s;
}

std::string render_svg(const ReportSeries& series)
{
    const double W = 480, H = 360, L = 70, R = 20, T = 40, B = 50;
    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"13\">"
      << series.estimator << " vs " << series.variable << " (" << series.fixed << ")</text>\n";
    if (series.points.empty()) {
        o << "</svg>\n";
        return o.str();
    }
    double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
    for (const auto& [x, y] : series.points) {
        x0 = std::min(x0, std::log10(x));
        x1 = std::max(x1, std::log10(x));
        y0 = std::min(y0, std::log10(y));
        y1 = std::max(y1, std::log10(y));
    }
    const double padx = std::max(0.1, 0.08 * (x1 - x0)), pady = std::max(0.1, 0.08 * (y1 - y0));
    x0 -= padx;
    x1 += padx;
    y0 -= pady;
    y1 += pady;
    auto px = [&](double lx) { return L + (lx - x0) / (x1 - x0) * (W - L - R); };
    auto py = [&](double ly) { return H - B - (ly - y0) / (y1 - y0) * (H - T - B); };
    o << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << W - L - R << "\" height=\"" << H - T - B
      << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int d = static_cast<int>(std::ceil(x0)); d <= static_cast<int>(std::floor(x1)); ++d)
        o << "<text x=\"" << px(d) << "\" y=\"" << H - B + 16
          << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">1e" << d << "</text>\n";
    for (int d = static_cast<int>(std::ceil(y0)); d <= static_cast<int>(std::floor(y1)); ++d)
        o << "<text x=\"" << L - 6 << "\" y=\"" << py(d) + 4
          << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">1e" << d << "</text>\n";
    o << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << series.variable
      << "</text>\n";
    if (series.fitted) {
        const double a = series.fit.intercept / std::log(10.0), b = series.fit.slope;
        o << "<line x1=\"" << px(x0) << "\" y1=\"" << py(a + b * x0) << "\" x2=\"" << px(x1) << "\" y2=\""
          << py(a + b * x1) << "\" stroke=\"steelblue\"/>\n";
        o << "<text x=\"" << L + 8 << "\" y=\"" << T + 16
          << "\" font-family=\"sans-serif\" font-size=\"12\">slope " << fmt(series.fit.slope, 4) << " ± "
          << fmt(series.fit.slope_se, 2) << ", r² " << fmt(series.fit.r2, 4) << "</text>\n";
    }
    for (std::size_t i = 0; i < series.points.size(); ++i) {
        const auto [x, y] = series.points[i];
        const double se = i < series.se.size() ? series.se[i] : 0.0;
        if (std::isfinite(se) && se > 0.0 && se < y)
            o << "<line x1=\"" << px(std::log10(x)) << "\" y1=\"" << py(std::log10(y - se)) << "\" x2=\""
              << px(std::log10(x)) << "\" y2=\"" << py(std::log10(y + se)) << "\" stroke=\"black\"/>\n";
        o << "<circle cx=\"" << px(std::log10(x)) << "\" cy=\"" << py(std::log10(y))
          << "\" r=\"3.5\" fill=\"crimson\"/>\n";
    }
    o << "</svg>\n";
    return o.str();
}

} // namespace cellmix
