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

#include "cellmix/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>

#include "cellmix/errors.hpp"
#include "cellmix/rng.hpp"
#include "cellmix/stopping.hpp"

namespace cellmix {

namespace {

constexpr double kSlack = 1e-9;

bool at_least(double a, double b) { return a >= b * (1.0 - kSlack); }
bool at_most(double a, double b) { return a <= b * (1.0 + kSlack); }

/// Runs body(i) for i in [0, count), on `threads` OpenMP threads when > 1.
template <class Body>
void for_samples(std::size_t count, int threads, Body&& body)
{
    if (threads <= 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::exception_ptr err;
    const long long n = static_cast<long long>(count);
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
    for (long long i = 0; i < n; ++i) {
        try {
            body(static_cast<std::size_t>(i));
        } catch (...) {
#pragma omp critical(cellmix_experiments_error)
            if (!err) err = std::current_exception();
        }
    }
    if (err) std::rethrow_exception(err);
}

/// Walk from (0, y) with y uniform, feeding a ClockTracker until `enough`
/// says so. Returns false when the time cap fires first.
template <class Enough>
bool run_walk(const FlowField& field, const StepPolicy& policy, std::uint64_t seed,
              std::uint64_t stream, ClockTracker& tracker, Enough&& enough)
{
    const FlowParams& params = field.params();
    double u[4];
    philox::uniforms4(seed, stream, 0, philox::kInitial, u);
    const LatticePoint x0 = field.to_lattice({0.0, u[0]});
    tracker.start(x0, 0.0);

    const SplitConstants sc(field, params.kappa);
    const double base_dt = policy.dt > 0.0 ? policy.dt : split_dt(params, policy.safety);
    const double t_max = policy.t_max > 0.0 ? policy.t_max : default_t_max(params);
    const double cap = 1e-3 * params.epsilon * params.epsilon / params.kappa;
    const double levels[2] = {params.delta(), params.cutoff_outer};

    RngStream rng(seed, stream);
    std::array<double, 4> z{};
    int used = 4;
    std::uint64_t bridge_counter = 0;
    LatticePoint x = x0;
    double t = 0.0;
    while (!enough(tracker.clock())) {
        if (t >= t_max) return false;
        const double dt = policy.adaptive_core
                              ? core_adaptive_dt(field, x, base_dt, params.kappa, cap, levels, 2)
                              : base_dt;
        if (used == 4) {
            z = rng.next_normals4();
            used = 0;
        }
        const Vec2 xi{z[used], z[used + 1]};
        used += 2;
        StepSegment seg;
        seg.prev = x;
        split_step(sc, x, dt, xi);
        seg.next = x;
        seg.t_prev = t;
        seg.dt = dt;
        if (policy.bridge_correction) {
            double b[4];
            philox::uniforms4(seed, stream, bridge_counter++, philox::kUniform, b);
            const BridgeDraw draw{params.kappa, b[0]};
            tracker.observe(seg, &draw);
        } else {
            tracker.observe(seg);
        }
        t += dt;
    }
    return true;
}

double lifted_x1(const FlowField& field, const CrossingEvent& ev)
{
    return static_cast<double>(ev.point.j[0]) * field.half_cell() + ev.point.s[0];
}

double median_of(std::vector<double> v)
{
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

} // namespace

const char* to_string(Regime r)
{
    switch (r) {
    case Regime::I: return "I";
    case Regime::II: return "II";
    case Regime::III: return "III";
    case Regime::out_of_theory: return "out-of-theory";
    }
    return "?";
}

RegimeLabel classify_regime(const FlowParams& params, const RegimeThresholds& thresholds)
{
    RegimeLabel out;
    const double eps = params.epsilon, kappa = params.kappa, A = params.amplitude;
    const double e2 = eps * eps, e4 = e2 * e2;
    out.cell_time = e2 / kappa;
    if (!(A > 0.0)) return out;
    out.delta = params.delta();
    const double ld = std::log(out.delta);
    const double t_I = kappa * ld * ld / e4;
    const double t_II = kappa / e4;
    const double t_III = thresholds.separation * kappa / e2;
    out.margin_I = A / t_I;
    out.margin_II = A / t_II;
    out.margin_III = A / t_III;
    if (!at_least(A, t_III)) {
        out.regime = Regime::out_of_theory;
    } else if (at_most(A, t_II)) {
        out.regime = Regime::III;
    } else if (at_least(A, t_I)) {
        out.regime = Regime::I;
    } else {
        out.regime = Regime::II;
    }
    return out;
}

BoundPrediction predicted_bound(const FlowParams& params, const RegimeThresholds& thresholds)
{
    const RegimeLabel label = classify_regime(params, thresholds);
    if (label.regime == Regime::out_of_theory)
        throw OutOfTheory("parameters lie outside the three branches: " + params.describe());
    BoundPrediction b;
    b.regime = label.regime;
    const double e2 = params.epsilon * params.epsilon;
    const double ld = std::log(label.delta);
    b.averaging = e2 / params.kappa + ld * ld / (e2 * params.amplitude);
    switch (label.regime) {
    case Regime::I: b.branch = e2 / params.kappa; break;
    case Regime::II: b.branch = b.averaging; break;
    default: b.branch = 1.0 / std::sqrt(params.kappa * params.amplitude); break;
    }
    return b;
}

FitResult fit_power_law(const std::vector<std::pair<double, double>>& points)
{
    if (points.size() < 3) throw TooFewPoints("a power-law fit needs at least 3 points");
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (!(points[i].first > 0.0) || !(points[i].second > 0.0))
            throw ValidationError("power-law fit needs positive x and y");
        if (i > 0 && !(points[i].first > points[i - 1].first))
            throw ValidationError("power-law fit needs strictly increasing x");
    }
    const double n = static_cast<double>(points.size());
    double mx = 0.0, my = 0.0;
    for (const auto& [x, y] : points) {
        mx += std::log(x);
        my += std::log(y);
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (const auto& [x, y] : points) {
        const double dx = std::log(x) - mx, dy = std::log(y) - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    FitResult f;
    f.n_points = points.size();
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double ssr = 0.0;
    for (const auto& [x, y] : points) {
        const double r = std::log(y) - (f.intercept + f.slope * std::log(x));
        ssr += r * r;
        f.residual_band = std::max(f.residual_band, std::fabs(r));
    }
    f.r2 = syy > 0.0 ? 1.0 - ssr / syy : 1.0;
    f.slope_se = std::sqrt(ssr / (n - 2.0) / sxx);
    return f;
}

MeanEstimate mean_and_se(const std::vector<double>& values)
{
    MeanEstimate e;
    const std::size_t n = values.size();
    if (n == 0) {
        e.mean = e.se = std::numeric_limits<double>::quiet_NaN();
        return e;
    }
    double s = 0.0;
    for (double v : values) s += v;
    e.mean = s / static_cast<double>(n);
    if (n > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - e.mean) * (v - e.mean);
        e.se = std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n));
    }
    return e;
}

MomentReport moment_report(const FlowParams& params, const std::vector<int>& n_values,
                           std::size_t samples, std::uint64_t seed, const WalkOptions& options)
{
    params.validate();
    if (samples < 100) throw ValidationError("moment_report needs at least 100 samples");
    if (n_values.empty()) throw ValidationError("moment_report needs at least one n");
    for (int n : n_values)
        if (n < 1) throw ValidationError("n values must be positive");
    const Regime regime = classify_regime(params).regime;
    if (regime != Regime::I && regime != Regime::II)
        throw ValidationError(std::string("moment_report needs regime I or II, got ") + to_string(regime));

    const FlowField field(params);
    const int n_max = *std::max_element(n_values.begin(), n_values.end());
    ClockOptions copt;
    copt.layer = true;
    // S[i][m] = lifted x1 at the (m+1)-th vertical-line return of sample i.
    std::vector<std::vector<double>> S(samples);
    std::vector<char> ok(samples, 0);
    for_samples(samples, options.threads, [&](std::size_t i) {
        ClockTracker tracker(field, params.delta(), copt);
        const bool done = run_walk(field, options.policy, seed, i, tracker,
                                   [&](const StoppingClock& c) {
                                       return c.tau_axis[0].size() >= static_cast<std::size_t>(n_max);
                                   });
        if (!done) return;
        ok[i] = 1;
        S[i].resize(n_max);
        for (int m = 0; m < n_max; ++m) S[i][m] = lifted_x1(field, tracker.clock().tau_axis[0][m]);
    });

    MomentReport rep;
    rep.n_values = n_values;
    rep.samples = samples;
    for (std::size_t i = 0; i < samples; ++i)
        if (!ok[i]) ++rep.failures;
    for (int n : n_values) {
        std::vector<double> a, b, c;
        for (std::size_t i = 0; i < samples; ++i) {
            if (!ok[i]) continue;
            const double s = S[i][n - 1];
            a.push_back(s);
            b.push_back(s * s);
            c.push_back(s * s * s * s);
        }
        rep.s1.push_back(mean_and_se(a));
        rep.s2.push_back(mean_and_se(b));
        rep.s4.push_back(mean_and_se(c));
    }
    for (int m = 0; m < n_max; ++m) {
        std::vector<double> a, b;
        for (std::size_t i = 0; i < samples; ++i) {
            if (!ok[i]) continue;
            const double xi = S[i][m] - (m == 0 ? 0.0 : S[i][m - 1]);
            a.push_back(xi * xi);
            b.push_back(xi * xi * xi * xi);
        }
        rep.xi2.push_back(mean_and_se(a));
        rep.xi4.push_back(mean_and_se(b));
    }
    return rep;
}

CrossingReport crossing_rate_report(const FlowParams& params, int n, const std::vector<double>& t_grid,
                                    std::size_t samples, std::uint64_t seed,
                                    const WalkOptions& options, bool force_check)
{
    params.validate();
    if (samples < 100) throw ValidationError("crossing_rate_report needs at least 100 samples");
    if (n < 1) throw ValidationError("n must be positive");
    CrossingReport rep;
    rep.regime = classify_regime(params).regime;
    rep.n = n;
    rep.samples = samples;
    rep.t_grid = t_grid;
    const FlowField field(params);
    const bool check = force_check || rep.regime == Regime::III;

    ClockOptions copt;
    if (check) {
        copt.layer = false;
        copt.diagonal = true;
        copt.max_check = static_cast<std::size_t>(n);
    }
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<std::vector<double>> T(samples, std::vector<double>(n, inf));
    std::vector<char> ok(samples, 0);
    for_samples(samples, options.threads, [&](std::size_t i) {
        // The layer clock needs a positive width even when only the
        // diagonal clock is read.
        const double delta = params.amplitude > 0.0 ? params.delta() : 1.0;
        ClockTracker tracker(field, delta, copt);
        const std::size_t want = static_cast<std::size_t>(n);
        const bool done = run_walk(field, options.policy, seed, i, tracker,
                                   [&](const StoppingClock& c) {
                                       return check ? c.tau_check_seq.size() >= want
                                                    : c.tau_axis[0].size() >= want;
                                   });
        const StoppingClock& c = tracker.clock();
        const auto& events = check ? c.tau_check_seq : c.tau_axis[0];
        for (std::size_t m = 0; m < std::min(want, events.size()); ++m) T[i][m] = events[m].time;
        ok[i] = done ? 1 : 0;
    });
    for (std::size_t i = 0; i < samples; ++i)
        if (!ok[i]) ++rep.failures;

    if (check) {
        for (int m = 0; m < n; ++m) {
            std::vector<double> v;
            for (std::size_t i = 0; i < samples; ++i)
                if (ok[i]) v.push_back(T[i][m]);
            rep.mean_tau_check.push_back(mean_and_se(v));
        }
    } else {
        // Capped samples count as not yet crossed.
        for (double t : t_grid) {
            std::size_t hit = 0;
            for (std::size_t i = 0; i < samples; ++i)
                if (T[i][n - 1] <= t) ++hit;
            rep.cdf.push_back(static_cast<double>(hit) / static_cast<double>(samples));
        }
        for (int m = 0; m < n; ++m) {
            std::vector<double> v;
            for (std::size_t i = 0; i < samples; ++i) v.push_back(T[i][m]);
            rep.median_tau.push_back(median_of(v));
        }
    }
    return rep;
}

} // namespace cellmix
