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


// Acceptance gate. Prints one PASS/FAIL line per criterion; exit status is
// nonzero when any selected criterion fails.
//
//     cellmix_acceptance [--only N] [--jobs J]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cellmix/coupling.hpp"
#include "cellmix/csv.hpp"
#include "cellmix/errors.hpp"
#include "cellmix/experiments.hpp"
#include "cellmix/flowfield.hpp"
#include "cellmix/spectral.hpp"
#include "cellmix/sweep.hpp"
#include "oracles.hpp"

using namespace cellmix;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

FlowParams make(double eps, double amp, double kappa)
{
    FlowParams p;
    p.epsilon = eps;
    p.amplitude = amp;
    p.kappa = kappa;
    return p;
}

std::string fmt(const char* f, double a)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

std::string g(double v) { return fmt("%.4g", v); }

int jobs = 1;

SweepSpec sweep(Estimator e, std::vector<double> eps, std::vector<double> amp, std::vector<double> kappa,
                std::size_t samples, std::uint64_t seed)
{
    SweepSpec s;
    s.estimator = e;
    s.eps = std::move(eps);
    s.amp = std::move(amp);
    s.kappa = std::move(kappa);
    s.samples = samples;
    s.seed = seed;
    s.allow_out_of_theory = true;
    return s;
}

// Slope check on rows of one sweep along `x`; any failed row fails the check.
Verdict slope_verdict(const std::vector<SweepRow>& rows, const std::vector<double>& x, double target,
                      double tol)
{
    Verdict v;
    std::vector<std::pair<double, double>> pts;
    std::ostringstream d;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        d << g(x[i]) << ":" << g(rows[i].value) << "+-" << g(rows[i].se);
        if (rows[i].failures) d << " (" << rows[i].failures << " capped)";
        d << ' ';
        if (rows[i].status != "ok") {
            v.detail = d.str() + rows[i].status;
            return v;
        }
        pts.emplace_back(x[i], rows[i].value);
    }
    if (pts.front().first > pts.back().first) std::reverse(pts.begin(), pts.end());
    const FitResult f = fit_power_law(pts);
    v.pass = std::fabs(f.slope - target) <= tol;
    d << "slope " << g(f.slope) << "+-" << g(f.slope_se) << " r2 " << g(f.r2) << " (target " << g(target)
      << "+-" << g(tol) << ")";
    v.detail = d.str();
    return v;
}

// 1. Drift-free dissipation time.
Verdict drift_free_dissipation()
{
    const double kappa = 0.02;
    SolverConfig c;
    c.n = 128;
    c.threads = jobs;
    const auto t0 = std::chrono::steady_clock::now();
    const double t = dissipation_time(make(0.25, 0.0, kappa), c).t_diss;
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const double exact = oracle::heat_halving_time(kappa);
    const double rel = std::fabs(t / exact - 1.0);
    return {rel <= 0.02 && secs < 30.0,
            "t_diss " + g(t) + " exact " + g(exact) + " rel " + g(rel) + " in " + g(secs) + " s"};
}

// 2. Divergence and symmetry residuals of the field.
Verdict field_exactness()
{
    Verdict v{true, ""};
    for (double eps : {0.25, 0.125}) {
        const FlowParams p = make(eps, 100.0, 0.01);
        const FieldDiagnostics d = field_diagnostics(p, 256);
        const double scale = p.amplitude / eps;
        double sym = 0.0;
        for (double s : d.symmetry) sym = std::max(sym, s);
        v.pass = v.pass && d.max_div <= 1e-8 * scale && sym <= 1e-12 * scale;
        v.detail += "eps " + g(eps) + ": div/(A/eps) " + g(d.max_div / scale) + " sym/(A/eps) " +
                    g(sym / scale) + "; ";
    }
    return v;
}

// 3. Mirror relations during the mirror stage.
Verdict mirror_invariant()
{
    const FlowParams p = make(0.125, 100.0, 0.01);
    const FlowField f(p);
    StepPolicy pol = make_policy(p);
    pol.adaptive_core = true;
    double worst = 0.0;
    int failed = 0;
    const double half = 0.5 * p.epsilon;
    for (int r = 0; r < 100; ++r) {
        // Starting pairs on a common lattice line, one copy shifted by half
        // the torus in x1 and one cell in x2.
        const double y = (r + 0.37) / 100.0;
        const double a = half * (r % 16);
        const StageResult s = stage3_mirror_to_bisector(f, f.to_lattice({a, y}),
                                                        f.to_lattice({a + 0.5, y + p.epsilon}), 0, pol,
                                                        31, static_cast<std::uint64_t>(r), true);
        failed += s.success ? 0 : 1;
        worst = std::max(worst, s.max_deviation);
    }
    return {worst <= 1e-6 && failed == 0,
            "max deviation " + g(worst) + " over 100 runs, " + std::to_string(failed) + " capped"};
}

// 4. Coupling time against amplitude in regime III.
Verdict regime3_coupling()
{
    const std::vector<double> amps{2.0, 8.0, 32.0};
    const auto rows = run_sweep(sweep(Estimator::tau_cpl, {0.0625}, amps, {1e-3}, 200, 4), jobs);
    return slope_verdict(rows, amps, -0.5, 0.15);
}

// 5. Stage 1 + stage 2 duration against eps at fixed kappa.
Verdict cell_diffusion_scaling()
{
    const double kappa = 0.01;
    const std::vector<double> eps{0.0625, 0.125, 0.25};
    std::vector<SweepRow> rows;
    for (double e : eps) {
        // Twice the regime-II threshold kappa/eps^4 keeps every point in II.
        auto s = sweep(Estimator::stage_sum, {e}, {2.0 * kappa / std::pow(e, 4)}, {kappa}, 200, 5);
        // Safety 0.2 moves the stage means by < 0.3 SE against 0.05 at
        // eps = 1/4 and 1/8 and brings eps = 1/16 within budget.
        s.safety = 0.2;
        s.first_stage = 0;
        s.last_stage = 1;
        s.allow_out_of_theory = false;
        rows.push_back(run_sweep(s, jobs).front());
    }
    return slope_verdict(rows, eps, 2.0, 0.3);
}

// 6. Diagonal-return time against amplitude.
Verdict crossing_estimate()
{
    const std::vector<double> amps{2.0, 8.0, 32.0};
    auto s = sweep(Estimator::tau_check, {0.0625}, amps, {1e-3}, 20000, 6);
    s.n_list = {1};
    return slope_verdict(run_sweep(s, jobs), amps, -0.5, 0.1);
}

// 7. Lifted-walk moments in regime I.
Verdict walk_moments()
{
    const FlowParams p = make(0.25, 1e4, 1e-3);
    const std::vector<int> ns{4, 8, 16};
    WalkOptions w;
    w.policy = make_policy(p);
    w.policy.adaptive_core = true;
    w.threads = jobs;
    const MomentReport r = moment_report(p, ns, 1000, 7, w);
    bool centred = true;
    std::vector<std::pair<double, double>> pts;
    double lo = INFINITY, hi = 0.0;
    const double e4 = std::pow(p.epsilon, 4);
    std::ostringstream d;
    for (std::size_t i = 0; i < ns.size(); ++i) {
        centred = centred && std::fabs(r.s1[i].mean) <= 3.0 * r.s1[i].se;
        pts.emplace_back(ns[i], r.s2[i].mean);
        const double q = r.s4[i].mean / (double(ns[i]) * ns[i] * e4);
        lo = std::min(lo, q);
        hi = std::max(hi, q);
        d << "n " << ns[i] << ": ES " << g(r.s1[i].mean) << "+-" << g(r.s1[i].se) << " ES2 " << g(r.s2[i].mean)
          << " ES4/(n2e4) " << g(q) << "; ";
    }
    const double slope = fit_power_law(pts).slope;
    d << "slope " << g(slope) << " spread " << g(hi / lo) << " failures " << r.failures;
    return {centred && std::fabs(slope - 1.0) <= 0.2 && hi <= 10.0 * lo && r.failures == 0, d.str()};
}

// 8. t_diss <= 3 t_mix at three points.
Verdict dissipation_vs_mixing()
{
    Verdict v{true, ""};
    const FlowParams pts[] = {make(0.25, 0.0, 0.02), make(0.125, 100.0, 0.01), make(0.0625, 8.0, 1e-3)};
    const char* names[] = {"u=0", "II", "III"};
    for (int i = 0; i < 3; ++i) {
        SolverConfig c;
        c.n = 256;
        c.threads = jobs;
        try {
            const RelationReport r = verify_tmix_tdis_relation(pts[i], c);
            v.pass = v.pass && !r.violated;
            v.detail += std::string(names[i]) + ": ratio " + g(r.ratio) + " t_diss " + g(r.t_diss) + " t_mix " +
                        g(r.t_mix) + " C " + g(r.fitted_C) + "; ";
        } catch (const Error& e) {
            v.pass = false;
            v.detail += std::string(names[i]) + ": " + e.kind() + " (" + e.what() + "); ";
        }
    }
    return v;
}

// 9. Effective diffusivity against amplitude.
Verdict diffusivity_scaling()
{
    const double kappa = 0.01;
    SolverConfig c;
    const Diffusivity d0 = effective_diffusivity(make(0.25, 0.0, kappa), c);
    const bool anchor = d0.d11 == kappa && d0.d22 == kappa && d0.d12 == 0.0 && d0.d21 == 0.0;
    std::vector<std::pair<double, double>> pts;
    std::ostringstream d;
    for (double a : {4.0, 16.0, 64.0}) {
        const Diffusivity r = effective_diffusivity(make(0.25, a, kappa), c);
        pts.emplace_back(a, r.d11);
        d << "A " << a << ": D/kappa " << g(r.d11 / kappa) << " (cell_n " << r.cell_n << "); ";
    }
    const double slope = fit_power_law(pts).slope;
    d << "slope " << g(slope) << (anchor ? ", A=0 anchor exact" : ", A=0 anchor off");
    return {anchor && std::fabs(slope - 0.5) <= 0.1, d.str()};
}

// 10. Spectral TV at t_mix against the coupling tail at the regime-II point.
Verdict coupling_vs_spectral()
{
    const FlowParams p = make(0.125, 100.0, 0.01);
    SolverConfig c;
    c.n = 256;
    c.threads = jobs;
    double t_mix = 0.0, tv = 0.0;
    try {
        const MixingEstimate m = mixing_time_tv(p, c);
        t_mix = m.t_mix;
        for (double x : m.tv_at_t_mix) tv = std::max(tv, x);
    } catch (const Error& e) {
        return {false, std::string("spectral t_mix: ") + e.kind() + " (" + e.what() + ")"};
    }
    StepPolicy pol = make_policy(p);
    pol.adaptive_core = true;
    TauOptions opt;
    opt.threads = jobs;
    opt.mode = jobs > 1 ? KernelMode::parallel : KernelMode::simd;
    const TauStatistics st = estimate_tau_cpl(p, 400, PairDistribution::uniform, pol, 10, opt);
    std::size_t late = st.failures;
    for (const auto& o : st.outcomes)
        if (o.success && o.tau_cpl > t_mix) ++late;
    const double q = static_cast<double>(late) / st.n_samples;
    const double se = 2.0 * std::sqrt(q * (1.0 - q) / st.n_samples);
    return {std::fabs(tv - 0.5) <= 0.01 && 2.0 * q >= 0.5 - 3.0 * se,
            "t_mix " + g(t_mix) + " TV " + g(tv) + " 2P(tau>t_mix) " + g(2.0 * q) + " se " + g(se)};
}

// 11. Sweeps are byte-reproducible.
Verdict determinism()
{
    std::vector<SweepSpec> specs;
    specs.push_back(sweep(Estimator::tau_cpl, {0.5, 1.0 / 3.0, 0.25}, {4.0}, {0.02}, 30, 11));
    auto walk = sweep(Estimator::tau_check, {0.25}, {0.5, 2.0}, {0.01}, 100, 12);
    specs.push_back(walk);
    specs.push_back(sweep(Estimator::tdiss, {0.5}, {0.0, 0.1}, {0.05}, 1, 13));
    specs.back().n = 64;
    specs.back().probes = 2;
    bool same = true;
    std::size_t rows = 0;
    for (const auto& s : specs) {
        std::ostringstream a, b, c;
        write_csv(a, sweep_table(s, run_sweep(s, 1), false));
        write_csv(b, sweep_table(s, run_sweep(s, 1), false));
        write_csv(c, sweep_table(s, run_sweep(s, std::max(2, jobs)), false));
        same = same && a.str() == b.str() && a.str() == c.str();
        rows += s.eps.size() * s.amp.size() * s.kappa.size();
    }
    return {same, std::to_string(specs.size()) + " sweeps, " + std::to_string(rows) +
                      " rows, repeated and with more workers"};
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"cellmix acceptance gate"};
    int only = 0;
    app.add_option("--only", only, "run a single criterion (1-11)")->check(CLI::Range(1, 11));
    app.add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
    CLI11_PARSE(app, argc, argv);

    const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria = {
        {"drift-free dissipation time", drift_free_dissipation},
        {"field exactness", field_exactness},
        {"mirror-stage invariant", mirror_invariant},
        {"regime-III coupling scaling", regime3_coupling},
        {"cell-diffusion scaling", cell_diffusion_scaling},
        {"diagonal-return scaling", crossing_estimate},
        {"lifted-walk moments", walk_moments},
        {"t_diss <= 3 t_mix", dissipation_vs_mixing},
        {"effective-diffusivity scaling", diffusivity_scaling},
        {"coupling vs spectral TV", coupling_vs_spectral},
        {"sweep determinism", determinism},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        if (only && static_cast<int>(i) + 1 != only) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = criteria[i].second();
        } catch (const std::exception& e) {
            v = {false, std::string("error: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        failures += v.pass ? 0 : 1;
        std::printf("criterion %zu %s: %s [%s] (%.1f s)\n", i + 1, criteria[i].first, v.pass ? "PASS" : "FAIL",
                    v.detail.c_str(), secs);
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
