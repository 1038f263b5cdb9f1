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

#include "cellmix/sweep.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

#include "cellmix/errors.hpp"
#include "cellmix/spectral.hpp"

namespace cellmix {

namespace {

struct EstimatorName {
    Estimator e;
    const char* name;
};

constexpr EstimatorName kEstimators[] = {
    {Estimator::tau_cpl, "tau_cpl"},       {Estimator::stage_sum, "stage_sum"},
    {Estimator::tau_check, "tau_check"},   {Estimator::moment_s2, "moment_s2"},
    {Estimator::tau_return, "tau_return"}, {Estimator::tdiss, "tdiss"},
    {Estimator::tmix, "tmix"},             {Estimator::deff, "deff"},
    {Estimator::relation, "relation"},     {Estimator::bound, "bound"},
};

std::vector<double> number_list(const toml::table& t, const char* key)
{
    const toml::node* node = t.get(key);
    if (!node) throw ValidationError(std::string("sweep spec is missing '") + key + "'");
    std::vector<double> out;
    if (const toml::array* arr = node->as_array()) {
        for (const toml::node& v : *arr) {
            const auto d = v.value<double>();
            if (!d) throw ValidationError(std::string("'") + key + "' must hold numbers");
            out.push_back(*d);
        }
    } else if (const auto d = node->value<double>()) {
        out.push_back(*d);
    } else {
        throw ValidationError(std::string("'") + key + "' must be a number or a list of numbers");
    }
    return out;
}

std::string join(const std::vector<double>& v)
{
    std::string s = "[";
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + format_double(v[i]);
    return s + "]";
}

StepPolicy policy_for(const SweepSpec& spec, const FlowParams& params)
{
    StepPolicy p = make_policy(params, spec.safety);
    p.adaptive_core = spec.adaptive_core;
    p.bridge_correction = spec.bridge;
    if (spec.t_max > 0.0) p.t_max = spec.t_max;
    return p;
}

SolverConfig solver_for(const SweepSpec& spec, int jobs)
{
    SolverConfig c;
    c.n = spec.n;
    c.probes = spec.probes;
    c.seed = spec.seed;
    c.threads = jobs;
    return c;
}

} // namespace

Estimator parse_estimator(const std::string& name)
{
    for (const auto& e : kEstimators)
        if (name == e.name) return e.e;
    throw ValidationError("unknown estimator '" + name + "'");
}

const char* to_string(Estimator e)
{
    for (const auto& x : kEstimators)
        if (x.e == e) return x.name;
    return "?";
}

void SweepSpec::validate() const
{
    for (double e : eps)
        if (!(e > 0.0)) throw ValidationError("eps values must be positive");
    for (double a : amp)
        if (!(a >= 0.0)) throw ValidationError("amp values must be >= 0");
    for (double k : kappa)
        if (!(k > 0.0)) throw ValidationError("kappa values must be positive");
    if (samples < 1) throw ValidationError("samples must be >= 1");
    if (!(safety > 0.0)) throw ValidationError("safety must be positive");
    if (first_stage < 0 || last_stage > 4 || first_stage > last_stage)
        throw ValidationError("stage range must satisfy 0 <= first_stage <= last_stage <= 4");
    if (n_list.empty()) throw ValidationError("n_list must not be empty");
    for (int v : n_list)
        if (v < 1) throw ValidationError("n_list entries must be positive");
}

ConfigList SweepSpec::describe() const
{
    std::string nl = "[";
    for (std::size_t i = 0; i < n_list.size(); ++i) nl += (i ? ", " : "") + std::to_string(n_list[i]);
    nl += "]";
    return {
        {"name", name},
        {"estimator", to_string(estimator)},
        {"eps", join(eps)},
        {"amp", join(amp)},
        {"kappa", join(kappa)},
        {"samples", std::to_string(samples)},
        {"seed", std::to_string(seed)},
        {"dist", to_string(dist)},
        {"safety", format_double(safety)},
        {"adaptive_core", adaptive_core ? "true" : "false"},
        {"bridge", bridge ? "true" : "false"},
        {"t_max", format_double(t_max)},
        {"first_stage", std::to_string(first_stage)},
        {"last_stage", std::to_string(last_stage)},
        {"n", std::to_string(n)},
        {"probes", std::to_string(probes)},
        {"n_list", nl},
        {"allow_out_of_theory", allow_out_of_theory ? "true" : "false"},
    };
}

SweepSpec parse_sweep_spec(const std::string& toml_text)
{
    toml::table t;
    try {
        t = toml::parse(toml_text);
    } catch (const toml::parse_error& e) {
        throw ValidationError(std::string("sweep spec: ") + std::string(e.description()));
    }
    static const char* known[] = {"name",    "estimator",   "eps",        "amp",        "kappa",
                                  "samples", "seed",        "dist",       "safety",     "adaptive_core",
                                  "bridge",  "t_max",       "first_stage", "last_stage", "n",
                                  "probes",  "n_list",      "allow_out_of_theory"};
    for (const auto& [k, v] : t) {
        bool ok = false;
        for (const char* name : known) ok = ok || k.str() == name;
        if (!ok) throw ValidationError("sweep spec: unknown key '" + std::string(k.str()) + "'");
    }
    SweepSpec s;
    s.name = t["name"].value_or(s.name);
    s.estimator = parse_estimator(t["estimator"].value_or(std::string("tau_cpl")));
    s.eps = number_list(t, "eps");
    s.amp = number_list(t, "amp");
    s.kappa = number_list(t, "kappa");
    const std::int64_t samples = t["samples"].value_or<std::int64_t>(static_cast<std::int64_t>(s.samples));
    const std::int64_t seed = t["seed"].value_or<std::int64_t>(static_cast<std::int64_t>(s.seed));
    if (samples < 1 || seed < 0) throw ValidationError("samples must be >= 1 and seed >= 0");
    s.samples = static_cast<std::size_t>(samples);
    s.seed = static_cast<std::uint64_t>(seed);
    s.dist = parse_pair_distribution(t["dist"].value_or(std::string("uniform")));
    s.safety = t["safety"].value_or(s.safety);
    s.adaptive_core = t["adaptive_core"].value_or(s.adaptive_core);
    s.bridge = t["bridge"].value_or(s.bridge);
    s.t_max = t["t_max"].value_or(s.t_max);
    s.first_stage = static_cast<int>(t["first_stage"].value_or<std::int64_t>(s.first_stage));
    s.last_stage = static_cast<int>(t["last_stage"].value_or<std::int64_t>(s.last_stage));
    s.n = static_cast<int>(t["n"].value_or<std::int64_t>(s.n));
    s.probes = static_cast<int>(t["probes"].value_or<std::int64_t>(s.probes));
    if (t.contains("n_list")) {
        s.n_list.clear();
        for (double v : number_list(t, "n_list")) {
            if (v != std::floor(v)) throw ValidationError("n_list entries must be integers");
            s.n_list.push_back(static_cast<int>(v));
        }
    }
    s.allow_out_of_theory = t["allow_out_of_theory"].value_or(s.allow_out_of_theory);
    s.validate();
    return s;
}

SweepSpec load_sweep_spec(const std::string& path)
{
    std::ifstream f(path);
    if (!f) throw ValidationError("cannot open sweep spec '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_sweep_spec(ss.str());
}

SweepRow evaluate_point(const SweepSpec& spec, const FlowParams& params, int jobs)
{
    SweepRow row;
    row.params = params;
    row.estimator = to_string(spec.estimator);
    const auto start = std::chrono::steady_clock::now();
    try {
        params.validate();
        row.regime = classify_regime(params).regime;
        const bool needs_theory = spec.estimator != Estimator::tdiss && spec.estimator != Estimator::tmix &&
                                  spec.estimator != Estimator::deff && spec.estimator != Estimator::relation;
        if (needs_theory && row.regime == Regime::out_of_theory && !spec.allow_out_of_theory)
            throw OutOfTheory("point is outside the theorem's regimes (set allow_out_of_theory)");
        const int n = spec.n_list.back();
        WalkOptions walk;
        walk.policy = policy_for(spec, params);
        walk.threads = jobs;
        switch (spec.estimator) {
        case Estimator::tau_cpl:
        case Estimator::stage_sum: {
            TauOptions opt;
            opt.coupling.first_stage = spec.first_stage;
            opt.coupling.last_stage = spec.last_stage;
            opt.stage_sum = 0;
            for (int s = spec.first_stage; s <= spec.last_stage; ++s) opt.stage_sum |= 1u << s;
            opt.threads = jobs;
            opt.mode = jobs > 1 ? KernelMode::parallel : KernelMode::simd;
            const TauStatistics st =
                estimate_tau_cpl(params, spec.samples, spec.dist, walk.policy, spec.seed, opt);
            const bool sum = spec.estimator == Estimator::stage_sum;
            row.value = sum ? st.stage_sum_mean : st.mean;
            row.se = sum ? st.stage_sum_se : st.standard_error;
            row.n_samples = st.n_samples;
            row.failures = st.failures;
            break;
        }
        case Estimator::tau_check: {
            const CrossingReport r = crossing_rate_report(params, n, {}, spec.samples, spec.seed, walk, true);
            row.value = r.mean_tau_check[n - 1].mean;
            row.se = r.mean_tau_check[n - 1].se;
            row.n_samples = r.samples;
            row.failures = r.failures;
            break;
        }
        case Estimator::tau_return: {
            const CrossingReport r = crossing_rate_report(params, n, {}, spec.samples, spec.seed, walk, false);
            if (r.median_tau.empty()) throw ValidationError("tau_return needs regime I or II");
            row.value = r.median_tau[n - 1];
            row.se = std::nan("");
            row.n_samples = r.samples;
            row.failures = r.failures;
            break;
        }
        case Estimator::moment_s2: {
            const MomentReport r = moment_report(params, {n}, spec.samples, spec.seed, walk);
            row.value = r.s2[0].mean;
            row.se = r.s2[0].se;
            row.n_samples = r.samples;
            row.failures = r.failures;
            break;
        }
        case Estimator::tdiss:
            row.value = dissipation_time(params, solver_for(spec, jobs)).t_diss;
            break;
        case Estimator::tmix:
            row.value = mixing_time_tv(params, solver_for(spec, jobs)).t_mix;
            break;
        case Estimator::deff:
            row.value = effective_diffusivity(params, solver_for(spec, jobs)).d11;
            break;
        case Estimator::relation:
            row.value = verify_tmix_tdis_relation(params, solver_for(spec, jobs)).ratio;
            break;
        case Estimator::bound:
            row.value = predicted_bound(params).branch;
            break;
        }
    } catch (const Error& e) {
        row.status = std::string(e.kind()) + ": " + e.what();
        row.value = row.se = std::nan("");
    }
    row.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return row;
}

std::vector<SweepRow> run_sweep(const SweepSpec& spec, int jobs)
{
    spec.validate();
    std::vector<SweepRow> rows;
    for (double e : spec.eps)
        for (double a : spec.amp)
            for (double k : spec.kappa) {
                FlowParams p;
                p.epsilon = e;
                p.amplitude = a;
                p.kappa = k;
                rows.push_back(evaluate_point(spec, p, jobs));
            }
    return rows;
}

CsvTable sweep_table(const SweepSpec& spec, const std::vector<SweepRow>& rows, bool timing)
{
    CsvTable t;
    t.comments = provenance("sweep", spec.describe());
    t.columns = {"eps", "amp", "kappa", "regime", "estimator", "value", "se", "n_samples", "failures"};
    if (timing) t.columns.push_back("wall_time");
    t.columns.push_back("status");
    for (const SweepRow& r : rows) {
        std::vector<std::string> row = {format_double(r.params.epsilon), format_double(r.params.amplitude),
                                        format_double(r.params.kappa),   to_string(r.regime),
                                        r.estimator,                     format_double(r.value),
                                        format_double(r.se),             std::to_string(r.n_samples),
                                        std::to_string(r.failures)};
        if (timing) row.push_back(format_double(r.wall_time));
        std::string status = r.status;
        for (char& c : status)
            if (c == ',' || c == '\n') c = ';';
        row.push_back(status);
        t.rows.push_back(std::move(row));
    }
    return t;
}

} // namespace cellmix
