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

// cellmix command-line driver. Exit codes: 0 success, 1 validation or usage
// error, 2 runtime failure.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cellmix/coupling.hpp"
#include "cellmix/csv.hpp"
#include "cellmix/errors.hpp"
#include "cellmix/experiments.hpp"
#include "cellmix/flowfield.hpp"
#include "cellmix/parallel.hpp"
#include "cellmix/report.hpp"
#include "cellmix/sde.hpp"
#include "cellmix/spectral.hpp"
#include "cellmix/stopping.hpp"
#include "cellmix/sweep.hpp"

using namespace cellmix;

namespace {

struct FlowFlags {
    double eps = 0.125;
    double amp = 0.0;
    double kappa = 0.01;

    void add(CLI::App* app)
    {
        app->add_option("--eps", eps, "cell size (1/eps integer)")->capture_default_str();
        app->add_option("--amp", amp, "flow amplitude A")->capture_default_str();
        app->add_option("--kappa", kappa, "molecular diffusivity")->capture_default_str();
    }
    FlowParams params() const
    {
        FlowParams p;
        p.epsilon = eps;
        p.amplitude = amp;
        p.kappa = kappa;
        p.validate();
        return p;
    }
    void describe(ConfigList& c) const
    {
        c.emplace_back("eps", format_double(eps));
        c.emplace_back("amp", format_double(amp));
        c.emplace_back("kappa", format_double(kappa));
    }
};

/// key=value lines go to stdout, or to stderr when the CSV itself does.
std::ostream& info_stream(const std::string& out) { return out == "-" ? std::cerr : std::cout; }

std::string f(double v) { return format_double(v); }

// ---------------------------------------------------------------------------

struct FieldCmd {
    FlowFlags flow;
    int grid = 64;
    std::string out = "-";

    void add(CLI::App& app)
    {
        auto* c = app.add_subcommand("field", "sample the velocity field on a grid and print diagnostics");
        flow.add(c);
        c->add_option("--grid", grid, "grid points per axis on the unit torus")->capture_default_str();
        c->add_option("--out", out, "CSV path or - for stdout")->capture_default_str();
        c->callback([this] { run(); });
    }
    void run()
    {
        const FlowParams p = flow.params();
        if (grid < 2) throw ValidationError("--grid must be >= 2");
        const FlowField field(p);
        CsvTable t;
        ConfigList cfg;
        flow.describe(cfg);
        cfg.emplace_back("grid", std::to_string(grid));
        t.comments = provenance("field", cfg);
        t.columns = {"x1", "x2", "H", "xi", "u1", "u2"};
        for (int i = 0; i < grid; ++i)
            for (int l = 0; l < grid; ++l) {
                const Vec2 x{static_cast<double>(i) / grid, static_cast<double>(l) / grid};
                const double H = field.stream_value(x);
                const Vec2 u = field.velocity_at(x);
                t.rows.push_back({f(x.x1), f(x.x2), f(H), f(field.cutoff().zeta(H)), f(u.x1), f(u.x2)});
            }
        write_csv_file(out, t);
        std::ostream& o = info_stream(out);
        o << "delta=" << f(p.delta()) << "\nspeed_bound=" << f(field.speed_bound()) << '\n';
        // The diagnostics need a power-of-two grid for the spectral check.
        if (grid >= 4 && (grid & (grid - 1)) == 0) {
            const FieldDiagnostics d = field_diagnostics(p, grid);
            o << "max_div=" << f(d.max_div) << "\nmax_div_spectral=" << f(d.max_div_spectral) << '\n';
            for (int k = 0; k < 6; ++k) o << "symmetry_" << k << '=' << f(d.symmetry[k]) << '\n';
            o << "periodicity=" << f(d.periodicity) << "\nmax_speed=" << f(d.max_speed) << '\n';
        }
    }
};

struct SimulateCmd {
    FlowFlags flow;
    double t_max = 1.0;
    std::uint64_t seed = 1;
    std::size_t samples = 1;
    std::size_t stride = 100;
    double safety = 0.05;
    double dt = 0.0;
    std::string clock;
    std::string events;
    std::string out = "-";

    void add(CLI::App& app)
    {
        auto* c = app.add_subcommand("simulate", "sample trajectories of the diffusion");
        flow.add(c);
        c->add_option("--t-max", t_max, "simulated time per path")->capture_default_str();
        c->add_option("--seed", seed, "random seed")->capture_default_str();
        c->add_option("--samples", samples, "number of paths")->capture_default_str();
        c->add_option("--stride", stride, "write every stride-th step")->capture_default_str();
        c->add_option("--safety", safety, "step-size safety factor")->capture_default_str();
        c->add_option("--dt", dt, "time step (0 = default rule)")->capture_default_str();
        c->add_option("--clock", clock, "record stopping events: all")->check(CLI::IsMember({"all"}));
        c->add_option("--events", events, "events CSV path (required with --clock)");
        c->add_option("--out", out, "CSV path or - for stdout")->capture_default_str();
        c->callback([this] { run(); });
    }
    void run()
    {
        const FlowParams p = flow.params();
        if (!(t_max > 0.0)) throw ValidationError("--t-max must be positive");
        if (samples < 1 || stride < 1) throw ValidationError("--samples and --stride must be >= 1");
        if (!clock.empty() && events.empty()) throw ValidationError("--clock needs --events <path>");
        if (!clock.empty() && !(p.amplitude > 0.0))
            throw ValidationError("--clock needs A > 0 (the boundary layer has zero width)");
        const FlowField field(p);
        StepPolicy policy = make_policy(p, safety);
        if (dt > 0.0) policy.dt = dt;
        policy.t_max = t_max + 2.0 * policy.dt;

        ConfigList cfg;
        flow.describe(cfg);
        cfg.emplace_back("t_max", f(t_max));
        cfg.emplace_back("seed", std::to_string(seed));
        cfg.emplace_back("samples", std::to_string(samples));
        cfg.emplace_back("stride", std::to_string(stride));
        cfg.emplace_back("dt", f(policy.dt));
        cfg.emplace_back("clock", clock.empty() ? "none" : clock);
        CsvTable t;
        t.comments = provenance("simulate", cfg);
        t.columns = {"sample_id", "t", "x1", "x2"};
        CsvTable ev;
        ev.comments = t.comments;
        ev.columns = {"sample_id", "kind", "n", "time", "x1", "x2"};

        for (std::size_t i = 0; i < samples; ++i) {
            double u[4];
            philox::uniforms4(seed, i, 0, philox::kInitial, u);
            const LatticePoint x0 = field.to_lattice({u[0], u[1]});
            RngStream rng(seed, i);
            std::optional<ClockTracker> tracker;
            if (!clock.empty()) {
                ClockOptions opt;
                opt.layer = true;
                opt.diagonal = true;
                tracker.emplace(field, p.delta(), opt);
                tracker->start(x0, 0.0);
            }
            const StopPredicate base = stop_at_time(t_max);
            StopPredicate stop = base;
            if (tracker) {
                stop = [&](const PathStep& s) {
                    StepSegment seg;
                    seg.prev = field.to_lattice(s.prev);
                    seg.next = field.to_lattice(s.next);
                    seg.t_prev = s.t_prev;
                    seg.dt = s.dt;
                    tracker->observe(seg);
                    return base(s);
                };
            }
            auto [traj, rec] = simulate_until(field, x0, stop, policy, rng, stride);
            for (const auto& s : traj.samples) {
                const Vec2 x = field.to_plane(s.x);
                t.rows.push_back({std::to_string(i), f(s.t), f(x.x1), f(x.x2)});
            }
            if (tracker) {
                const StoppingClock& c = tracker->clock();
                auto emit = [&](const char* kind, std::size_t n, const CrossingEvent& e) {
                    ev.rows.push_back({std::to_string(i), kind, std::to_string(n), f(e.time),
                                       f(e.location.x1), f(e.location.x2)});
                };
                if (c.tau0) emit("tau0", 0, *c.tau0);
                for (std::size_t k = 0; k < c.sigma_seq.size(); ++k) emit("sigma", k + 1, c.sigma_seq[k]);
                for (std::size_t k = 0; k < c.tau_seq.size(); ++k) emit("tau", k + 1, c.tau_seq[k]);
                for (std::size_t k = 0; k < c.tau_check_seq.size(); ++k)
                    emit("tau_check", k + 1, c.tau_check_seq[k]);
            }
        }
        write_csv_file(out, t);
        if (!clock.empty()) write_csv_file(events, ev);
    }
};

struct CoupleCmd {
    FlowFlags flow;
    std::size_t samples = 30;
    std::string pairs = "uniform";
    std::uint64_t seed = 1;
    double safety = 0.05;
    int first_stage = 0;
    int last_stage = 4;
    bool paired = false;
    bool no_adaptive = false;
    int jobs = 0;
    std::string out = "-";

    void add(CLI::App& app)
    {
        auto* c = app.add_subcommand("couple", "run the staged coupling on independent pairs");
        flow.add(c);
        c->add_option("--samples", samples, "number of pairs (>= 30)")->capture_default_str();
        c->add_option("--pairs", pairs, "starting-pair distribution")
            ->check(CLI::IsMember({"uniform", "grid"}))
            ->capture_default_str();
        c->add_option("--seed", seed, "random seed")->capture_default_str();
        c->add_option("--safety", safety, "step-size safety factor")->capture_default_str();
        c->add_option("--first-stage", first_stage, "first stage (0-4)")->capture_default_str();
        c->add_option("--last-stage", last_stage, "last stage (0-4)")->capture_default_str();
        c->add_flag("--paired", paired, "integrate the partner in stages 2-5 and check the identities");
        c->add_flag("--no-adaptive", no_adaptive, "fixed steps inside the cell cores");
        c->add_option("--jobs", jobs, "worker threads (default CELLMIX_JOBS or all cores)");
        c->add_option("--out", out, "CSV path or - for stdout")->capture_default_str();
        c->callback([this] { run(); });
    }
    void run()
    {
        const FlowParams p = flow.params();
        const int threads = resolve_jobs(jobs);
        StepPolicy policy = make_policy(p, safety);
        policy.adaptive_core = !no_adaptive;
        TauOptions opt;
        opt.coupling.paired = paired;
        opt.coupling.first_stage = first_stage;
        opt.coupling.last_stage = last_stage;
        opt.threads = threads;
        opt.mode = threads > 1 ? KernelMode::parallel : KernelMode::simd;
        const TauStatistics st =
            estimate_tau_cpl(p, samples, parse_pair_distribution(pairs), policy, seed, opt);

        ConfigList cfg;
        flow.describe(cfg);
        cfg.emplace_back("samples", std::to_string(samples));
        cfg.emplace_back("pairs", pairs);
        cfg.emplace_back("seed", std::to_string(seed));
        cfg.emplace_back("dt", f(policy.dt));
        cfg.emplace_back("t_max", f(policy.t_max));
        cfg.emplace_back("adaptive_core", policy.adaptive_core ? "true" : "false");
        cfg.emplace_back("stages", std::to_string(first_stage) + "-" + std::to_string(last_stage));
        cfg.emplace_back("paired", paired ? "true" : "false");
        CsvTable t;
        t.comments = provenance("couple", cfg);
        t.columns = {"pair_id", "stage1", "stage2v", "stage3v", "stage2h", "stage3h", "tau_cpl", "success"};
        for (std::size_t i = 0; i < st.outcomes.size(); ++i) {
            const CouplingOutcome& o = st.outcomes[i];
            std::vector<std::string> row{std::to_string(i)};
            for (double d : o.stage_durations) row.push_back(f(d));
            row.push_back(f(o.tau_cpl));
            row.push_back(o.success ? "1" : "0");
            t.rows.push_back(std::move(row));
        }
        write_csv_file(out, t);
        std::ostream& o = info_stream(out);
        o << "mean=" << f(st.mean) << "\nse=" << f(st.standard_error) << "\nmedian=" << f(st.median)
          << "\nfailures=" << st.failures << '\n';
    }
};

struct SpectralCmd {
    FlowFlags flow;
    int n = 128;
    std::string measure = "tdiss";
    double dt = 0.0;
    int probes = 16;
    int power_iterations = 3;
    std::uint64_t seed = 1;
    int cell_n = 0;
    bool no_guard = false;
    bool no_dealias = false;
    int jobs = 0;
    std::string out = "-";

    void add(CLI::App& app)
    {
        auto* c = app.add_subcommand("spectral", "dissipation/mixing times and effective diffusivity");
        flow.add(c);
        c->add_option("--n", n, "modes per axis (power of two)")->capture_default_str();
        c->add_option("--measure", measure, "quantity")
            ->check(CLI::IsMember({"tdiss", "tmix", "deff", "relation"}))
            ->capture_default_str();
        c->add_option("--dt", dt, "time step (0 = automatic)")->capture_default_str();
        c->add_option("--probes", probes, "random probes for tdiss")->capture_default_str();
        c->add_option("--power-iterations", power_iterations, "forward-adjoint iterations")
            ->capture_default_str();
        c->add_option("--seed", seed, "probe seed")->capture_default_str();
        c->add_option("--cell-n", cell_n, "cell-problem grid (0 = automatic)")->capture_default_str();
        c->add_flag("--no-guard", no_guard, "skip the boundary-layer resolution guard");
        c->add_flag("--no-dealias", no_dealias, "disable the 2/3 rule");
        c->add_option("--jobs", jobs, "worker threads (default CELLMIX_JOBS or all cores)");
        c->add_option("--out", out, "CSV path or - for stdout")->capture_default_str();
        c->callback([this] { run(); });
    }
    void run()
    {
        const FlowParams p = flow.params();
        SolverConfig cfg;
        cfg.n = n;
        cfg.dt = dt;
        cfg.probes = probes;
        cfg.power_iterations = power_iterations;
        cfg.seed = seed;
        cfg.cell_n = cell_n;
        cfg.resolution_guard = !no_guard;
        cfg.dealias = !no_dealias;
        cfg.threads = resolve_jobs(jobs);
        cfg.validate();

        ConfigList c;
        flow.describe(c);
        c.emplace_back("measure", measure);
        c.emplace_back("n", std::to_string(n));
        c.emplace_back("dt", f(dt));
        c.emplace_back("probes", std::to_string(probes));
        c.emplace_back("power_iterations", std::to_string(power_iterations));
        c.emplace_back("seed", std::to_string(seed));
        c.emplace_back("cell_n", std::to_string(cell_n));
        c.emplace_back("resolution_guard", no_guard ? "false" : "true");
        c.emplace_back("dealias", no_dealias ? "false" : "true");
        CsvTable t;
        t.comments = provenance("spectral", c);
        if (measure == "tdiss") {
            const DissipationEstimate e = dissipation_time(p, cfg);
            t.columns = {"t_diss", "probe_max", "refined", "singular_value", "dt", "n"};
            t.rows.push_back({f(e.t_diss), f(e.probe_max), f(e.refined), f(e.singular_value), f(e.dt),
                              std::to_string(e.n)});
        } else if (measure == "tmix") {
            const MixingEstimate e = mixing_time_tv(p, cfg);
            double worst = 0.0;
            for (double v : e.tv_at_t_mix) worst = std::max(worst, v);
            t.columns = {"t_mix", "tv_at_t_mix", "sources", "dt", "n"};
            t.rows.push_back({f(e.t_mix), f(worst), std::to_string(e.sources.size()), f(e.dt),
                              std::to_string(e.n)});
        } else if (measure == "deff") {
            const Diffusivity d = effective_diffusivity(p, cfg);
            t.columns = {"d11", "d12", "d21", "d22", "cell_n", "residual"};
            t.rows.push_back({f(d.d11), f(d.d12), f(d.d21), f(d.d22), std::to_string(d.cell_n), f(d.residual)});
        } else {
            const RelationReport r = verify_tmix_tdis_relation(p, cfg);
            t.columns = {"t_diss", "t_mix", "ratio", "log_factor", "fitted_C", "log_bound", "violated"};
            t.rows.push_back({f(r.t_diss), f(r.t_mix), f(r.ratio), f(r.log_factor), f(r.fitted_C),
                              f(r.log_bound), r.violated ? "1" : "0"});
        }
        write_csv_file(out, t);
    }
};

struct SweepCmd {
    std::string spec;
    std::string out = "-";
    bool timing = false;
    int jobs = 0;

    void add(CLI::App& app)
    {
        auto* c = app.add_subcommand("sweep", "run a parameter sweep from a TOML spec");
        c->add_option("--spec", spec, "sweep spec (TOML)")->required();
        c->add_option("--out", out, "CSV path or - for stdout")->capture_default_str();
        c->add_flag("--timing", timing, "add a wall_time column (not reproducible)");
        c->add_option("--jobs", jobs, "worker threads (default CELLMIX_JOBS or all cores)");
        c->callback([this] { run(); });
    }
    void run()
    {
        const SweepSpec s = load_sweep_spec(spec);
        const auto rows = run_sweep(s, resolve_jobs(jobs));
        write_csv_file(out, sweep_table(s, rows, timing));
    }
};

struct ReportCmd {
    std::string in;
    bool fit = false;
    std::string svg;

    void add(CLI::App& app)
    {
        auto* c = app.add_subcommand("report", "fit power laws to sweep results and plot them");
        c->add_option("--in", in, "sweep CSV")->required();
        c->add_flag("--fit", fit, "print the fit summary (CSV) to stdout");
        c->add_option("--svg", svg, "directory for log-log SVG plots");
        c->callback([this] { run(); });
    }
    void run()
    {
        const CsvTable t = read_csv_file(in);
        const auto series = build_report(t);
        if (fit || svg.empty()) std::cout << fit_summary(series);
        if (!svg.empty()) {
            std::filesystem::create_directories(svg);
            for (const auto& s : series) {
                const std::string path = (std::filesystem::path(svg) / (series_stem(s) + ".svg")).string();
                std::ofstream o(path, std::ios::binary);
                if (!o) throw Error("cannot write '" + path + "'");
                o << render_svg(s);
            }
        }
    }
};

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"cellmix: diffusion in cellular flows (coupling, dissipation and mixing times)"};
    app.set_version_flag("--version", std::string(CELLMIX_VERSION));
    app.require_subcommand(1);
    FieldCmd field;
    SimulateCmd simulate;
    CoupleCmd couple;
    SpectralCmd spectral;
    SweepCmd sweep;
    ReportCmd report;
    field.add(app);
    simulate.add(app);
    couple.add(app);
    spectral.add(app);
    sweep.add(app);
    report.add(app);
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return 1;
    } catch (const Error& e) {
        std::cerr << "error: " << e.kind() << ": " << e.what() << '\n';
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
