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


#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include "cellmix/csv.hpp"
#include "cellmix/errors.hpp"
#include "cellmix/experiments.hpp"
#include "cellmix/report.hpp"
#include "cellmix/sweep.hpp"

using namespace cellmix;

namespace {

FlowParams make(double eps, double amp, double kappa)
{
    FlowParams p;
    p.epsilon = eps;
    p.amplitude = amp;
    p.kappa = kappa;
    return p;
}

struct Canon {
    double eps, amp, kappa;
    Regime expect;
};

// Labels evaluated by hand from the branch inequalities.
const Canon kTable[] = {
    {0.1, 100.0, 1e-4, Regime::I},
    {0.1, 0.01, 1e-5, Regime::III},
    {0.1, 0.05, 1e-4, Regime::out_of_theory},
    {0.1, 10.0, 1e-4, Regime::II},
    {0.1, 0.9, 1e-4, Regime::III},
    {0.5, 4.0, 0.04, Regime::I},
    {0.125, 100.0, 0.01, Regime::II},
    {0.0625, 8.0, 1e-3, Regime::III},
    {0.0625, 2.0, 1e-3, Regime::out_of_theory},
    {0.0625, 1e5, 1e-3, Regime::I},
    {0.25, 64.0, 0.01, Regime::I},
    {0.25, 0.5, 0.01, Regime::out_of_theory},
};

std::string three_regime_sweep(const std::string& estimator)
{
    return "name = \"eps3\"\nestimator = \"" + estimator +
           "\"\neps = [0.5, 0.3333333333333333, 0.25]\namp = [4.0]\nkappa = [0.02]\nsamples = 30\nseed = 7\n";
}

} // namespace

TEST_SUITE("experiments") {

TEST_CASE("regime labels on canonical points")
{
    for (const auto& c : kTable) {
        CAPTURE(c.eps);
        CAPTURE(c.amp);
        CAPTURE(c.kappa);
        const auto lab = classify_regime(make(c.eps, c.amp, c.kappa));
        CHECK(lab.regime == c.expect);
        const double e4 = std::pow(c.eps, 4), delta = std::sqrt(c.kappa / c.amp);
        CHECK(lab.delta == doctest::Approx(delta));
        CHECK(lab.margin_I == doctest::Approx(c.amp * e4 / (c.kappa * std::log(delta) * std::log(delta))));
        CHECK(lab.margin_II == doctest::Approx(c.amp * e4 / c.kappa));
        CHECK(lab.margin_III == doctest::Approx(c.amp * c.eps * c.eps / (10.0 * c.kappa)));
        CHECK(lab.cell_time == doctest::Approx(c.eps * c.eps / c.kappa));
    }
    CHECK(classify_regime(make(0.5, 0.0, 0.04)).regime == Regime::out_of_theory);
    RegimeThresholds loose;
    loose.separation = 1.0;
    CHECK(classify_regime(make(0.25, 0.5, 0.01), loose).regime == Regime::III);
    CHECK(std::string(to_string(Regime::II)) == "II");
}

TEST_CASE("predicted bounds")
{
    const auto b3 = predicted_bound(make(0.0625, 8.0, 1e-3));
    CHECK(b3.regime == Regime::III);
    CHECK(b3.branch == doctest::Approx(11.180339887).epsilon(1e-9));
    const auto b1 = predicted_bound(make(0.5, 4.0, 0.04));
    CHECK(b1.branch == doctest::Approx(0.25 / 0.04));
    const double ln = std::log(0.1);
    CHECK(b1.averaging == doctest::Approx(0.25 / 0.04 + ln * ln / (0.25 * 4.0)));
    CHECK_THROWS_AS(predicted_bound(make(0.0625, 2.0, 1e-3)), OutOfTheory);

    // II/III boundary: eps^4 = kappa / A makes eps^2/kappa = 1/sqrt(kappa A).
    const double kappa = 1e-3, amp = 8.0, eps = std::pow(kappa / amp, 0.25);
    const auto lo = predicted_bound(make(eps, amp * (1.0 - 1e-6), kappa));
    CHECK(lo.regime == Regime::III);
    CHECK(lo.branch == doctest::Approx(eps * eps / kappa).epsilon(1e-5));
}

TEST_CASE("bound continuity across the I/II boundary")
{
    const double eps = 0.125, kappa = 0.01;
    double amp = 100.0;
    for (int i = 0; i < 200; ++i) {
        const double l = std::log(std::sqrt(kappa / amp));
        amp = kappa * l * l / std::pow(eps, 4);
    }
    const auto below = predicted_bound(make(eps, amp * (1.0 - 1e-6), kappa));
    const auto above = predicted_bound(make(eps, amp * (1.0 + 1e-6), kappa));
    CHECK(below.regime == Regime::II);
    CHECK(above.regime == Regime::I);
    const double r = below.branch / above.branch;
    CHECK(r >= 0.5);
    CHECK(r <= 2.0 * (1.0 + 1e-5));
}

TEST_CASE("power-law fits")
{
    std::vector<std::pair<double, double>> sq, flat, noisy;
    std::mt19937_64 rng(5);
    std::normal_distribution<double> nd(0.0, 0.01);
    for (double x : {1.0, 2.0, 4.0, 8.0, 16.0}) {
        sq.emplace_back(x, x * x);
        flat.emplace_back(x, 3.0);
        noisy.emplace_back(x, 3.0 / std::sqrt(x) * (1.0 + nd(rng)));
    }
    const auto a = fit_power_law(sq);
    CHECK(a.slope == doctest::Approx(2.0));
    CHECK(a.r2 == doctest::Approx(1.0));
    CHECK(a.slope_se == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(a.n_points == 5);
    CHECK(fit_power_law(flat).slope == doctest::Approx(0.0).epsilon(1e-12));
    const auto n = fit_power_law(noisy);
    CHECK(std::abs(n.slope + 0.5) <= 0.05);
    CHECK(std::exp(n.intercept) == doctest::Approx(3.0).epsilon(0.05));
    CHECK(n.residual_band > 0.0);

    CHECK_THROWS_AS(fit_power_law({{1.0, 1.0}, {2.0, 2.0}}), TooFewPoints);
    CHECK_THROWS_AS(fit_power_law({{1.0, 1.0}, {1.0, 2.0}, {3.0, 2.0}}), ValidationError);
    CHECK_THROWS_AS(fit_power_law({{1.0, 1.0}, {2.0, 0.0}, {3.0, 2.0}}), ValidationError);
}

TEST_CASE("mean and standard error")
{
    const auto m = mean_and_se({1.0, 2.0, 3.0, 4.0});
    CHECK(m.mean == doctest::Approx(2.5));
    CHECK(m.se == doctest::Approx(std::sqrt(5.0 / 3.0) / 2.0));
    CHECK(mean_and_se({7.0}).se == 0.0);
}

TEST_CASE("lifted walk moments")
{
    const auto p = make(0.5, 4.0, 0.04);
    const auto rep = moment_report(p, {1, 2, 4}, 120, 3);
    REQUIRE(rep.s2.size() == 3);
    CHECK(rep.samples == 120);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(rep.s4[i].mean >= rep.s2[i].mean * rep.s2[i].mean);
        CHECK(std::abs(rep.s1[i].mean) <= 3.0 * rep.s1[i].se + 1e-12);
    }
    CHECK(rep.xi2.size() == 4);
    CHECK(rep.s2[2].mean > rep.s2[0].mean);
    CHECK_THROWS_AS(moment_report(p, {1}, 99, 3), ValidationError);
    CHECK_THROWS_AS(moment_report(make(0.0625, 8.0, 1e-3), {1}, 100, 3), ValidationError);
}

TEST_CASE("crossing-rate diagnostics")
{
    const auto p = make(0.5, 4.0, 0.04);
    const std::vector<double> grid{1.0, 4.0, 16.0, 64.0};
    const auto rep = crossing_rate_report(p, 3, grid, 100, 9);
    CHECK(rep.regime == Regime::I);
    REQUIRE(rep.cdf.size() == grid.size());
    for (std::size_t i = 1; i < rep.cdf.size(); ++i) CHECK(rep.cdf[i] >= rep.cdf[i - 1]);
    REQUIRE(rep.median_tau.size() == 3);
    CHECK(rep.median_tau[0] < rep.median_tau[1]);
    CHECK(rep.median_tau[1] < rep.median_tau[2]);

    const auto chk = crossing_rate_report(p, 2, grid, 100, 9, {}, true);
    REQUIRE(chk.mean_tau_check.size() == 2);
    CHECK(chk.mean_tau_check[1].mean > chk.mean_tau_check[0].mean);
    CHECK_THROWS_AS(crossing_rate_report(p, 1, grid, 50, 9), ValidationError);
}

TEST_CASE("sweep spec parsing")
{
    const auto s = parse_sweep_spec(three_regime_sweep("tau_cpl"));
    CHECK(s.name == "eps3");
    CHECK(s.estimator == Estimator::tau_cpl);
    CHECK(s.eps.size() == 3);
    CHECK(s.samples == 30);
    CHECK(s.seed == 7);
    CHECK(parse_sweep_spec("estimator = \"bound\"\neps = 0.5\namp = 4\nkappa = 0.04\n").eps.size() == 1);
    CHECK_THROWS_AS(parse_sweep_spec("estimator = \"nope\"\neps = [0.5]\namp = [4]\nkappa = [0.04]\n"),
                    ValidationError);
    CHECK_THROWS_AS(parse_sweep_spec(three_regime_sweep("bound") + "colour = 3\n"), ValidationError);
    CHECK_THROWS_AS(parse_sweep_spec("estimator = \"bound\"\namp = [4]\nkappa = [0.04]\n"), ValidationError);
    CHECK_THROWS_AS(parse_sweep_spec("eps = [0.5\n"), ValidationError);
    for (Estimator e : {Estimator::tau_cpl, Estimator::stage_sum, Estimator::tau_check, Estimator::moment_s2,
                        Estimator::tau_return, Estimator::tdiss, Estimator::tmix, Estimator::deff,
                        Estimator::relation, Estimator::bound})
        CHECK(parse_estimator(to_string(e)) == e);
}

TEST_CASE("empty sweep gives a header-only table")
{
    auto s = parse_sweep_spec("estimator = \"bound\"\neps = []\namp = [4]\nkappa = [0.04]\n");
    const auto rows = run_sweep(s);
    CHECK(rows.empty());
    const auto t = sweep_table(s, rows, false);
    CHECK(t.rows.empty());
    std::ostringstream o;
    write_csv(o, t);
    CHECK(o.str().find("eps,amp,kappa,regime,estimator,value") != std::string::npos);
}

TEST_CASE("sweeps are reproducible and record failures")
{
    const auto s = parse_sweep_spec(three_regime_sweep("tau_cpl"));
    const auto r1 = run_sweep(s), r2 = run_sweep(s);
    REQUIRE(r1.size() == 3);
    CHECK(r1[0].regime == Regime::I);
    CHECK(r1[1].regime == Regime::II);
    CHECK(r1[2].regime == Regime::III);
    std::ostringstream a, b;
    write_csv(a, sweep_table(s, r1, false));
    write_csv(b, sweep_table(s, r2, false));
    CHECK(a.str() == b.str());
    for (const auto& r : r1) {
        CHECK(r.status == "ok");
        CHECK(r.value > 0.0);
        CHECK(r.n_samples == 30);
    }

    const auto bad = parse_sweep_spec("estimator = \"tau_cpl\"\neps = [0.25, 0.5]\namp = [0.5]\nkappa = [0.04]\n");
    const auto rows = run_sweep(bad);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].status.rfind("OutOfTheory", 0) == 0);
    CHECK(std::isnan(rows[0].value));
}

TEST_CASE("csv round trip")
{
    for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 1e300, 0.0, 123456789.0}) {
        CHECK(parse_double(format_double(v)) == v);
    }
    CHECK(std::isnan(parse_double("nan")));
    CHECK(parse_double("-inf") == -INFINITY);
    CHECK_THROWS_AS(parse_double("1.5x"), ValidationError);

    CsvTable t;
    t.comments = provenance("test", {{"seed", "7"}});
    t.columns = {"a", "b"};
    t.rows = {{"1", "x"}, {"2.5", "y"}};
    std::ostringstream o;
    write_csv(o, t);
    std::istringstream in(o.str());
    const auto u = read_csv(in);
    CHECK(u.columns == t.columns);
    CHECK(u.rows == t.rows);
    CHECK(u.comments == t.comments);
    CHECK(u.column("b") == 1);
    CHECK_THROWS_AS(u.column("c"), ValidationError);
}

TEST_CASE("report fits the bound along amplitude")
{
    const auto s = parse_sweep_spec(
        "estimator = \"bound\"\neps = [0.0625]\namp = [4.0, 8.0, 16.0, 32.0]\nkappa = [0.001]\n");
    const auto t = sweep_table(s, run_sweep(s), false);
    const auto series = build_report(t);
    REQUIRE(series.size() == 1);
    CHECK(series[0].variable == "amp");
    REQUIRE(series[0].fitted);
    CHECK(series[0].fit.slope == doctest::Approx(-0.5).epsilon(1e-9));
    CHECK(fit_summary(series).find("amp") != std::string::npos);
    const auto svg = render_svg(series[0]);
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(svg.find("</svg>") != std::string::npos);
    CHECK(series_stem(series[0]).find('/') == std::string::npos);
}

} // TEST_SUITE
