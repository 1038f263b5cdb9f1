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
#include <numbers>
#include <random>
#include <vector>

#include "cellmix/errors.hpp"
#include "cellmix/stopping.hpp"

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

StepSegment segment(const FlowField& f, Vec2 a, Vec2 b, double t_prev, double dt)
{
    return {f.to_lattice(a), f.to_lattice(b), t_prev, dt};
}

// Trajectory sampled from a parametric plane curve.
template <class Curve>
Trajectory sampled(const FlowField& f, Curve&& curve, double t_end, double dt)
{
    Trajectory tr;
    tr.start = f.to_lattice(curve(0.0));
    const int steps = static_cast<int>(std::ceil(t_end / dt));
    for (int i = 1; i <= steps; ++i) tr.samples.push_back({i * dt, f.to_lattice(curve(i * dt))});
    return tr;
}

Trajectory random_path(const FlowParams& p, Vec2 x0, double t_end, std::uint64_t stream)
{
    const FlowField f(p);
    StepPolicy pol = make_policy(p);
    RngStream rng(31, stream);
    return simulate_until(f, f.to_lattice(x0), stop_at_time(t_end), pol, rng).first;
}

} // namespace

TEST_SUITE("stopping")
{
    TEST_CASE("line hit by linear interpolation")
    {
        const FlowField f(make(0.5, 1.0, 0.01));
        auto ev = detect_line_hit(f, segment(f, {0.24, 0.1}, {0.26, 0.1}, 2.0, 1e-3), 0);
        REQUIRE(ev);
        CHECK(ev->time == doctest::Approx(2.0 + 5e-4).epsilon(1e-12));
        CHECK(ev->location.x1 == doctest::Approx(0.25).epsilon(1e-14));
        CHECK(ev->location.x2 == doctest::Approx(0.1).epsilon(1e-14));
        CHECK(ev->kind == EventKind::vertical_line);

        auto on = detect_line_hit(f, segment(f, {0.1, 0.25}, {0.12, 0.26}, 1.0, 1e-3), 1);
        REQUIRE(on);
        CHECK(on->time == 1.0);
        CHECK(on->kind == EventKind::horizontal_line);

        CHECK_FALSE(detect_line_hit(f, segment(f, {0.05, 0.05}, {0.07, 0.06}, 0.0, 1e-3), 0));
        CHECK_FALSE(detect_line_hit(f, segment(f, {0.05, 0.05}, {0.07, 0.06}, 0.0, 1e-3), 1));
        // Backwards crossing and a crossing of a negative line.
        auto back = detect_line_hit(f, segment(f, {-0.2, 0.1}, {-0.3, 0.1}, 0.0, 1.0), 0);
        REQUIRE(back);
        CHECK(back->time == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(back->location.x1 == doctest::Approx(-0.25).epsilon(1e-14));
        CHECK_THROWS_AS(detect_line_hit(f, segment(f, {0.1, 0.1}, {0.25, 0.1}, 0.0, 1.0), 0),
                        StepTooLarge);
    }

    TEST_CASE("line hit with the bridge correction")
    {
        const FlowField f(make(0.5, 1.0, 0.01));
        const StepSegment s = segment(f, {0.245, 0.1}, {0.246, 0.1}, 0.0, 1e-3);
        BridgeDraw yes{0.01, 0.0}, no{0.01, 1.0};
        CHECK_FALSE(detect_line_hit(f, s, 0));
        CHECK_FALSE(detect_line_hit(f, s, 0, &no));
        auto ev = detect_line_hit(f, s, 0, &yes);
        REQUIRE(ev);
        CHECK(ev->location.x1 == doctest::Approx(0.25).epsilon(1e-14));
        // Acceptance probability exp(-2ab/(kappa dt)) = exp(-0.8).
        const double p = std::exp(-2 * 0.005 * 0.004 / (0.01 * 1e-3));
        BridgeDraw below{0.01, p * 0.999}, above{0.01, p * 1.001};
        CHECK(detect_line_hit(f, s, 0, &below));
        CHECK_FALSE(detect_line_hit(f, s, 0, &above));
    }

    TEST_CASE("level hit")
    {
        const double eps = 0.25;
        const FlowField f(make(eps, 1.0, 0.01));
        const double k = 2 * std::numbers::pi / eps;
        auto on_level = [&](double h) { return Vec2{eps / 4, std::asin(h) / k}; };

        const StepSegment from_level = segment(f, on_level(0.3), on_level(0.35), 1.0, 0.1);
        auto at = detect_level_hit(f, from_level, f.stream(from_level.prev));
        REQUIRE(at);
        CHECK(at->time == doctest::Approx(1.0));

        // H runs from -0.01 to 0.01 along x2 across the line x2 = 0.
        auto mid = detect_level_hit(f, segment(f, on_level(-0.01), on_level(0.01), 0.0, 1.0), 0.0);
        REQUIRE(mid);
        CHECK(mid->time == doctest::Approx(0.5).epsilon(1e-6));
        CHECK(std::fabs(f.stream(mid->point)) <= 1e-10);
        CHECK(mid->kind == EventKind::level_up);

        auto down = detect_level_hit(f, segment(f, on_level(0.6), on_level(0.2), 0.0, 1.0), 0.4);
        REQUIRE(down);
        CHECK(down->kind == EventKind::level_down);
        CHECK(std::fabs(f.stream(down->point) - 0.4) <= 1e-10);

        CHECK_FALSE(detect_level_hit(f, segment(f, on_level(0.2), on_level(0.1), 0.0, 1.0), 0.3));
    }

    TEST_CASE("diagonal hit")
    {
        const double eps = 0.25;
        const FlowField f(make(eps, 1.0, 0.01));
        auto d = detect_diagonal_hit(f, segment(f, {0.03, 0.04}, {0.05, 0.04}, 0.0, 1.0), 0);
        REQUIRE(d);
        CHECK(d->time == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(d->location.x1 == doctest::Approx(d->location.x2).epsilon(1e-12));
        CHECK_FALSE(detect_diagonal_hit(f, segment(f, {0.03, 0.04}, {0.05, 0.04}, 0.0, 1.0), 1));
        // x1 + x2 = eps/2.
        auto a = detect_diagonal_hit(f, segment(f, {0.06, 0.06}, {0.07, 0.06}, 0.0, 1.0), 1);
        REQUIRE(a);
        CHECK(a->location.x1 + a->location.x2 == doctest::Approx(eps / 2).epsilon(1e-12));
    }

    TEST_CASE("clock on a synthetic oscillation")
    {
        // H(t) = 2 delta sin(10 t) along x1 = eps/4: returns at t = m pi/10,
        // layer exits where |sin(10 t)| = 1/2.
        const double eps = 0.25, delta = 0.05;
        const FlowField f(make(eps, 4.0, 0.01));
        const double k = 2 * std::numbers::pi / eps;
        const double pi = std::numbers::pi;
        auto curve = [&](double t) { return Vec2{eps / 4, std::asin(2 * delta * std::sin(10 * t)) / k}; };
        const Trajectory tr = sampled(f, curve, 1.0, 1e-5);
        const StoppingClock c = boundary_layer_clock(f, tr, delta);
        REQUIRE(c.tau0);
        CHECK(c.tau0->time == 0.0);
        REQUIRE(c.tau_seq.size() == 3);
        REQUIRE(c.sigma_seq.size() == 4);
        for (int m = 0; m < 4; ++m)
            CHECK(c.sigma_seq[m].time == doctest::Approx((m * pi + pi / 6) / 10).epsilon(1e-7));
        for (int m = 0; m < 3; ++m) {
            CHECK(c.tau_seq[m].time == doctest::Approx((m + 1) * pi / 10).epsilon(1e-7));
            CHECK(c.tau_seq[m].kind == EventKind::separatrix);
        }
        CHECK(c.tau_axis[1].size() == 3);
        CHECK(c.tau_axis[0].empty());
        CHECK(axis_filtered_returns(c, 1, eps).size() == 3);
        CHECK(axis_filtered_returns(c, 0, eps).empty());
    }

    TEST_CASE("clock stays empty inside a core")
    {
        const FlowParams p = make(0.25, 4.0, 1e-8);
        const FlowField f(p);
        const Trajectory tr = random_path(p, {0.0625, 0.0625}, 0.01, 0);
        const StoppingClock c = boundary_layer_clock(f, tr, p.delta());
        CHECK_FALSE(c.tau0);
        CHECK(c.sigma_seq.empty());
        CHECK(c.tau_seq.empty());
    }

    TEST_CASE("corner returns count on both axes")
    {
        const double eps = 0.25;
        const FlowField f(make(eps, 4.0, 0.01));
        // From a vertical line to a cell centre, then straight through the
        // corner (eps/2, eps/2) at t = 3/4.
        auto curve = [&](double t) {
            if (t <= 0.5) return Vec2{eps * (0.5 + 0.5 * t), 0.75 * eps};
            const double c = 0.75 * eps - (t - 0.5) * eps;
            return Vec2{c, c};
        };
        const Trajectory tr = sampled(f, curve, 1.0, 1.0 / 64);
        const StoppingClock c = boundary_layer_clock(f, tr, 0.05);
        REQUIRE(c.tau0);
        CHECK(c.tau0->time == 0.0);
        REQUIRE(c.tau_seq.size() == 1);
        CHECK(c.tau_seq[0].time == doctest::Approx(0.75).epsilon(1e-12));
        CHECK(c.tau_axis[0].size() == 1);
        CHECK(c.tau_axis[1].size() == 1);
        CHECK(axis_filtered_returns(c, 0, eps).size() == 1);
        CHECK(axis_filtered_returns(c, 1, eps).size() == 1);
    }

    TEST_CASE("diagonal-return clock on a circular arc")
    {
        // Arc around the cell centre (eps/4, eps/4) of radius 0.3 eps, from
        // 35 degrees: crosses the diagonal at 45 degrees, then the line
        // x2 = eps/2 where sin(theta) = 0.25 / 0.3.
        const double eps = 0.25, R = 0.3 * eps;
        const FlowField f(make(eps, 1.0, 0.01));
        const double th0 = 35.0 * std::numbers::pi / 180;
        auto curve = [&](double t) {
            return Vec2{eps / 4 + R * std::cos(th0 + t), eps / 4 + R * std::sin(th0 + t)};
        };
        const Trajectory tr = sampled(f, curve, 0.5, 1e-4);
        const auto check = diagonal_return_clock(f, tr);
        REQUIRE(check.size() >= 1);
        CHECK(check[0].time == doctest::Approx(std::asin(0.25 / 0.3) - th0).epsilon(1e-6));
        CHECK(std::fabs(f.stream(check[0].point)) <= 1e-12);

        // A return without a diagonal crossing is not a diagonal return.
        auto straight = [&](double t) { return Vec2{(0.1 - 0.15 * t) * eps, 0.3 * eps}; };
        const Trajectory tr2 = sampled(f, straight, 1.0, 1.0 / 64);
        CHECK(diagonal_return_clock(f, tr2).empty());
        CHECK(boundary_layer_clock(f, tr2, 0.05).tau0);
    }

    TEST_CASE("clock invariants on random trajectories")
    {
        const FlowParams p = make(0.25, 4.0, 0.01);
        const FlowField f(p);
        const double delta = p.delta();
        std::mt19937_64 gen(3);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        std::size_t total = 0;
        for (int r = 0; r < 12; ++r) {
            const Trajectory tr = random_path(p, {u(gen), u(gen)}, 3.0, r);
            ClockOptions opt;
            opt.diagonal = true;
            ClockTracker tracker(f, delta, opt);
            tracker.start(tr.start);
            TrajectorySample prev{0.0, tr.start};
            for (const auto& s : tr.samples) {
                tracker.observe({prev.x, s.x, prev.t, s.t - prev.t});
                prev = s;
            }
            const StoppingClock& c = tracker.clock();
            total += c.tau_seq.size();
            if (c.tau0 && !c.sigma_seq.empty()) CHECK(c.tau0->time <= c.sigma_seq[0].time);
            CHECK(c.tau_seq.size() <= c.sigma_seq.size());
            CHECK(c.sigma_seq.size() <= c.tau_seq.size() + 1);
            for (std::size_t n = 0; n < c.tau_seq.size(); ++n) {
                CHECK(c.sigma_seq[n].time <= c.tau_seq[n].time);
                if (n + 1 < c.sigma_seq.size()) CHECK(c.tau_seq[n].time <= c.sigma_seq[n + 1].time);
                CHECK(std::fabs(f.stream(c.tau_seq[n].point)) <= 1e-8);
            }
            for (const auto& s : c.sigma_seq) CHECK(std::fabs(std::fabs(f.stream(s.point)) - delta) <= 1e-8);
            // Set cover: every return is on a line of at least one family.
            const auto a0 = axis_filtered_returns(c, 0, p.epsilon);
            const auto a1 = axis_filtered_returns(c, 1, p.epsilon);
            CHECK(a0.size() + a1.size() >= c.tau_seq.size());
            CHECK(c.tau_axis[0].size() == a0.size());
            CHECK(c.tau_axis[1].size() == a1.size());
            for (const auto& ev : c.tau_seq) {
                bool found = false;
                for (const auto& e : a0) found = found || e.time == ev.time;
                for (const auto& e : a1) found = found || e.time == ev.time;
                CHECK(found);
            }
            for (std::size_t n = 0; n < c.tau_check_seq.size(); ++n) {
                CHECK(std::fabs(f.stream(c.tau_check_seq[n].point)) <= 1e-8);
                if (n > 0) CHECK(c.tau_check_seq[n].time > c.tau_check_seq[n - 1].time);
            }
            // The sampled-trajectory helper agrees with the streaming fold.
            const StoppingClock b = boundary_layer_clock(f, tr, delta);
            REQUIRE(b.tau_seq.size() == c.tau_seq.size());
            for (std::size_t n = 0; n < b.tau_seq.size(); ++n) CHECK(b.tau_seq[n].time == c.tau_seq[n].time);
        }
        CHECK(total > 20);
    }

    TEST_CASE("event times converge at first order under step refinement")
    {
        // First diagonal crossing of Euler-Maruyama paths driven by one fine
        // Brownian path per sample; the drift carries the path across.
        const FlowParams p = make(0.25, 1.0, 1e-4);
        const FlowField f(p);
        const double h = 2e-5;
        const int ref_factor = 8, levels = 3, n_fine = 4096 * 8;
        std::vector<double> err(levels, 0.0);
        std::mt19937_64 gen(10);
        std::normal_distribution<double> normal;
        int used = 0;
        for (int path = 0; path < 30; ++path) {
            std::vector<Vec2> dw(n_fine);
            for (auto& g : dw) g = {normal(gen), normal(gen)};
            auto first_hit = [&](double dt) {
                const int r = static_cast<int>(std::lround(dt / (h / ref_factor)));
                PlanePoint x{0.02, 0.05 + 0.0005 * path};
                LatticePoint prev = f.to_lattice({x.x1, x.x2});
                for (int s = 0; (s + 1) * r <= n_fine; ++s) {
                    Vec2 g{0, 0};
                    for (int q = 0; q < r; ++q) {
                        g.x1 += dw[s * r + q].x1;
                        g.x2 += dw[s * r + q].x2;
                    }
                    g.x1 /= std::sqrt(double(r));
                    g.x2 /= std::sqrt(double(r));
                    x = advance(f, x, dt, g, NoiseTransform::identity(), p.kappa);
                    const LatticePoint next = f.to_lattice({x.x1, x.x2});
                    StepSegment seg{prev, next, s * dt, dt};
                    if (auto ev = detect_diagonal_hit(f, seg, 0)) return ev->time;
                    prev = next;
                }
                return -1.0;
            };
            const double ref = first_hit(h / ref_factor);
            if (ref < 0) continue;
            std::vector<double> t(levels);
            bool ok = true;
            for (int l = 0; l < levels; ++l) {
                t[l] = first_hit(h * (1 << (levels - 1 - l)));
                ok = ok && t[l] >= 0;
            }
            if (!ok) continue;
            ++used;
            for (int l = 0; l < levels; ++l) err[l] += std::fabs(t[l] - ref);
        }
        REQUIRE(used >= 20);
        // err[0] uses the largest step.
        const double slope = std::log(err[0] / err[levels - 1]) / std::log(double(1 << (levels - 1)));
        CHECK(slope >= 0.8);
    }
}
