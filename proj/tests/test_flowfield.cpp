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

#include "cellmix/errors.hpp"
#include "cellmix/flowfield.hpp"

using namespace cellmix;

namespace {

FlowParams make(double eps, double amp, double kappa = 0.01)
{
    FlowParams p;
    p.epsilon = eps;
    p.amplitude = amp;
    p.kappa = kappa;
    return p;
}

} // namespace

TEST_SUITE("flowfield")
{
    TEST_CASE("stream function at reference points")
    {
        const double eps = 0.125;
        const auto p = make(eps, 1.0);
        CHECK(stream_value({eps / 4, eps / 4}, p) == doctest::Approx(1.0).epsilon(1e-15));
        CHECK(stream_value({eps / 4, eps / 12}, p) == doctest::Approx(0.5).epsilon(1e-14));
        for (double y : {0.0, 0.013, 0.3, 0.77})
            CHECK(std::fabs(stream_value({0.0, y}, p)) <= 1e-15);
        CHECK(stream_value({3 * eps / 4, eps / 4}, p) == doctest::Approx(-1.0).epsilon(1e-15));
    }

    TEST_CASE("stream function matches the closed form")
    {
        const double eps = 0.25;
        const auto p = make(eps, 3.0);
        std::mt19937_64 gen(4);
        std::uniform_real_distribution<double> u(-3.0, 3.0);
        const double k = 2.0 * std::numbers::pi / eps;
        for (int i = 0; i < 2000; ++i) {
            const Vec2 x{u(gen), u(gen)};
            CHECK(std::fabs(stream_value(x, p) - std::sin(k * x.x1) * std::sin(k * x.x2)) <= 1e-13);
        }
    }

    TEST_CASE("cutoff profile")
    {
        const CutoffProfile c(0.25, 0.5);
        CHECK(cutoff(0.2, c) == 1.0);
        CHECK(cutoff(-0.2, c) == 1.0);
        CHECK(cutoff(0.6, c) == 0.0);
        CHECK(cutoff(0.375, c) == doctest::Approx(0.5).epsilon(1e-15));
        CHECK(cutoff(0.25, c) == 1.0);
        CHECK(cutoff(0.5, c) == 0.0);
        // C2 junctions, and g = d(h zeta)/dh.
        for (double h : {0.25, 0.5}) {
            CHECK(std::fabs(c.zeta_prime(h)) <= 1e-12);
            CHECK(std::fabs(c.zeta_second(h)) <= 1e-9);
        }
        for (double h = -0.7; h <= 0.7; h += 0.01) {
            const double d = 1e-6;
            const double fd = ((h + d) * c.zeta(h + d) - (h - d) * c.zeta(h - d)) / (2 * d);
            CHECK(c.g(h) == doctest::Approx(fd).epsilon(1e-7));
            CHECK(c.g_abs(std::fabs(h)) == doctest::Approx(c.g(h)).epsilon(1e-13));
            CHECK(std::fabs(c.g(h)) <= c.g_max() + 1e-15);
        }
        CHECK_THROWS_AS(CutoffProfile(0.5, 0.25), ValidationError);
    }

    TEST_CASE("velocity at reference points")
    {
        const double eps = 0.125;
        const auto p = make(eps, 1.0);
        const Vec2 u0 = velocity({0.0, 0.0}, p);
        CHECK(u0.x1 == 0.0);
        CHECK(u0.x2 == 0.0);
        const Vec2 u = velocity({eps / 8, 0.0}, p);
        CHECK(u.x1 == doctest::Approx(-std::sqrt(2.0) * std::numbers::pi / eps).epsilon(1e-13));
        CHECK(std::fabs(u.x2) <= 1e-12);
        // |H| = 0.75 lies past the outer cutoff.
        const double k = 2.0 * std::numbers::pi / eps;
        const double x2 = std::asin(0.75) / k;
        const Vec2 v = velocity({eps / 4, x2}, p);
        CHECK(std::fabs(stream_value({eps / 4, x2}, p) - 0.75) <= 1e-12);
        CHECK(v.x1 == 0.0);
        CHECK(v.x2 == 0.0);
    }

    TEST_CASE("velocity is linear in the amplitude and tangent to level sets")
    {
        const double eps = 0.25;
        const FlowField f1(make(eps, 1.0)), f7(make(eps, 7.0));
        std::mt19937_64 gen(9);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (int i = 0; i < 500; ++i) {
            const Vec2 x{u(gen), u(gen)};
            const Vec2 a = f1.velocity_at(x), b = f7.velocity_at(x);
            CHECK(b.x1 == doctest::Approx(7.0 * a.x1).epsilon(1e-13));
            CHECK(b.x2 == doctest::Approx(7.0 * a.x2).epsilon(1e-13));
            const StreamSample s = f1.sample(f1.to_lattice(x));
            CHECK(std::fabs(a.x1 * s.dH1 + a.x2 * s.dH2) <=
                  1e-12 * f1.wavenumber() * f1.speed_bound());
            CHECK(std::hypot(b.x1, b.x2) <= f7.speed_bound() * (1 + 1e-12));
        }
    }

    TEST_CASE("Jacobian agrees with finite differences and is trace free")
    {
        const FlowField f(make(0.25, 2.0));
        std::mt19937_64 gen(11);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        const double h = 1e-7;
        const double scale = f.speed_bound() * f.wavenumber();
        for (int i = 0; i < 300; ++i) {
            const Vec2 x{u(gen), u(gen)};
            const Jacobian J = f.jacobian_at(x);
            const Vec2 a = f.velocity_at({x.x1 + h, x.x2}), b = f.velocity_at({x.x1 - h, x.x2});
            const Vec2 c = f.velocity_at({x.x1, x.x2 + h}), d = f.velocity_at({x.x1, x.x2 - h});
            CHECK(std::fabs(J.d11 - (a.x1 - b.x1) / (2 * h)) <= 1e-5 * scale);
            CHECK(std::fabs(J.d21 - (a.x2 - b.x2) / (2 * h)) <= 1e-5 * scale);
            CHECK(std::fabs(J.d12 - (c.x1 - d.x1) / (2 * h)) <= 1e-5 * scale);
            CHECK(std::fabs(J.d22 - (c.x2 - d.x2) / (2 * h)) <= 1e-5 * scale);
            CHECK(std::fabs(J.d11 + J.d22) <= 1e-12 * scale);
        }
    }

    TEST_CASE("periodicity and half-cell antisymmetry")
    {
        const double eps = 0.125;
        const FlowField f(make(eps, 5.0));
        std::mt19937_64 gen(2);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        std::uniform_int_distribution<int> shift(-40, 40);
        const double tol = 1e-12 * f.speed_bound();
        for (int i = 0; i < 1000; ++i) {
            const Vec2 x{u(gen), u(gen)};
            const Vec2 v = f.velocity_at(x);
            const Vec2 w = f.velocity_at({x.x1 + shift(gen) * eps, x.x2 + shift(gen) * eps});
            CHECK(std::fabs(v.x1 - w.x1) <= tol);
            CHECK(std::fabs(v.x2 - w.x2) <= tol);
            const Vec2 h = f.velocity_at({x.x1 + eps / 2, x.x2});
            CHECK(std::fabs(v.x1 + h.x1) <= tol);
            CHECK(std::fabs(v.x2 + h.x2) <= tol);
        }
    }

    TEST_CASE("lattice form round trip")
    {
        const FlowField f(make(0.125, 1.0));
        std::mt19937_64 gen(5);
        std::uniform_real_distribution<double> u(-10.0, 10.0);
        for (int i = 0; i < 1000; ++i) {
            const Vec2 x{u(gen), u(gen)};
            const LatticePoint p = f.to_lattice(x);
            CHECK(std::fabs(p.s[0]) <= f.quarter_cell() * (1 + 1e-15));
            CHECK(std::fabs(p.s[1]) <= f.quarter_cell() * (1 + 1e-15));
            const Vec2 y = f.to_plane(p);
            CHECK(std::fabs(y.x1 - x.x1) <= 1e-13);
            CHECK(std::fabs(y.x2 - x.x2) <= 1e-13);
            const Vec2 t = f.to_torus(p);
            CHECK(t.x1 >= 0.0);
            CHECK(t.x1 < 1.0);
            CHECK(std::fabs(std::remainder(t.x1 - x.x1, 1.0)) <= 1e-12);
        }
    }

    TEST_CASE("diagnostics: exact divergence and symmetry identities")
    {
        for (double eps : {0.25, 0.125}) {
            const double A = 100.0;
            const FieldDiagnostics d = field_diagnostics(make(eps, A), 64);
            CHECK(d.max_div <= 1e-8 * A / eps);
            for (double r : d.symmetry) CHECK(r <= 1e-12 * A / eps);
            CHECK(d.periodicity <= 1e-12 * A / eps);
            CHECK(d.max_speed <= d.speed_bound);
            CHECK(d.max_speed >= 0.99 * A * 2 * std::numbers::pi / eps);
        }
    }

    TEST_CASE("diagnostics vanish without flow")
    {
        const FieldDiagnostics d = field_diagnostics(make(0.25, 0.0), 32);
        CHECK(d.max_div == 0.0);
        CHECK(d.max_div_spectral == 0.0);
        for (double r : d.symmetry) CHECK(r == 0.0);
        CHECK(d.periodicity == 0.0);
        CHECK(d.max_speed == 0.0);
    }

    TEST_CASE("parameter validation")
    {
        CHECK_THROWS_AS(make(0.3, 1.0).validate(), ValidationError);
        CHECK_THROWS_AS(make(0.25, -1.0).validate(), ValidationError);
        CHECK_THROWS_AS(make(0.25, 1.0, 0.0).validate(), ValidationError);
        CHECK_NOTHROW(make(1.0 / 16, 1.0).validate());
        CHECK(make(1.0 / 16, 1.0).cells() == 16);
        CHECK_THROWS_AS(field_diagnostics(make(0.25, 1.0), 48), ValidationError);
        CHECK(make(0.25, 4.0, 0.01).delta() == doctest::Approx(0.05));
    }
}
