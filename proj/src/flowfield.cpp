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

#include "cellmix/flowfield.hpp"

#include <algorithm>
#include <cstdio>
#include <vector>

#include "cellmix/errors.hpp"
#include "cellmix/fft.hpp"

namespace cellmix {

std::int64_t FlowParams::cells() const
{
    return static_cast<std::int64_t>(std::llround(1.0 / epsilon));
}

void FlowParams::validate() const
{
    if (!(epsilon > 0.0) || !(epsilon <= 1.0))
        throw ValidationError("epsilon must lie in (0, 1]");
    const double inv = 1.0 / epsilon;
    if (std::fabs(inv - std::round(inv)) > 1e-9 * inv)
        throw ValidationError("1/epsilon must be a positive integer");
    if (!(kappa > 0.0)) throw ValidationError("kappa must be positive");
    if (!(amplitude >= 0.0) || !std::isfinite(amplitude))
        throw ValidationError("amplitude must be finite and non-negative");
    if (!(cutoff_inner > 0.0 && cutoff_inner < cutoff_outer && cutoff_outer <= 1.0))
        throw ValidationError("cutoff levels must satisfy 0 < inner < outer <= 1");
}

std::string FlowParams::describe() const
{
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "eps=%.17g amp=%.17g kappa=%.17g delta=%.17g cutoff_inner=%.17g cutoff_outer=%.17g",
                  epsilon, amplitude, kappa, delta(), cutoff_inner, cutoff_outer);
    return buf;
}

// ---------------------------------------------------------------------------
// Cutoff
// ---------------------------------------------------------------------------

CutoffProfile::CutoffProfile(double inner, double outer)
    : inner_(inner), outer_(outer), inv_width_(1.0 / (outer - inner))
{
    if (!(inner > 0.0 && inner < outer && outer <= 1.0))
        throw ValidationError("cutoff levels must satisfy 0 < inner < outer <= 1");
    // |g| peaks inside (inner, outer); sample densely then polish with a
    // golden-section search on |g|.
    double best_h = 0.0, best = 1.0;
    const int samples = 4096;
    for (int i = 0; i <= samples; ++i) {
        const double h = outer_ * i / samples;
        const double v = std::fabs(g_abs(h));
        if (v > best) { best = v; best_h = h; }
    }
    double a = std::max(0.0, best_h - outer_ / samples);
    double b = std::min(outer_, best_h + outer_ / samples);
    const double r = 0.6180339887498949;
    for (int it = 0; it < 100; ++it) {
        const double c = b - r * (b - a);
        const double d = a + r * (b - a);
        if (std::fabs(g_abs(c)) > std::fabs(g_abs(d))) b = d; else a = c;
    }
    g_max_ = std::max(best, std::fabs(g_abs(0.5 * (a + b))));
}

namespace {
double clamp01(double t) { return t < 0.0 ? 0.0 : (t > 1.0 ? 1.0 : t); }
} // namespace

double CutoffProfile::zeta(double h) const
{
    const double t = clamp01((outer_ - std::fabs(h)) * inv_width_);
    return t * t * t * (10.0 + t * (-15.0 + 6.0 * t));
}

double CutoffProfile::zeta_prime(double h) const
{
    const double t = clamp01((outer_ - std::fabs(h)) * inv_width_);
    const double ds = 30.0 * t * t * (1.0 - t) * (1.0 - t);
    return -std::copysign(1.0, h) * ds * inv_width_;
}

double CutoffProfile::zeta_second(double h) const
{
    const double t = clamp01((outer_ - std::fabs(h)) * inv_width_);
    const double d2s = 60.0 * t * (1.0 - t) * (1.0 - 2.0 * t);
    return d2s * inv_width_ * inv_width_;
}

double CutoffProfile::g(double h) const { return g_abs(std::fabs(h)); }

double CutoffProfile::g_prime(double h) const
{
    return 2.0 * zeta_prime(h) + h * zeta_second(h);
}

double cutoff(double h, const CutoffProfile& profile) { return profile.zeta(h); }

// ---------------------------------------------------------------------------
// Field
// ---------------------------------------------------------------------------

FlowField::FlowField(const FlowParams& params)
    : params_(params), cutoff_(params.cutoff_inner, params.cutoff_outer)
{
    params_.validate();
    half_ = 0.5 * params_.epsilon;
    quarter_ = 0.25 * params_.epsilon;
    k_ = fastmath::kTwoPi / params_.epsilon;
    lines_per_unit_ = 2 * params_.cells();
}

double FlowField::speed_bound() const { return params_.amplitude * k_ * cutoff_.g_max(); }

LatticePoint FlowField::to_lattice(Vec2 plane) const
{
    LatticePoint p;
    const double x[2] = {plane.x1, plane.x2};
    for (int i = 0; i < 2; ++i) {
        const double m = std::round(x[i] / half_);
        p.j[i] = static_cast<std::int64_t>(m);
        p.s[i] = x[i] - m * half_;
    }
    renormalize(p);
    return p;
}

Vec2 FlowField::to_plane(const LatticePoint& p) const
{
    return {static_cast<double>(p.j[0]) * half_ + p.s[0],
            static_cast<double>(p.j[1]) * half_ + p.s[1]};
}

Vec2 FlowField::to_torus(const LatticePoint& p) const
{
    double out[2];
    for (int i = 0; i < 2; ++i) {
        std::int64_t jm = p.j[i] % lines_per_unit_;
        if (jm < 0) jm += lines_per_unit_;
        double x = static_cast<double>(jm) * half_ + p.s[i];
        if (x < 0.0) x += 1.0;
        if (x >= 1.0) x -= 1.0;
        out[i] = x;
    }
    return {out[0], out[1]};
}

void FlowField::renormalize(LatticePoint& p) const
{
    for (int i = 0; i < 2; ++i) {
        if (std::fabs(p.s[i]) > quarter_) {
            const double m = std::nearbyint(p.s[i] / half_);
            p.s[i] -= m * half_;
            p.j[i] += static_cast<std::int64_t>(m);
        }
    }
}

StreamSample FlowField::sample(const LatticePoint& p) const
{
    StreamSample out;
    kernel::stream_sample(kernel::parity_sign(p.j[0], p.j[1]), p.s[0], p.s[1], k_, out.H, out.dH1,
                          out.dH2);
    return out;
}

Vec2 FlowField::velocity(const LatticePoint& p) const
{
    const StreamSample st = sample(p);
    const double ag = params_.amplitude * cutoff_.g_abs(std::fabs(st.H));
    return {-ag * st.dH2, ag * st.dH1};
}

Jacobian FlowField::jacobian(const LatticePoint& p) const
{
    const double sign = kernel::parity_sign(p.j[0], p.j[1]);
    const double t1 = p.s[0] * k_, t2 = p.s[1] * k_;
    const double S1 = fastmath::sin_poly(t1), C1 = fastmath::cos_poly(t1);
    const double S2 = fastmath::sin_poly(t2), C2 = fastmath::cos_poly(t2);
    const double H = sign * (S1 * S2);
    const double H1 = k_ * (sign * (C1 * S2));
    const double H2 = k_ * (sign * (S1 * C2));
    const double H11 = -k_ * k_ * H;
    const double H22 = H11;
    const double H12 = k_ * k_ * (sign * (C1 * C2));
    const double A = params_.amplitude;
    const double g = cutoff_.g(H);
    const double gp = cutoff_.g_prime(H);
    // u1 = -A g(H) H2, u2 = A g(H) H1
    Jacobian J;
    J.d11 = -A * (gp * H1 * H2 + g * H12);
    J.d12 = -A * (gp * H2 * H2 + g * H22);
    J.d21 = A * (gp * H1 * H1 + g * H11);
    J.d22 = A * (gp * H2 * H1 + g * H12);
    return J;
}

double stream_value(Vec2 x, const FlowParams& params)
{
    return FlowField(params).stream_value(x);
}

Vec2 velocity(Vec2 x, const FlowParams& params) { return FlowField(params).velocity_at(x); }

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------

FieldDiagnostics field_diagnostics(const FlowParams& params, int grid_n)
{
    if (grid_n < 16 || (grid_n & (grid_n - 1)) != 0)
        throw ValidationError("grid_n must be a power of two >= 16");
    const FlowField field(params);
    const int n = grid_n;
    const double h = 1.0 / n;
    const double eps = params.epsilon;
    FieldDiagnostics d;
    d.grid_n = n;
    d.speed_bound = field.speed_bound();

    std::vector<double> u1(static_cast<std::size_t>(n) * n), u2(u1.size());
    for (int i = 0; i < n; ++i) {
        for (int l = 0; l < n; ++l) {
            const double x1 = i * h, x2 = l * h;
            const Vec2 u = field.velocity_at({x1, x2});
            u1[static_cast<std::size_t>(i) * n + l] = u.x1;
            u2[static_cast<std::size_t>(i) * n + l] = u.x2;
            d.max_speed = std::max(d.max_speed, std::hypot(u.x1, u.x2));

            const Jacobian J = field.jacobian_at({x1, x2});
            d.max_div = std::max(d.max_div, std::fabs(J.d11 + J.d22));

            const Vec2 m1 = field.velocity_at({-x1, x2});
            const Vec2 m2 = field.velocity_at({x1, -x2});
            const Vec2 s1 = field.velocity_at({x1 + 0.5 * eps, x2});
            const Vec2 s2 = field.velocity_at({x1, x2 + 0.5 * eps});
            const Vec2 p1 = field.velocity_at({x1 + eps, x2});
            const Vec2 p2 = field.velocity_at({x1, x2 + eps});
            const double r[6] = {
                std::fabs(m1.x1 + u.x1), std::fabs(m1.x2 - u.x2),
                std::fabs(m2.x1 - u.x1), std::fabs(m2.x2 + u.x2),
                std::max(std::fabs(s1.x1 + u.x1), std::fabs(s1.x2 + u.x2)),
                std::max(std::fabs(s2.x1 + u.x1), std::fabs(s2.x2 + u.x2)),
            };
            for (int q = 0; q < 6; ++q) d.symmetry[q] = std::max(d.symmetry[q], r[q]);
            d.periodicity = std::max({d.periodicity, std::fabs(p1.x1 - u.x1), std::fabs(p1.x2 - u.x2),
                                      std::fabs(p2.x1 - u.x1), std::fabs(p2.x2 - u.x2)});
        }
    }

    RealFft2D fft(n);
    std::vector<cplx> U1(fft.spec_size()), U2(fft.spec_size()), D(fft.spec_size());
    fft.forward(u1.data(), U1.data());
    fft.forward(u2.data(), U2.data());
    const int hn = fft.half_n();
    for (int i = 0; i < n; ++i) {
        const int k1 = (i == n / 2) ? 0 : fft.wave1(i);
        for (int l = 0; l < hn; ++l) {
            const int k2 = (l == n / 2) ? 0 : l;
            const std::size_t idx = static_cast<std::size_t>(i) * hn + l;
            const cplx ik1(0.0, fastmath::kTwoPi * k1), ik2(0.0, fastmath::kTwoPi * k2);
            D[idx] = ik1 * U1[idx] + ik2 * U2[idx];
        }
    }
    std::vector<double> div(u1.size());
    fft.inverse(D.data(), div.data());
    for (double v : div) d.max_div_spectral = std::max(d.max_div_spectral, std::fabs(v));
    return d;
}

} // namespace cellmix
