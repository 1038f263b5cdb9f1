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

/// @file flowfield.hpp
/// @brief Cellular stream function, smooth cutoff and the cutoff velocity field.
///
/// H(x) = sin(2 pi x1/eps) sin(2 pi x2/eps), u = A g(H) grad-perp H with
/// g(h) = zeta(h) + h zeta'(h), grad-perp = (-d2, d1).
///
/// Points are carried in lattice form: each coordinate is j*eps/2 + s with an
/// integer line index j and |s| <= eps/4. The sign of H only depends on the
/// parity of j1 + j2, so mirrored or eps-shifted copies of a point evaluate
/// to exactly mirrored or identical fields.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>

#include "cellmix/fastmath.hpp"

namespace cellmix {

struct Vec2 {
    double x1 = 0.0;
    double x2 = 0.0;
};

struct FlowParams {
    double epsilon = 0.125;
    double amplitude = 0.0;
    double kappa = 0.01;
    double cutoff_inner = 0.25;
    double cutoff_outer = 0.5;

    /// sqrt(kappa/A); zero when A == 0.
    double delta() const { return amplitude > 0.0 ? std::sqrt(kappa / amplitude) : 0.0; }
    /// Number of cells per unit length, 1/eps.
    std::int64_t cells() const;
    /// Throws ValidationError when an invariant fails.
    void validate() const;
    std::string describe() const;
};

/// Quintic smoothstep cutoff zeta(h): 1 for |h| <= inner, 0 for |h| >= outer.
class CutoffProfile {
public:
    CutoffProfile() = default;
    CutoffProfile(double inner, double outer);

    double inner() const { return inner_; }
    double outer() const { return outer_; }

    double zeta(double h) const;
    double zeta_prime(double h) const;
    double zeta_second(double h) const;
    /// g(h) = zeta(h) + h zeta'(h) = d(h zeta)/dh. Even in h.
    double g(double h) const;
    double g_prime(double h) const;
    /// max |g| over all h.
    double g_max() const { return g_max_; }

    inline double g_abs(double abs_h) const
    {
        double t = (outer_ - abs_h) * inv_width_;
        t = t < 0.0 ? 0.0 : (t > 1.0 ? 1.0 : t);
        const double t2 = t * t;
        const double smooth = t2 * t * std::fma(t, std::fma(6.0, t, -15.0), 10.0);
        const double omt = 1.0 - t;
        const double slope = 30.0 * t2 * omt * omt * inv_width_;
        return smooth - abs_h * slope;
    }

private:
    double inner_ = 0.25;
    double outer_ = 0.5;
    double inv_width_ = 4.0;
    double g_max_ = 0.0;
};

/// A point on the plane in lattice form; coordinate i is j[i]*eps/2 + s[i].
struct LatticePoint {
    std::array<std::int64_t, 2> j{0, 0};
    std::array<double, 2> s{0.0, 0.0};
};

/// H and its gradient at a point.
struct StreamSample {
    double H = 0.0;
    double dH1 = 0.0;
    double dH2 = 0.0;
};

struct Jacobian {
    double d11 = 0.0, d12 = 0.0, d21 = 0.0, d22 = 0.0; // d u_i / d x_j
};

class FlowField {
public:
    explicit FlowField(const FlowParams& params);

    const FlowParams& params() const { return params_; }
    const CutoffProfile& cutoff() const { return cutoff_; }
    double epsilon() const { return params_.epsilon; }
    double amplitude() const { return params_.amplitude; }
    double half_cell() const { return half_; }
    double quarter_cell() const { return quarter_; }
    /// 2 pi / eps.
    double wavenumber() const { return k_; }
    /// Lines per unit length along one axis, 2/eps.
    std::int64_t lines_per_unit() const { return lines_per_unit_; }
    /// A (2 pi/eps) max|g|: bound on |u|.
    double speed_bound() const;

    // -- lattice form ------------------------------------------------------
    LatticePoint to_lattice(Vec2 plane) const;
    Vec2 to_plane(const LatticePoint& p) const;
    /// Torus coordinates in [0,1).
    Vec2 to_torus(const LatticePoint& p) const;
    /// Brings |s| back to <= eps/4 by moving whole line spacings into j.
    void renormalize(LatticePoint& p) const;

    StreamSample sample(const LatticePoint& p) const;
    double stream(const LatticePoint& p) const { return sample(p).H; }
    Vec2 velocity(const LatticePoint& p) const;
    Jacobian jacobian(const LatticePoint& p) const;

    // -- plain coordinates (unit torus or plane) ----------------------------
    double stream_value(Vec2 x) const { return stream(to_lattice(x)); }
    Vec2 velocity_at(Vec2 x) const { return velocity(to_lattice(x)); }
    Jacobian jacobian_at(Vec2 x) const { return jacobian(to_lattice(x)); }

private:
    FlowParams params_;
    CutoffProfile cutoff_;
    double half_ = 0.0;
    double quarter_ = 0.0;
    double k_ = 0.0;
    std::int64_t lines_per_unit_ = 0;
};

// Kernel helpers shared by the scalar reference and the batch kernels.
namespace kernel {

/// (-1)^(j1+j2) as a double.
CELLMIX_KERNEL double parity_sign(std::int64_t j1, std::int64_t j2)
{
    return ((j1 + j2) & 1) ? -1.0 : 1.0;
}

CELLMIX_KERNEL void stream_sample(double sign, double s1, double s2, double k,
                          double& H, double& d1, double& d2)
{
    const double t1 = s1 * k;
    const double t2 = s2 * k;
    const double S1 = fastmath::sin_poly(t1);
    const double C1 = fastmath::cos_poly(t1);
    const double S2 = fastmath::sin_poly(t2);
    const double C2 = fastmath::cos_poly(t2);
    H = sign * (S1 * S2);
    d1 = k * (sign * (C1 * S2));
    d2 = k * (sign * (S1 * C2));
}

CELLMIX_KERNEL void stream_gradient(double sign, double s1, double s2, double k,
                            double& d1, double& d2)
{
    const double t1 = s1 * k;
    const double t2 = s2 * k;
    const double S1 = fastmath::sin_poly(t1);
    const double C1 = fastmath::cos_poly(t1);
    const double S2 = fastmath::sin_poly(t2);
    const double C2 = fastmath::cos_poly(t2);
    d1 = k * (sign * (C1 * S2));
    d2 = k * (sign * (S1 * C2));
}

} // namespace kernel

// -- free-function surface --------------------------------------------------

/// H at a point of the unit torus.
double stream_value(Vec2 x, const FlowParams& params);
/// zeta(h) for the given profile.
double cutoff(double h, const CutoffProfile& profile);
/// u = A g(H) grad-perp H at a point of the unit torus.
Vec2 velocity(Vec2 x, const FlowParams& params);

struct FieldDiagnostics {
    int grid_n = 0;
    /// max |div u| from the exact Jacobian at the grid nodes.
    double max_div = 0.0;
    /// max |div u| by spectral differentiation of the sampled field.
    double max_div_spectral = 0.0;
    /// Residuals of the six reflection/shift identities, in the order
    /// v1 odd in x1, v2 even in x1, v1 even in x2, v2 odd in x2,
    /// half-cell shift in x1, half-cell shift in x2.
    std::array<double, 6> symmetry{};
    /// max |u(x + eps e_i) - u(x)| over the grid.
    double periodicity = 0.0;
    double max_speed = 0.0;
    double speed_bound = 0.0;
};

/// Grid diagnostics on grid_n^2 nodes of the unit torus. grid_n must be a
/// power of two >= 16.
FieldDiagnostics field_diagnostics(const FlowParams& params, int grid_n);

} // namespace cellmix
