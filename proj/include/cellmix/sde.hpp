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

/// @file sde.hpp
/// @brief Time stepping of dX = A v(X) dt + sqrt(kappa) dB on the plane and tori.
///
/// Two integrators share the lattice state:
///   - advance():       Euler-Maruyama, x += u(x) dt + sqrt(kappa dt) T xi.
///   - split_step():    exact Gaussian increment, then the drift flow at the
///                      frozen speed factor A g(H) (g is constant on level
///                      sets) by midpoint RK2 and one Newton projection back
///                      onto the starting level. Used by every Monte-Carlo
///                      driver.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "cellmix/flowfield.hpp"
#include "cellmix/rng.hpp"

namespace cellmix {

struct TorusPoint {
    double x1 = 0.0;
    double x2 = 0.0;
    /// 1 for the unit torus, eps for the cell torus.
    double period = 1.0;
};

struct PlanePoint {
    double x1 = 0.0;
    double x2 = 0.0;
};

/// Reduce a unit-torus point modulo eps onto the cell torus.
TorusPoint project_cell(TorusPoint x, double eps);

enum class NoiseTag { identity, independent, mirror_x, mirror_y, reflection };

/// 2x2 orthogonal map applied to the partner's Gaussian increment.
struct NoiseTransform {
    double m11 = 1.0, m12 = 0.0, m21 = 0.0, m22 = 1.0;
    NoiseTag tag = NoiseTag::identity;

    static NoiseTransform identity() { return {}; }
    static NoiseTransform independent() { return {1.0, 0.0, 0.0, 1.0, NoiseTag::independent}; }
    static NoiseTransform mirror_x() { return {-1.0, 0.0, 0.0, 1.0, NoiseTag::mirror_x}; }
    static NoiseTransform mirror_y() { return {1.0, 0.0, 0.0, -1.0, NoiseTag::mirror_y}; }
    /// I - 2 n n^T for a unit vector n.
    static NoiseTransform reflection(double n1, double n2)
    {
        return {1.0 - 2.0 * n1 * n1, -2.0 * n1 * n2, -2.0 * n1 * n2, 1.0 - 2.0 * n2 * n2,
                NoiseTag::reflection};
    }
    Vec2 apply(Vec2 g) const { return {m11 * g.x1 + m12 * g.x2, m21 * g.x1 + m22 * g.x2}; }
};

struct StepPolicy {
    double dt = 0.0;
    double safety = 0.05;
    /// Brownian-bridge first-passage correction in the crossing detectors.
    bool bridge_correction = false;
    /// Larger steps inside the drift-free cell cores (|H| >= cutoff_outer).
    bool adaptive_core = false;
    /// Hard cap on simulated time.
    double t_max = 0.0;
};

/// safety * min(eps^2 delta / (2 pi A g_max), eps^2 delta^2 / kappa): the
/// Euler-Maruyama rule resolving the boundary-layer width eps*delta.
double default_dt(const FlowParams& params, double safety = 0.05);

/// safety * min(eps^2 / (2 pi A g_max), eps^2 delta^2 / kappa): the rule for
/// split_step, whose drift moves along level sets so the advective
/// displacement only has to be small against eps.
double split_dt(const FlowParams& params, double safety = 0.05);

/// 50 (eps^2/kappa + 1/sqrt(kappa A)).
double default_t_max(const FlowParams& params);

/// Step policy for the split integrator with the default cap.
StepPolicy make_policy(const FlowParams& params, double safety = 0.05);

/// Euler-Maruyama step on a lattice state (plane lift; the torus view is
/// obtained with FlowField::to_torus).
void advance(const FlowField& field, LatticePoint& state, double dt, Vec2 gauss,
             const NoiseTransform& transform, double kappa);
TorusPoint advance(const FlowField& field, TorusPoint state, double dt, Vec2 gauss,
                   const NoiseTransform& transform, double kappa);
PlanePoint advance(const FlowField& field, PlanePoint state, double dt, Vec2 gauss,
                   const NoiseTransform& transform, double kappa);

/// Constants of the split kernel, precomputed once per field.
struct SplitConstants {
    double k = 0.0;        // 2 pi / eps
    double quarter = 0.0;  // eps / 4
    double half = 0.0;     // eps / 2
    double amplitude = 0.0;
    double sqrt_kappa = 0.0;
    double outer = 0.5;
    double inv_width = 4.0;

    SplitConstants() = default;
    SplitConstants(const FlowField& field, double kappa);
};

namespace kernel {

CELLMIX_KERNEL double g_abs(const SplitConstants& c, double abs_h)
{
    double t = (c.outer - abs_h) * c.inv_width;
    t = t < 0.0 ? 0.0 : (t > 1.0 ? 1.0 : t);
    const double t2 = t * t;
    const double smooth = t2 * t * std::fma(t, std::fma(6.0, t, -15.0), 10.0);
    const double omt = 1.0 - t;
    const double slope = 30.0 * t2 * omt * omt * c.inv_width;
    return smooth - abs_h * slope;
}

CELLMIX_KERNEL void renormalize(const SplitConstants& c, std::int64_t& j, double& s)
{
    const double m = std::nearbyint(s / c.half);
    const bool out = std::fabs(s) > c.quarter;
    s = out ? s - m * c.half : s;
    j = out ? j + static_cast<std::int64_t>(m) : j;
}

/// One split step. dt scales the Gaussian increment, dt_drift the drift flow
/// (equal except for enlarged core steps). xi is the transformed normal pair.
CELLMIX_KERNEL void split_step(const SplitConstants& c, double dt, double dt_drift, double xi1, double xi2,
                       std::int64_t& j1, double& s1, std::int64_t& j2, double& s2)
{
    const double sigma = c.sqrt_kappa * std::sqrt(dt);
    s1 = std::fma(sigma, xi1, s1);
    s2 = std::fma(sigma, xi2, s2);
    renormalize(c, j1, s1);
    renormalize(c, j2, s2);

    const double sign = ((j1 + j2) & 1) ? -1.0 : 1.0;
    double H0, d1, d2;
    stream_sample(sign, s1, s2, c.k, H0, d1, d2);
    const double speed = c.amplitude * g_abs(c, std::fabs(H0));
    const double h = speed * dt_drift;
    const double hh = 0.5 * h;

    double e1, e2;
    const double m1 = std::fma(-hh, d2, s1);
    const double m2 = std::fma(hh, d1, s2);
    stream_gradient(sign, m1, m2, c.k, e1, e2);
    double n1 = std::fma(-h, e2, s1);
    double n2 = std::fma(h, e1, s2);

    double H1, f1, f2;
    stream_sample(sign, n1, n2, c.k, H1, f1, f2);
    const double den = std::fma(f1, f1, f2 * f2);
    const double tiny = 1e-24 * c.k * c.k;
    const double corr = den > tiny ? (H0 - H1) / den : 0.0;
    n1 = std::fma(corr, f1, n1);
    n2 = std::fma(corr, f2, n2);

    const bool moving = speed != 0.0;
    s1 = moving ? n1 : s1;
    s2 = moving ? n2 : s2;
    renormalize(c, j1, s1);
    renormalize(c, j2, s2);
}

} // namespace kernel

/// Scalar split step on a lattice state.
void split_step(const SplitConstants& c, LatticePoint& p, double dt, Vec2 xi);

/// Step size for a state under an adaptive-core policy: the base step in the
/// drift region, and inside the cores a step whose Gaussian increment stays
/// well inside the distance to the nearest watched level. `levels` are |H|
/// levels whose crossings matter to the caller (cutoff_outer is always
/// watched).
double core_adaptive_dt(const FlowField& field, const LatticePoint& p, double base_dt,
                        double kappa, double cap, const double* levels, int n_levels);
/// Same rule from a known |H| at the point.
double core_adaptive_dt(double abs_h, double outer, double wavenumber, double base_dt,
                        double kappa, double cap, const double* levels, int n_levels);

// ---------------------------------------------------------------------------
// Driver
// ---------------------------------------------------------------------------

struct StepSegment {
    LatticePoint prev;
    LatticePoint next;
    double t_prev = 0.0;
    double dt = 0.0;
};

struct StopDecision {
    bool fire = false;
    /// Refined event time within the step.
    double time = 0.0;
};

/// One step as seen by a stop predicate: plane coordinates of both ends.
struct PathStep {
    double t_prev = 0.0;
    double dt = 0.0;
    Vec2 prev;
    Vec2 next;
};

using StopPredicate = std::function<StopDecision(const PathStep&)>;

struct TrajectorySample {
    double t = 0.0;
    LatticePoint x;
};

struct Trajectory {
    LatticePoint start;
    /// One sample per `stride` steps, plus the state at the stop.
    std::vector<TrajectorySample> samples;
};

struct StopRecord {
    double time = 0.0;
    std::uint64_t steps = 0;
    LatticePoint state;
};

/// Fires at the first step ending at or after T.
StopPredicate stop_at_time(double T);
/// Fires when coordinate `axis` (0 or 1) of the plane path crosses or touches
/// `value + m` for some integer m; time by linear interpolation.
StopPredicate stop_on_crossing(int axis, double value);

/// Runs one trajectory with the split integrator from x0 until `stop` fires.
/// Samples every `stride`-th step (and the final state). Throws CapExceeded
/// when policy.t_max elapses first.
std::pair<Trajectory, StopRecord> simulate_until(const FlowField& field, const LatticePoint& x0,
                                                 const StopPredicate& stop,
                                                 const StepPolicy& policy, RngStream& rng,
                                                 std::size_t stride = 1);

} // namespace cellmix
