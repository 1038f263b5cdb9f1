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

#include "cellmix/sde.hpp"

#include <algorithm>
#include <string>

#include "cellmix/errors.hpp"

namespace cellmix {

namespace {

double wrap(double x, double period)
{
    double r = std::fmod(x, period);
    if (r < 0.0) r += period;
    if (r >= period) r -= period;
    return r;
}

} // namespace

TorusPoint project_cell(TorusPoint x, double eps)
{
    if (!(eps > 0.0) || eps > 1.0) throw ValidationError("eps must lie in (0, 1]");
    const double inv = 1.0 / eps;
    if (std::fabs(inv - std::round(inv)) > 1e-9 * inv)
        throw ValidationError("1/eps must be a positive integer");
    return {wrap(x.x1, eps), wrap(x.x2, eps), eps};
}

double default_dt(const FlowParams& params, double safety)
{
    params.validate();
    if (!(safety > 0.0)) throw ValidationError("step safety factor must be positive");
    if (!(params.amplitude > 0.0))
        throw ValidationError("default_dt needs amplitude > 0; pass dt explicitly for A = 0");
    const CutoffProfile cut(params.cutoff_inner, params.cutoff_outer);
    const double eps2 = params.epsilon * params.epsilon;
    const double delta = params.delta();
    const double adv = eps2 * delta / (params.amplitude * fastmath::kTwoPi * cut.g_max());
    const double dif = eps2 * delta * delta / params.kappa;
    return safety * std::min(adv, dif);
}

double split_dt(const FlowParams& params, double safety)
{
    params.validate();
    if (!(safety > 0.0)) throw ValidationError("step safety factor must be positive");
    const double eps2 = params.epsilon * params.epsilon;
    if (!(params.amplitude > 0.0)) return safety * eps2 / params.kappa * 0.01;
    const CutoffProfile cut(params.cutoff_inner, params.cutoff_outer);
    const double adv = eps2 / (params.amplitude * fastmath::kTwoPi * cut.g_max());
    const double dif = eps2 / params.amplitude;
    return safety * std::min(adv, dif);
}

double default_t_max(const FlowParams& params)
{
    const double eps2 = params.epsilon * params.epsilon;
    double t = eps2 / params.kappa;
    if (params.amplitude > 0.0) t += 1.0 / std::sqrt(params.kappa * params.amplitude);
    return 50.0 * t;
}

StepPolicy make_policy(const FlowParams& params, double safety)
{
    StepPolicy p;
    p.safety = safety;
    p.dt = split_dt(params, safety);
    p.t_max = default_t_max(params);
    return p;
}

void advance(const FlowField& field, LatticePoint& state, double dt, Vec2 gauss,
             const NoiseTransform& transform, double kappa)
{
    const Vec2 u = field.velocity(state);
    const Vec2 g = transform.apply(gauss);
    const double sigma = std::sqrt(kappa * dt);
    state.s[0] += u.x1 * dt + sigma * g.x1;
    state.s[1] += u.x2 * dt + sigma * g.x2;
    field.renormalize(state);
}

TorusPoint advance(const FlowField& field, TorusPoint state, double dt, Vec2 gauss,
                   const NoiseTransform& transform, double kappa)
{
    LatticePoint p = field.to_lattice({state.x1, state.x2});
    advance(field, p, dt, gauss, transform, kappa);
    const Vec2 x = field.to_torus(p);
    TorusPoint out{x.x1, x.x2, state.period};
    if (state.period != 1.0) {
        out.x1 = wrap(out.x1, state.period);
        out.x2 = wrap(out.x2, state.period);
    }
    return out;
}

PlanePoint advance(const FlowField& field, PlanePoint state, double dt, Vec2 gauss,
                   const NoiseTransform& transform, double kappa)
{
    LatticePoint p = field.to_lattice({state.x1, state.x2});
    advance(field, p, dt, gauss, transform, kappa);
    const Vec2 x = field.to_plane(p);
    return {x.x1, x.x2};
}

SplitConstants::SplitConstants(const FlowField& field, double kappa)
    : k(field.wavenumber()),
      quarter(field.quarter_cell()),
      half(field.half_cell()),
      amplitude(field.amplitude()),
      sqrt_kappa(std::sqrt(kappa)),
      outer(field.params().cutoff_outer),
      inv_width(1.0 / (field.params().cutoff_outer - field.params().cutoff_inner))
{
}

void split_step(const SplitConstants& c, LatticePoint& p, double dt, Vec2 xi)
{
    kernel::split_step(c, dt, dt, xi.x1, xi.x2, p.j[0], p.s[0], p.j[1], p.s[1]);
}

double core_adaptive_dt(double abs_h, double outer, double wavenumber, double base_dt,
                        double kappa, double cap, const double* levels, int n_levels)
{
    if (abs_h < outer) return base_dt;
    double gap = abs_h - outer;
    for (int i = 0; i < n_levels; ++i) gap = std::min(gap, std::fabs(abs_h - levels[i]));
    const double d = gap / wavenumber;
    const double dt = d * d / (25.0 * kappa);
    return std::clamp(dt, base_dt, std::max(base_dt, cap));
}

double core_adaptive_dt(const FlowField& field, const LatticePoint& p, double base_dt,
                        double kappa, double cap, const double* levels, int n_levels)
{
    return core_adaptive_dt(std::fabs(field.sample(p).H), field.params().cutoff_outer,
                            field.wavenumber(), base_dt, kappa, cap, levels, n_levels);
}

StopPredicate stop_at_time(double T)
{
    return [T](const PathStep& st) -> StopDecision {
        const double t = st.t_prev + st.dt;
        if (t >= T) return {true, t};
        return {};
    };
}

StopPredicate stop_on_crossing(int axis, double value)
{
    if (axis != 0 && axis != 1) throw ValidationError("axis must be 0 or 1");
    return [axis, value](const PathStep& st) -> StopDecision {
        const double a = (axis == 0 ? st.prev.x1 : st.prev.x2) - value;
        const double b = (axis == 0 ? st.next.x1 : st.next.x2) - value;
        const double m = std::floor(a);
        const double fa = a - m, fb = b - m;
        if (fa == 0.0) return {true, st.t_prev};
        double target;
        if (fb >= 1.0) target = 1.0;
        else if (fb <= 0.0) target = 0.0;
        else return {};
        const double lam = (target - fa) / (fb - fa);
        return {true, st.t_prev + lam * st.dt};
    };
}

std::pair<Trajectory, StopRecord> simulate_until(const FlowField& field, const LatticePoint& x0,
                                                 const StopPredicate& stop,
                                                 const StepPolicy& policy, RngStream& rng,
                                                 std::size_t stride)
{
    if (!(policy.dt > 0.0)) throw ValidationError("step size must be positive");
    if (!(policy.t_max > 0.0)) throw ValidationError("t_max must be positive");
    if (stride == 0) stride = 1;
    const SplitConstants c(field, field.params().kappa);

    Trajectory traj;
    LatticePoint x = x0;
    field.renormalize(x);
    traj.start = x;
    std::uint64_t steps = 0;
    double t = 0.0;
    std::array<double, 4> buf{};
    int used = 4;
    while (true) {
        if (t >= policy.t_max)
            throw CapExceeded("stop condition did not fire before t_max = " +
                              std::to_string(policy.t_max));
        const double t_next = std::min(static_cast<double>(steps + 1) * policy.dt, policy.t_max);
        if (used == 4) { buf = rng.next_normals4(); used = 0; }
        PathStep st;
        st.prev = field.to_plane(x);
        split_step(c, x, t_next - t, {buf[used], buf[used + 1]});
        used += 2;
        ++steps;
        st.next = field.to_plane(x);
        st.t_prev = t;
        st.dt = t_next - t;
        t = t_next;
        const StopDecision d = stop(st);
        if (d.fire) {
            traj.samples.push_back({t, x});
            StopRecord rec;
            rec.time = d.time;
            rec.steps = steps;
            rec.state = x;
            return {std::move(traj), rec};
        }
        if (steps % stride == 0) traj.samples.push_back({t, x});
    }
}

} // namespace cellmix
