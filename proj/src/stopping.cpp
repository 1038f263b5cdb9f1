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

#include "cellmix/stopping.hpp"

#include <algorithm>
#include <cmath>

#include "cellmix/errors.hpp"

namespace cellmix {

const char* to_string(EventKind kind)
{
    switch (kind) {
    case EventKind::vertical_line: return "vertical-line";
    case EventKind::horizontal_line: return "horizontal-line";
    case EventKind::level_up: return "level-up";
    case EventKind::level_down: return "level-down";
    case EventKind::separatrix: return "separatrix";
    case EventKind::diagonal: return "diagonal";
    }
    return "?";
}

namespace {

/// Offset of the step end relative to the start's line index on one axis.
double end_offset(const StepSegment& seg, int axis, double half)
{
    const std::int64_t dj = seg.next.j[axis] - seg.prev.j[axis];
    return static_cast<double>(dj) * half + seg.next.s[axis];
}

/// Point at fraction lam of the step, expressed against the start's indices.
LatticePoint interpolate(const StepSegment& seg, double lam, double half)
{
    LatticePoint p = seg.prev;
    for (int i = 0; i < 2; ++i) {
        const double e = end_offset(seg, i, half);
        p.s[i] = seg.prev.s[i] + lam * (e - seg.prev.s[i]);
    }
    return p;
}

/// Bisection for f(lam) = 0 on [lo, hi] with f(lo) and f(hi) of opposite
/// sign (f(hi) may be zero).
template <class F>
double bisect(F&& f, double lo, double hi, double flo)
{
    for (int it = 0; it < 40; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double fm = f(mid);
        if (std::fabs(fm) <= 1e-12) return mid;
        if ((fm < 0.0) == (flo < 0.0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

/// Line crossing in a generic lattice coordinate: start offset a relative to
/// its own line, end offset e relative to the same line. Returns the
/// fraction of the step or a negative value.
double line_fraction(double a, double e, double dt, const BridgeDraw* bridge)
{
    if (a == 0.0) return 0.0;
    if ((a > 0.0 && e <= 0.0) || (a < 0.0 && e >= 0.0)) return a / (a - e);
    if (bridge != nullptr && bridge->kappa > 0.0 && dt > 0.0) {
        const double p = std::exp(-2.0 * std::fabs(a) * std::fabs(e) / (bridge->kappa * dt));
        if (bridge->uniform < p) return std::fabs(a) / (std::fabs(a) + std::fabs(e));
    }
    return -1.0;
}

} // namespace

std::optional<CrossingEvent> detect_line_hit(const FlowField& field, const StepSegment& seg,
                                             int axis, const BridgeDraw* bridge)
{
    if (axis != 0 && axis != 1) throw ValidationError("axis must be 0 or 1");
    const double half = field.half_cell();
    const double a = seg.prev.s[axis];
    const double e = end_offset(seg, axis, half);
    if (std::fabs(e - a) >= 0.5 * half)
        throw StepTooLarge("step moved at least eps/4 along one axis; reduce dt");
    const double lam = line_fraction(a, e, seg.dt, bridge);
    if (lam < 0.0) return std::nullopt;

    CrossingEvent ev;
    ev.time = seg.t_prev + lam * seg.dt;
    LatticePoint p = interpolate(seg, lam, half);
    p.s[axis] = 0.0;
    const int other = 1 - axis;
    if (std::fabs(p.s[other]) > field.quarter_cell()) {
        LatticePoint q = p;
        field.renormalize(q);
        p.j[other] = q.j[other];
        p.s[other] = q.s[other];
    }
    ev.point = p;
    ev.location = field.to_plane(p);
    ev.kind = axis == 0 ? EventKind::vertical_line : EventKind::horizontal_line;
    ev.index = seg.prev.j[axis];
    return ev;
}

std::optional<CrossingEvent> detect_level_hit(const FlowField& field, const StepSegment& seg,
                                              double level, const BridgeDraw* bridge)
{
    const double half = field.half_cell();
    auto f = [&](double lam) { return field.sample(interpolate(seg, lam, half)).H - level; };
    const double f0 = f(0.0);
    const double f1 = f(1.0);
    double lam;
    if (f0 == 0.0) {
        lam = 0.0;
    } else if ((f0 < 0.0) != (f1 < 0.0) || f1 == 0.0) {
        lam = f1 == 0.0 ? 1.0 : bisect(f, 0.0, 1.0, f0);
    } else if (bridge != nullptr && bridge->kappa > 0.0 && seg.dt > 0.0) {
        // Linearized distances to the level set at both ends.
        const StreamSample s0 = field.sample(seg.prev), s1 = field.sample(seg.next);
        const double g0 = std::hypot(s0.dH1, s0.dH2), g1 = std::hypot(s1.dH1, s1.dH2);
        if (!(g0 > 0.0) || !(g1 > 0.0)) return std::nullopt;
        const double a = std::fabs(f0) / g0, b = std::fabs(f1) / g1;
        const double p = std::exp(-2.0 * a * b / (bridge->kappa * seg.dt));
        if (!(bridge->uniform < p)) return std::nullopt;
        lam = a / (a + b);
        // Project the interpolated point onto the level set.
        LatticePoint q = interpolate(seg, lam, half);
        for (int it = 0; it < 8; ++it) {
            const StreamSample st = field.sample(q);
            const double g2 = st.dH1 * st.dH1 + st.dH2 * st.dH2;
            if (!(g2 > 0.0)) break;
            const double r = (level - st.H) / g2;
            q.s[0] += r * st.dH1;
            q.s[1] += r * st.dH2;
            if (std::fabs(level - st.H) <= 1e-12) break;
        }
        CrossingEvent ev;
        ev.time = seg.t_prev + lam * seg.dt;
        ev.point = q;
        field.renormalize(ev.point);
        ev.location = field.to_plane(ev.point);
        ev.kind = f0 < 0.0 ? EventKind::level_up : EventKind::level_down;
        ev.index = level >= 0.0 ? 1 : -1;
        return ev;
    } else {
        return std::nullopt;
    }
    CrossingEvent ev;
    ev.time = seg.t_prev + lam * seg.dt;
    ev.point = interpolate(seg, lam, half);
    field.renormalize(ev.point);
    ev.location = field.to_plane(ev.point);
    ev.kind = f0 < 0.0 || (f0 == 0.0 && f1 > 0.0) ? EventKind::level_up : EventKind::level_down;
    ev.index = level >= 0.0 ? 1 : -1;
    return ev;
}

std::optional<CrossingEvent> detect_diagonal_hit(const FlowField& field, const StepSegment& seg,
                                                 int family)
{
    if (family != 0 && family != 1) throw ValidationError("diagonal family must be 0 or 1");
    const double half = field.half_cell();
    const double sg = family == 0 ? -1.0 : 1.0;
    // y = x1 -+ x2 in lattice form (index j1 -+ j2, offset s1 -+ s2); the
    // offset is within half/2 of its index line only after folding.
    auto fold = [half](std::int64_t& j, double& s) {
        const double m = std::nearbyint(s / half);
        s -= m * half;
        j += static_cast<std::int64_t>(m);
    };
    std::int64_t jp = seg.prev.j[0] + (family == 0 ? -seg.prev.j[1] : seg.prev.j[1]);
    double sp = seg.prev.s[0] + sg * seg.prev.s[1];
    std::int64_t jn = seg.next.j[0] + (family == 0 ? -seg.next.j[1] : seg.next.j[1]);
    double sn = seg.next.s[0] + sg * seg.next.s[1];
    fold(jp, sp);
    fold(jn, sn);
    const double e = static_cast<double>(jn - jp) * half + sn;
    const double lam = line_fraction(sp, e, seg.dt, nullptr);
    if (lam < 0.0) return std::nullopt;
    CrossingEvent ev;
    ev.time = seg.t_prev + lam * seg.dt;
    ev.point = interpolate(seg, lam, half);
    field.renormalize(ev.point);
    ev.location = field.to_plane(ev.point);
    ev.kind = EventKind::diagonal;
    ev.index = jp;
    return ev;
}

// ---------------------------------------------------------------------------
// Clock tracker
// ---------------------------------------------------------------------------

ClockTracker::ClockTracker(const FlowField& field, double delta, ClockOptions options)
    : field_(&field), delta_(delta), opt_(options)
{
    if (!(delta > 0.0)) throw ValidationError("boundary-layer width must be positive");
}

void ClockTracker::start(const LatticePoint& x0, double t0)
{
    clock_ = StoppingClock{};
    crossed_diagonal_ = false;
    last_return_time_ = -1.0;
    phase_ = Phase::wait_tau0;
    if (x0.s[0] == 0.0 || x0.s[1] == 0.0) {
        CrossingEvent ev;
        ev.time = t0;
        ev.point = x0;
        ev.location = field_->to_plane(x0);
        ev.kind = EventKind::separatrix;
        ev.index = x0.s[0] == 0.0 ? x0.j[0] : x0.j[1];
        clock_.tau0 = ev;
        last_return_time_ = t0;
        phase_ = Phase::wait_sigma;
    }
}

bool ClockTracker::done() const
{
    const bool layer_done = !opt_.layer || clock_.tau_seq.size() >= opt_.max_tau;
    const bool check_done = !opt_.diagonal || clock_.tau_check_seq.size() >= opt_.max_check;
    return layer_done && check_done;
}

void ClockTracker::record_return(const CrossingEvent& ev)
{
    if (phase_ == Phase::wait_tau0) {
        clock_.tau0 = ev;
        phase_ = Phase::wait_sigma;
    } else if (phase_ == Phase::wait_tau && clock_.tau_seq.size() < opt_.max_tau) {
        clock_.tau_seq.push_back(ev);
        const double tol = 1e-8 * field_->params().epsilon;
        for (int i = 0; i < 2; ++i)
            if (std::fabs(ev.point.s[i]) <= tol) clock_.tau_axis[static_cast<std::size_t>(i)].push_back(ev);
        phase_ = Phase::wait_sigma;
    }
    if (opt_.diagonal && crossed_diagonal_ && clock_.tau_check_seq.size() < opt_.max_check) {
        clock_.tau_check_seq.push_back(ev);
        crossed_diagonal_ = false;
    }
}

void ClockTracker::observe(const StepSegment& seg, const BridgeDraw* bridge)
{
    // Ordered events within the step: line hits (one per axis, merged when
    // simultaneous) and diagonal crossings.
    struct Item {
        double lam;
        int type;  // 0: separatrix return, 1: diagonal
        CrossingEvent ev;
    };
    Item items[4];
    int n = 0;
    std::optional<CrossingEvent> h0 = detect_line_hit(*field_, seg, 0, bridge);
    std::optional<CrossingEvent> h1 = detect_line_hit(*field_, seg, 1, bridge);
    auto lam_of = [&](const CrossingEvent& e) {
        return seg.dt > 0.0 ? (e.time - seg.t_prev) / seg.dt : 0.0;
    };
    if (h0 && h1 && h0->time == h1->time) {
        CrossingEvent c = *h0;
        c.point.s[1] = 0.0;
        c.point.j[1] = h1->point.j[1];
        c.location = field_->to_plane(c.point);
        c.kind = EventKind::separatrix;
        items[n++] = {lam_of(c), 0, c};
    } else {
        if (h0) { h0->kind = EventKind::separatrix; items[n++] = {lam_of(*h0), 0, *h0}; }
        if (h1) { h1->kind = EventKind::separatrix; items[n++] = {lam_of(*h1), 0, *h1}; }
    }
    if (opt_.diagonal) {
        for (int fam = 0; fam < 2; ++fam) {
            std::optional<CrossingEvent> d = detect_diagonal_hit(*field_, seg, fam);
            if (d) items[n++] = {lam_of(*d), 1, *d};
        }
    }
    std::sort(items, items + n, [](const Item& a, const Item& b) {
        return a.lam < b.lam || (a.lam == b.lam && a.type > b.type);
    });

    double lam_last = 0.0;
    for (int i = 0; i < n; ++i) {
        // A return that coincides with the step start was already seen as
        // the previous step's end point.
        if (items[i].type == 0 && items[i].ev.time == last_return_time_) continue;
        if (items[i].type == 1) {
            crossed_diagonal_ = true;
        } else {
            record_return(items[i].ev);
            last_return_time_ = items[i].ev.time;
            lam_last = items[i].lam;
        }
    }

    if (opt_.layer && phase_ == Phase::wait_sigma) {
        const double half = field_->half_cell();
        auto f = [&](double lam) {
            return std::fabs(field_->sample(interpolate(seg, lam, half)).H) - delta_;
        };
        const double f1 = f(1.0);
        if (f1 >= 0.0) {
            const double flo = f(lam_last);
            const double lam = flo >= 0.0 ? lam_last : (f1 == 0.0 ? 1.0 : bisect(f, lam_last, 1.0, flo));
            CrossingEvent ev;
            ev.time = seg.t_prev + lam * seg.dt;
            ev.point = interpolate(seg, lam, half);
            field_->renormalize(ev.point);
            ev.location = field_->to_plane(ev.point);
            const double H = field_->sample(ev.point).H;
            ev.kind = H >= 0.0 ? EventKind::level_up : EventKind::level_down;
            ev.index = H >= 0.0 ? 1 : -1;
            clock_.sigma_seq.push_back(ev);
            phase_ = Phase::wait_tau;
        }
    }
}

namespace {

StepSegment segment_between(const TrajectorySample& a, const TrajectorySample& b)
{
    StepSegment s;
    s.prev = a.x;
    s.next = b.x;
    s.t_prev = a.t;
    s.dt = b.t - a.t;
    return s;
}

template <class F>
void for_each_step(const Trajectory& traj, F&& f)
{
    TrajectorySample prev{0.0, traj.start};
    for (const TrajectorySample& s : traj.samples) {
        f(segment_between(prev, s));
        prev = s;
    }
}

} // namespace

StoppingClock boundary_layer_clock(const FlowField& field, const Trajectory& traj, double delta)
{
    ClockTracker tr(field, delta);
    tr.start(traj.start, 0.0);
    for_each_step(traj, [&](const StepSegment& s) { tr.observe(s); });
    return tr.clock();
}

std::vector<CrossingEvent> diagonal_return_clock(const FlowField& field, const Trajectory& traj)
{
    ClockOptions opt;
    opt.layer = false;
    opt.diagonal = true;
    ClockTracker tr(field, 1.0, opt);
    tr.start(traj.start, 0.0);
    for_each_step(traj, [&](const StepSegment& s) { tr.observe(s); });
    return tr.clock().tau_check_seq;
}

std::vector<CrossingEvent> axis_filtered_returns(const StoppingClock& clock, int axis, double eps)
{
    if (axis != 0 && axis != 1) throw ValidationError("axis must be 0 or 1");
    const double half = 0.5 * eps;
    const double tol = 1e-8 * eps;
    std::vector<CrossingEvent> out;
    for (const CrossingEvent& ev : clock.tau_seq) {
        const double x = axis == 0 ? ev.location.x1 : ev.location.x2;
        const double r = x - half * std::nearbyint(x / half);
        if (std::fabs(r) <= tol) out.push_back(ev);
    }
    return out;
}

} // namespace cellmix
