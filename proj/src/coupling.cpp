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

#include "cellmix/coupling.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numbers>

#include "cellmix/errors.hpp"
#include "cellmix/stopping.hpp"

namespace cellmix {

namespace {

constexpr double kSyncTol = 1e-8;   // times eps
constexpr double kMirrorTol = 1e-6; // times eps

std::int64_t mod_floor(std::int64_t a, std::int64_t m)
{
    const std::int64_t r = a % m;
    return r < 0 ? r + m : r;
}

/// Shortest displacement x - y on the eps-torus along one axis.
double axis_displacement(std::int64_t jx, double sx, std::int64_t jy, double sy, double h)
{
    const double two_h = 2.0 * h;
    double d = static_cast<double>(mod_floor(jx - jy, 2)) * h + (sx - sy);
    d -= two_h * std::nearbyint(d / two_h);
    if (d <= -h) d += two_h;
    if (d > h) d -= two_h;
    return d;
}

Vec2 cell_displacement(const LatticePoint& x, const LatticePoint& y, double h)
{
    return {axis_displacement(x.j[0], x.s[0], y.j[0], y.s[0], h),
            axis_displacement(x.j[1], x.s[1], y.j[1], y.s[1], h)};
}

/// True when the points coincide on the unit torus.
bool same_on_torus(const LatticePoint& x, const LatticePoint& y, std::int64_t lines_per_unit)
{
    for (int i = 0; i < 2; ++i) {
        if (x.s[i] != y.s[i]) return false;
        if (mod_floor(x.j[i] - y.j[i], lines_per_unit) != 0) return false;
    }
    return true;
}

/// Moves y onto x modulo eps, keeping the lift of y closest to its old one.
void glue_mod_eps(const LatticePoint& x, LatticePoint& y, double h)
{
    for (int i = 0; i < 2; ++i) {
        const double lift = static_cast<double>(y.j[i] - x.j[i]) + (y.s[i] - x.s[i]) / h;
        y.j[i] = x.j[i] + 2 * static_cast<std::int64_t>(std::nearbyint(0.5 * lift));
        y.s[i] = x.s[i];
    }
}

/// Circular distance of two values modulo `period`.
double circular_gap(double a, double b, double period)
{
    double d = std::fmod(a - b, period);
    if (d < 0.0) d += period;
    return std::min(d, period - d);
}

struct Context {
    const FlowField* field = nullptr;
    SplitConstants sc;
    StepPolicy policy;
    CouplingOptions options;
    std::uint64_t seed = 0;
    double kappa = 0.0;
    double eps = 0.0;
    double h = 0.0;
    double outer = 0.5;
    double k = 0.0;
    double cap_dt = 0.0;
    std::int64_t lines_per_unit = 0;
    std::int64_t L = 0;
    /// Throw CapExceeded instead of returning a failed outcome.
    bool throw_on_cap = false;
};

struct Request {
    LatticePoint* p = nullptr;
    double* H = nullptr;
    double dt = 0.0;
    double dt_drift = 0.0;
    double xi1 = 0.0;
    double xi2 = 0.0;
};

/// State machine of one coupled pair. prepare() emits step requests for the
/// batched kernels, after_step() applies the stage logic to the result.
class PairMachine {
public:
    void reset(const Context* ctx, const LatticePoint& x, const LatticePoint& xt,
               std::uint64_t stream)
    {
        ctx_ = ctx;
        stream_ = stream;
        counter_ = 0;
        x_ = x;
        xt_ = xt;
        t_ = 0.0;
        stage_start_ = 0.0;
        out_ = CouplingOutcome{};
        reflecting_ = false;
        pending_ = false;
        finished_ = false;
        stage_ = ctx->options.first_stage;
        refresh_h();
        enter_stage(stage_, true);
    }

    bool done() const { return stage_ >= 5 || finished_; }
    std::uint64_t stream() const { return stream_; }
    std::uint64_t counter() const { return counter_; }
    const CouplingOutcome& outcome() const { return out_; }

    int prepare(int sub, const double z[4], Request* req)
    {
        pending_ = false;
        if (done()) return 0;
        if (sub == 0) iter_stage_ = stage_;
        else if (iter_stage_ == 0) return 0;
        const Context& c = *ctx_;
        const bool paired_stage = stage_ == 0 || c.options.paired;

        double dt = c.policy.dt;
        if (c.policy.adaptive_core) {
            if (stage_ == 0) {
                const double lv[1] = {c.options.regions.h0};
                dt = std::min(core_adaptive_dt(std::fabs(hx_), c.outer, c.k, c.policy.dt, c.kappa,
                                               c.cap_dt, lv, 1),
                              core_adaptive_dt(std::fabs(hxt_), c.outer, c.k, c.policy.dt,
                                               c.kappa, c.cap_dt, lv, 1));
            } else {
                dt = core_adaptive_dt(std::fabs(hx_), c.outer, c.k, c.policy.dt, c.kappa,
                                      c.cap_dt, nullptr, 0);
            }
        }
        const double dtd = std::min(dt, c.policy.dt);
        const Vec2 zx = sub == 0 ? Vec2{z[0], z[1]} : Vec2{z[2], z[3]};

        prev_x_ = x_;
        prev_xt_ = xt_;
        t_prev_ = t_;
        dt_ = dt;
        sub_ = sub;
        pending_ = true;

        int n = 0;
        req[n++] = {&x_, &hx_, dt, dtd, zx.x1, zx.x2};
        if (paired_stage) {
            Vec2 zt;
            if (stage_ == 0) zt = reflecting_ ? reflect_.apply(zx) : Vec2{z[2], z[3]};
            else if (stage_ == 1 || stage_ == 3) zt = zx;
            else if (stage_ == 2) zt = {-zx.x1, zx.x2};
            else zt = {zx.x1, -zx.x2};
            req[n++] = {&xt_, &hxt_, dt, dtd, zt.x1, zt.x2};
        }
        return n;
    }

    void after_step()
    {
        if (!pending_) return;
        pending_ = false;
        t_ = t_prev_ + dt_;
        ++out_.steps;
        switch (stage_) {
        case 0: after_stage1(); break;
        case 1: after_sync(0); break;
        case 2: after_mirror(0); break;
        case 3: after_sync(1); break;
        case 4: after_mirror(1); break;
        default: break;
        }
        if (!done() && t_ >= ctx_->policy.t_max) fail();
    }

    void end_iteration() { ++counter_; }

private:
    // -- bookkeeping -------------------------------------------------------

    void refresh_h()
    {
        hx_ = ctx_->field->stream(x_);
        hxt_ = ctx_->field->stream(xt_);
    }

    bool derived() const { return stage_ >= 1 && !ctx_->options.paired; }

    /// Rebuilds the partner from X in the derived stages.
    void derive_partner()
    {
        if (stage_ == 1 || stage_ == 3) {
            for (int i = 0; i < 2; ++i) {
                xt_.j[i] = x_.j[i] + D_[i];
                xt_.s[i] = x_.s[i];
            }
        } else if (stage_ == 2 || stage_ == 4) {
            const int a = stage_ == 2 ? 0 : 1;
            const int b = 1 - a;
            xt_.j[a] = S_ - x_.j[a];
            xt_.s[a] = -x_.s[a];
            xt_.j[b] = x_.j[b] + D_[b];
            xt_.s[b] = x_.s[b];
        }
    }

    void fail()
    {
        if (derived()) derive_partner();
        if (ctx_->throw_on_cap)
            throw CapExceeded("coupling stage " + std::string(stage_name(stage_)) +
                              " exceeded t_max");
        out_.stage_durations[stage_] = t_ - stage_start_;
        out_.failed_stage = stage_;
        out_.tau_cpl = t_;
        out_.success = false;
        out_.final_x = x_;
        out_.final_x_tilde = xt_;
        finished_ = true;
    }

    void finish_all()
    {
        out_.tau_cpl = 0.0;
        for (double d : out_.stage_durations) out_.tau_cpl += d;
        out_.success = true;
        out_.failed_stage = -1;
        out_.final_x = x_;
        out_.final_x_tilde = xt_;
        stage_ = 5;
    }

    void complete_stage()
    {
        out_.stage_durations[stage_] = t_ - stage_start_;
        out_.glue_positions[stage_] = ctx_->field->to_plane(x_);
        const int next = stage_ + 1;
        if (next > ctx_->options.last_stage) {
            stage_ = next;
            finish_all();
            return;
        }
        enter_stage(next, false);
    }

    /// Checks the entry condition of `stage` and completes it at once when
    /// it already holds.
    void enter_stage(int stage, bool initial)
    {
        const Context& c = *ctx_;
        stage_ = stage;
        stage_start_ = t_;
        if (stage_ > c.options.last_stage) {
            finish_all();
            return;
        }
        // Already coupled on the torus: every remaining stage is trivial.
        if (same_on_torus(x_, xt_, c.lines_per_unit) && c.options.last_stage == 4) {
            for (int s = stage_; s <= 4; ++s) {
                out_.stage_durations[s] = 0.0;
                out_.glue_positions[s] = c.field->to_plane(x_);
            }
            xt_ = x_;
            finish_all();
            return;
        }
        if (stage_ == 0) {
            reflecting_ = false;
            try_start_reflection();
            return;
        }
        const double tol = kSyncTol * c.eps;
        if (stage_ == 1 || stage_ == 3) {
            const int a = stage_ == 1 ? 0 : 1;
            for (int i = 0; i < 2; ++i) {
                D_[i] = xt_.j[i] - x_.j[i];
                if (mod_floor(D_[i], 2) != 0 || std::fabs(xt_.s[i] - x_.s[i]) > tol) {
                    if (initial)
                        throw ValidationError("synchronous stage needs equal projections mod eps");
                    throw DesyncDetected("projections differ at the start of a synchronous stage");
                }
                xt_.s[i] = x_.s[i];
            }
            refresh_h();
            if (x_.s[a] == 0.0) complete_stage();
            return;
        }
        // Mirror stages.
        const int a = stage_ == 2 ? 0 : 1;
        const int b = 1 - a;
        D_[b] = xt_.j[b] - x_.j[b];
        if (mod_floor(D_[b], 2) != 0 || std::fabs(xt_.s[b] - x_.s[b]) > tol ||
            std::fabs(x_.s[a]) > tol || std::fabs(xt_.s[a]) > tol ||
            mod_floor(xt_.j[a] - x_.j[a], 2) != 0) {
            if (initial)
                throw ValidationError(
                    "mirror stage needs equal projections and both points on a lattice line");
            throw DesyncDetected("mirror stage entered off the lattice");
        }
        x_.s[a] = 0.0;
        xt_.s[a] = 0.0;
        xt_.s[b] = x_.s[b];
        S_ = x_.j[a] + xt_.j[a];
        refresh_h();
        if (is_target(x_.j[a])) glue_mirror(a);
    }

    bool is_target(std::int64_t line) const
    {
        return mod_floor(line - S_ / 2, ctx_->L) == 0;
    }

    void glue_mirror(int a)
    {
        const int b = 1 - a;
        xt_.j[a] = x_.j[a];
        xt_.s[a] = x_.s[a];
        xt_.j[b] = x_.j[b] + D_[b];
        xt_.s[b] = x_.s[b];
        refresh_h();
        complete_stage();
    }

    BridgeDraw* bridge_draw(BridgeDraw& storage, int slot) const
    {
        if (!ctx_->policy.bridge_correction) return nullptr;
        double u[4];
        philox::uniforms4(ctx_->seed, stream_, 2 * counter_ + static_cast<std::uint64_t>(sub_),
                          philox::kUniform, u);
        storage = {ctx_->kappa, u[slot]};
        return &storage;
    }

    // -- stage 1 -----------------------------------------------------------

    void glue_projections(double t_event, double lam)
    {
        const double h = ctx_->h;
        if (lam < 1.0) {
            // Linear interpolation of X inside the drift-free core.
            for (int i = 0; i < 2; ++i) {
                const double e =
                    static_cast<double>(x_.j[i] - prev_x_.j[i]) * h + x_.s[i];
                x_.j[i] = prev_x_.j[i];
                x_.s[i] = prev_x_.s[i] + lam * (e - prev_x_.s[i]);
            }
            ctx_->field->renormalize(x_);
        }
        glue_mod_eps(x_, xt_, h);
        t_ = t_event;
        refresh_h();
        complete_stage();
    }

    /// Enters the reflection phase when both copies lie in U' of the same
    /// cell. Returns true if the stage completed.
    bool try_start_reflection()
    {
        const Context& c = *ctx_;
        const CellRegions& r = c.options.regions;
        if (!(r.in_U_prime(hx_) && r.in_U_prime(hxt_))) return false;
        const std::array<int, 2> cx = cell_of(x_), ct = cell_of(xt_);
        if (cx != ct) return false;
        const Vec2 d = cell_displacement(x_, xt_, c.h);
        const double norm = std::hypot(d.x1, d.x2);
        ++out_.stage1_attempts;
        if (norm < 1e-14) {
            glue_mod_eps(x_, xt_, c.h);
            refresh_h();
            complete_stage();
            return true;
        }
        n1_ = d.x1 / norm;
        n2_ = d.x2 / norm;
        reflect_ = NoiseTransform::reflection(n1_, n2_);
        sep_prev_ = norm;
        reflecting_ = true;
        return false;
    }

    void after_stage1()
    {
        const Context& c = *ctx_;
        if (!reflecting_) {
            try_start_reflection();
            return;
        }
        const Vec2 d = cell_displacement(x_, xt_, c.h);
        const double sep = n1_ * d.x1 + n2_ * d.x2;
        if (sep <= 0.0) {
            const double lam = sep_prev_ / (sep_prev_ - sep);
            glue_projections(t_prev_ + lam * dt_, lam);
            return;
        }
        if (c.options.bridge_in_core) {
            // Separation is a Brownian motion with variance 4 kappa t.
            double u[4];
            philox::uniforms4(c.seed, stream_, 2 * counter_, philox::kUniform, u);
            const double p = std::exp(-2.0 * sep_prev_ * sep / (4.0 * c.kappa * dt_));
            if (u[1] < p) {
                const double lam = sep_prev_ / (sep_prev_ + sep);
                glue_projections(t_prev_ + lam * dt_, lam);
                return;
            }
        }
        const CellRegions& r = c.options.regions;
        if (!r.in_U(hx_) || !r.in_U(hxt_)) {
            reflecting_ = false;
            try_start_reflection();
            return;
        }
        sep_prev_ = sep;
    }

    // -- stages 2 and 4 ----------------------------------------------------

    void check_sync()
    {
        double dev = 0.0;
        for (int i = 0; i < 2; ++i) {
            if (xt_.j[i] - x_.j[i] != D_[i]) dev = std::numeric_limits<double>::infinity();
            else dev = std::max(dev, std::fabs(xt_.s[i] - x_.s[i]));
        }
        out_.max_sync_deviation = std::max(out_.max_sync_deviation, dev);
        if (dev > kSyncTol * ctx_->eps)
            throw DesyncDetected("synchronous copies separated modulo eps");
    }

    void after_sync(int a)
    {
        const Context& c = *ctx_;
        if (c.options.paired) check_sync();
        BridgeDraw bd;
        const StepSegment seg{prev_x_, x_, t_prev_, dt_};
        const auto hit = detect_line_hit(*c.field, seg, a, bridge_draw(bd, 0));
        if (!hit) return;
        if (c.options.paired) {
            const StepSegment segt{prev_xt_, xt_, t_prev_, dt_};
            const auto hitt = detect_line_hit(*c.field, segt, a, bridge_draw(bd, 0));
            if (!hitt || std::fabs(hitt->time - hit->time) > 1e-12 * std::max(1.0, hit->time))
                throw DesyncDetected("synchronous copies reached the lattice at different times");
        }
        x_ = hit->point;
        t_ = hit->time;
        for (int i = 0; i < 2; ++i) {
            xt_.j[i] = x_.j[i] + D_[i];
            xt_.s[i] = x_.s[i];
        }
        refresh_h();
        complete_stage();
    }

    // -- stages 3 and 5 ----------------------------------------------------

    void check_mirror(int a)
    {
        const int b = 1 - a;
        const Context& c = *ctx_;
        double dev_a = std::fabs(xt_.s[a] + x_.s[a]);
        if (xt_.j[a] + x_.j[a] != S_) dev_a = std::numeric_limits<double>::infinity();
        double dev_b = std::fabs(xt_.s[b] - x_.s[b]);
        if (mod_floor(xt_.j[b] - x_.j[b], 2) != 0) dev_b = std::numeric_limits<double>::infinity();
        // Projection of the other coordinate onto the eps-circle.
        const Vec2 px = c.field->to_torus(x_), pt = c.field->to_torus(xt_);
        const double cb = b == 0 ? circular_gap(px.x1, pt.x1, c.eps)
                                 : circular_gap(px.x2, pt.x2, c.eps);
        out_.max_mirror_deviation = std::max(out_.max_mirror_deviation, dev_a);
        out_.max_transverse_deviation = std::max(out_.max_transverse_deviation, std::max(cb, dev_b));
        if (dev_a > kMirrorTol * c.eps || dev_b > kMirrorTol * c.eps)
            throw DesyncDetected("mirror relations broke during a mirror stage");
    }

    void after_mirror(int a)
    {
        const Context& c = *ctx_;
        if (c.options.paired) check_mirror(a);
        BridgeDraw bd;
        const StepSegment seg{prev_x_, x_, t_prev_, dt_};
        const auto hit = detect_line_hit(*c.field, seg, a, bridge_draw(bd, 0));
        if (!hit || !is_target(hit->point.j[a])) return;
        x_ = hit->point;
        t_ = hit->time;
        glue_mirror(a);
    }

    const Context* ctx_ = nullptr;
    std::uint64_t stream_ = 0;
    std::uint64_t counter_ = 0;
    LatticePoint x_, xt_, prev_x_, prev_xt_;
    double hx_ = 0.0, hxt_ = 0.0;
    double t_ = 0.0, t_prev_ = 0.0, dt_ = 0.0, stage_start_ = 0.0;
    int stage_ = 0;
    int iter_stage_ = 0;
    int sub_ = 0;
    bool pending_ = false;
    bool finished_ = false;
    // stage 1
    bool reflecting_ = false;
    double n1_ = 0.0, n2_ = 0.0, sep_prev_ = 0.0;
    NoiseTransform reflect_;
    // stages 2-5
    std::array<std::int64_t, 2> D_{0, 0};
    std::int64_t S_ = 0;

    CouplingOutcome out_;
};

/// CellRegions::validate() once per distinct (h0, u_level).
void ensure_validated(const CellRegions& r)
{
    static std::mutex mu;
    static std::vector<std::pair<double, double>> ok;
    std::lock_guard<std::mutex> lock(mu);
    for (const auto& v : ok)
        if (v.first == r.h0 && v.second == r.u_level) return;
    r.validate();
    ok.emplace_back(r.h0, r.u_level);
}

Context make_context(const FlowField& field, const StepPolicy& policy, std::uint64_t seed,
                     const CouplingOptions& options)
{
    const FlowParams& p = field.params();
    if (!(policy.dt > 0.0)) throw ValidationError("step size must be positive");
    if (!(policy.t_max > 0.0)) throw ValidationError("t_max must be positive");
    if (options.first_stage < 0 || options.last_stage > 4 ||
        options.first_stage > options.last_stage)
        throw ValidationError("stage range must satisfy 0 <= first <= last <= 4");
    if (!(options.regions.h0 > options.regions.u_level) || !(options.regions.h0 < 1.0))
        throw ValidationError("h0 must lie between the U level and 1");
    Context c;
    c.options = options;
    c.options.regions.u_level = p.cutoff_outer;
    ensure_validated(c.options.regions);
    c.field = &field;
    c.sc = SplitConstants(field, p.kappa);
    c.policy = policy;
    c.seed = seed;
    c.kappa = p.kappa;
    c.eps = p.epsilon;
    c.h = field.half_cell();
    c.outer = p.cutoff_outer;
    c.k = field.wavenumber();
    c.cap_dt = 1e-3 * p.epsilon * p.epsilon / p.kappa;
    c.lines_per_unit = field.lines_per_unit();
    c.L = c.lines_per_unit / 2;
    return c;
}

/// Runs pairs from the shared queue through a batch of machines.
void run_worker(const Context& ctx, const std::vector<std::pair<LatticePoint, LatticePoint>>& pairs,
                std::uint64_t first_stream, std::atomic<std::size_t>& next,
                std::vector<CouplingOutcome>& results, std::size_t batch, KernelMode kmode)
{
    const std::size_t n_pairs = pairs.size();
    std::vector<PairMachine> slot(batch);
    std::vector<std::size_t> id(batch);
    std::size_t nact = 0;

    auto claim = [&](std::size_t s) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n_pairs) return false;
        id[s] = i;
        slot[s].reset(&ctx, pairs[i].first, pairs[i].second, first_stream + i);
        return true;
    };
    auto retire_done = [&]() {
        for (std::size_t s = 0; s < nact;) {
            if (!slot[s].done()) {
                ++s;
                continue;
            }
            results[id[s]] = slot[s].outcome();
            if (claim(s)) continue;
            --nact;
            std::swap(slot[s], slot[nact]);
            std::swap(id[s], id[nact]);
        }
    };

    while (nact < batch && claim(nact)) ++nact;
    retire_done();

    std::vector<std::uint64_t> stream(batch), counter(batch);
    std::vector<double> z(4 * batch);
    std::vector<Request> req(2 * batch);
    std::vector<std::int64_t> j1(2 * batch), j2(2 * batch);
    std::vector<double> s1(2 * batch), s2(2 * batch), dt(2 * batch), dtd(2 * batch),
        xi1(2 * batch), xi2(2 * batch), H(2 * batch);
    const KernelMode km = kmode == KernelMode::serial ? KernelMode::serial : KernelMode::simd;

    while (nact > 0) {
        for (std::size_t s = 0; s < nact; ++s) {
            stream[s] = slot[s].stream();
            counter[s] = slot[s].counter();
        }
        normals_batch(ctx.seed, nact, stream.data(), counter.data(), z.data(), km);
        for (int sub = 0; sub < 2; ++sub) {
            std::size_t nr = 0;
            for (std::size_t s = 0; s < nact; ++s) {
                const double zs[4] = {z[s], z[nact + s], z[2 * nact + s], z[3 * nact + s]};
                nr += static_cast<std::size_t>(slot[s].prepare(sub, zs, req.data() + nr));
            }
            if (nr == 0) continue;
            for (std::size_t r = 0; r < nr; ++r) {
                const Request& q = req[r];
                j1[r] = q.p->j[0];
                j2[r] = q.p->j[1];
                s1[r] = q.p->s[0];
                s2[r] = q.p->s[1];
                dt[r] = q.dt;
                dtd[r] = q.dt_drift;
                xi1[r] = q.xi1;
                xi2[r] = q.xi2;
            }
            split_batch(ctx.sc, nr, dt.data(), dtd.data(), xi1.data(), xi2.data(), j1.data(),
                        s1.data(), j2.data(), s2.data(), km);
            stream_batch(ctx.sc, nr, j1.data(), s1.data(), j2.data(), s2.data(), H.data(), km);
            for (std::size_t r = 0; r < nr; ++r) {
                const Request& q = req[r];
                q.p->j[0] = j1[r];
                q.p->j[1] = j2[r];
                q.p->s[0] = s1[r];
                q.p->s[1] = s2[r];
                *q.H = H[r];
            }
            for (std::size_t s = 0; s < nact; ++s) slot[s].after_step();
        }
        for (std::size_t s = 0; s < nact; ++s) slot[s].end_iteration();
        retire_done();
    }
}

std::vector<CouplingOutcome> run_pairs(const Context& ctx,
                                       const std::vector<std::pair<LatticePoint, LatticePoint>>& pairs,
                                       std::uint64_t first_stream, std::size_t batch,
                                       KernelMode mode, int threads)
{
    std::vector<CouplingOutcome> results(pairs.size());
    if (pairs.empty()) return results;
    batch = std::max<std::size_t>(1, std::min(batch, pairs.size()));
    std::atomic<std::size_t> next{0};
    if (mode != KernelMode::parallel || threads <= 1) {
        run_worker(ctx, pairs, first_stream, next, results, batch, mode);
        return results;
    }
    std::exception_ptr err;
#pragma omp parallel num_threads(threads)
    {
        try {
            run_worker(ctx, pairs, first_stream, next, results, batch, mode);
        } catch (...) {
#pragma omp critical(cellmix_coupling_error)
            {
                if (!err) err = std::current_exception();
            }
            next.store(pairs.size());
        }
    }
    if (err) std::rethrow_exception(err);
    return results;
}

CouplingOutcome run_single(const FlowField& field, const LatticePoint& x, const LatticePoint& xt,
                           const StepPolicy& policy, std::uint64_t seed, std::uint64_t stream,
                           const CouplingOptions& options, bool throw_on_cap)
{
    Context ctx = make_context(field, policy, seed, options);
    ctx.throw_on_cap = throw_on_cap;
    LatticePoint a = x, b = xt;
    field.renormalize(a);
    field.renormalize(b);
    return run_pairs(ctx, {{a, b}}, stream, 1, KernelMode::simd, 1).front();
}

StageResult stage_result(const CouplingOutcome& o, int stage)
{
    StageResult r;
    r.duration = o.stage_durations[stage];
    r.x = o.final_x;
    r.x_tilde = o.final_x_tilde;
    r.success = o.success;
    r.attempts = o.stage1_attempts;
    r.max_deviation = std::max({o.max_sync_deviation, o.max_mirror_deviation,
                                o.max_transverse_deviation});
    r.steps = o.steps;
    return r;
}

double quantile_sorted(const std::vector<double>& v, double q)
{
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    const double pos = q * static_cast<double>(v.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(v.size() - 1, lo + 1);
    const double w = pos - static_cast<double>(lo);
    return v[lo] + w * (v[hi] - v[lo]);
}

} // namespace

NoiseTransform reflection_transform(Vec2 y, Vec2 y_tilde, double eps)
{
    if (!(eps > 0.0)) throw ValidationError("eps must be positive");
    auto wrap = [eps](double d) {
        d -= eps * std::nearbyint(d / eps);
        return d;
    };
    const double d1 = wrap(y.x1 - y_tilde.x1);
    const double d2 = wrap(y.x2 - y_tilde.x2);
    const double norm = std::hypot(d1, d2);
    if (norm < 1e-14) throw DegeneratePair("reflection needs two distinct points");
    return NoiseTransform::reflection(d1 / norm, d2 / norm);
}

CellRegions::CellRegions(double h0_level, double u_level_value)
    : h0(h0_level), u_level(u_level_value)
{
    if (!(u_level > 0.0) || !(h0 > u_level) || !(h0 < 1.0))
        throw ValidationError("cell regions need 0 < u_level < h0 < 1");
    validate();
}

double CellRegions::inscribed_margin(int samples) const
{
    // Cell-centred angles: H = cos(a) cos(b) with |a|, |b| < pi/2.
    constexpr double kHalfPi = std::numbers::pi / 2.0;
    auto H = [](double a, double b) {
        if (std::fabs(a) >= kHalfPi || std::fabs(b) >= kHalfPi) return -1.0;
        return std::cos(a) * std::cos(b);
    };
    const double amax = std::acos(h0);
    // Boundary of U': b = +-acos(h0 / cos a).
    std::vector<std::pair<double, double>> boundary;
    for (int i = 0; i <= samples; ++i) {
        const double a = -amax + 2.0 * amax * i / samples;
        const double r = std::min(1.0, h0 / std::cos(a));
        const double b = std::acos(r);
        boundary.emplace_back(a, b);
        boundary.emplace_back(a, -b);
    }
    std::vector<std::pair<double, double>> centres = boundary;
    for (int i = 0; i <= samples; ++i)
        for (int k = 0; k <= samples; ++k) {
            const double a = -amax + 2.0 * amax * i / samples;
            const double b = -amax + 2.0 * amax * k / samples;
            if (H(a, b) > h0) centres.emplace_back(a, b);
        }
    double margin = std::numeric_limits<double>::infinity();
    for (const auto& y : centres) {
        for (const auto& yt : boundary) {
            const double d1 = y.first - yt.first, d2 = y.second - yt.second;
            const double norm = std::hypot(d1, d2);
            if (norm == 0.0) continue;
            const double R = 0.5 * norm;
            const double n1 = d1 / norm, n2 = d2 / norm;
            for (int sa = -1; sa <= 1; sa += 2)
                for (int sb = -1; sb <= 1; sb += 2) {
                    const double ca = y.first + R * (sa * n1 - sb * n2);
                    const double cb = y.second + R * (sa * n2 + sb * n1);
                    margin = std::min(margin, H(ca, cb) - u_level);
                }
        }
    }
    return margin;
}

void CellRegions::validate() const
{
    const double m = inscribed_margin();
    if (!(m > 0.0))
        throw ValidationError("square K leaves U for h0 = " + std::to_string(h0) +
                              " (margin " + std::to_string(m) + ")");
}

std::array<int, 2> cell_of(const LatticePoint& p)
{
    std::array<int, 2> c{};
    for (int i = 0; i < 2; ++i) {
        const std::int64_t q = p.s[i] >= 0.0 ? p.j[i] : p.j[i] - 1;
        c[i] = static_cast<int>(mod_floor(q, 2));
    }
    return c;
}

const char* stage_name(int stage)
{
    switch (stage) {
    case 0: return "stage1";
    case 1: return "stage2v";
    case 2: return "stage3v";
    case 3: return "stage2h";
    case 4: return "stage3h";
    default: return "done";
    }
}

CouplingOutcome run_coupling(const FlowField& field, const LatticePoint& x,
                             const LatticePoint& x_tilde, const StepPolicy& policy,
                             std::uint64_t seed, std::uint64_t stream,
                             const CouplingOptions& options)
{
    return run_single(field, x, x_tilde, policy, seed, stream, options, false);
}

CouplingOutcome run_full_coupling(const FlowField& field, const LatticePoint& x,
                                  const LatticePoint& x_tilde, const StepPolicy& policy,
                                  std::uint64_t seed, std::uint64_t stream)
{
    return run_coupling(field, x, x_tilde, policy, seed, stream, CouplingOptions{});
}

StageResult stage1_couple_projections(const FlowField& field, const LatticePoint& x,
                                      const LatticePoint& x_tilde, const CellRegions& regions,
                                      const StepPolicy& policy, std::uint64_t seed,
                                      std::uint64_t stream)
{
    CouplingOptions opt;
    opt.regions = regions;
    opt.first_stage = opt.last_stage = 0;
    return stage_result(run_single(field, x, x_tilde, policy, seed, stream, opt, true), 0);
}

StageResult stage2_sync_to_lattice(const FlowField& field, const LatticePoint& x,
                                   const LatticePoint& x_tilde, int axis, const StepPolicy& policy,
                                   std::uint64_t seed, std::uint64_t stream, bool paired)
{
    if (axis != 0 && axis != 1) throw ValidationError("axis must be 0 or 1");
    CouplingOptions opt;
    opt.paired = paired;
    opt.first_stage = opt.last_stage = axis == 0 ? 1 : 3;
    return stage_result(run_single(field, x, x_tilde, policy, seed, stream, opt, true),
                        opt.first_stage);
}

StageResult stage3_mirror_to_bisector(const FlowField& field, const LatticePoint& x,
                                      const LatticePoint& x_tilde, int axis,
                                      const StepPolicy& policy, std::uint64_t seed,
                                      std::uint64_t stream, bool paired)
{
    if (axis != 0 && axis != 1) throw ValidationError("axis must be 0 or 1");
    CouplingOptions opt;
    opt.paired = paired;
    opt.first_stage = opt.last_stage = axis == 0 ? 2 : 4;
    return stage_result(run_single(field, x, x_tilde, policy, seed, stream, opt, true),
                        opt.first_stage);
}

PairDistribution parse_pair_distribution(const std::string& name)
{
    if (name == "uniform") return PairDistribution::uniform;
    if (name == "grid") return PairDistribution::grid;
    throw ValidationError("unknown pair distribution '" + name + "' (uniform|grid)");
}

const char* to_string(PairDistribution d)
{
    return d == PairDistribution::uniform ? "uniform" : "grid";
}

std::pair<Vec2, Vec2> starting_pair(PairDistribution dist, std::uint64_t seed, std::uint64_t index,
                                    double eps)
{
    if (dist == PairDistribution::uniform) {
        double u[4];
        philox::uniforms4(seed, index, 0, philox::kInitial, u);
        return {{u[0], u[1]}, {u[2], u[3]}};
    }
    // 4x4 grid: x on the lattice points (i/4, k/4); the partner sits at the
    // antipode shifted by eps/4 along the axes with odd index, giving
    // antipodal corners, edge midpoints and cell centres.
    const std::uint64_t g = index % 16;
    const int i = static_cast<int>(g / 4), k = static_cast<int>(g % 4);
    const Vec2 x{0.25 * i, 0.25 * k};
    Vec2 xt{x.x1 + 0.5 + 0.25 * eps * (i % 2), x.x2 + 0.5 + 0.25 * eps * (k % 2)};
    xt.x1 -= std::floor(xt.x1);
    xt.x2 -= std::floor(xt.x2);
    return {x, xt};
}

std::vector<CouplingOutcome> couple_pairs(const FlowField& field,
                                          const std::vector<std::pair<LatticePoint, LatticePoint>>& pairs,
                                          const StepPolicy& policy, std::uint64_t seed,
                                          std::uint64_t first_stream, const TauOptions& options)
{
    Context ctx = make_context(field, policy, seed, options.coupling);
    std::vector<std::pair<LatticePoint, LatticePoint>> norm = pairs;
    for (auto& p : norm) {
        field.renormalize(p.first);
        field.renormalize(p.second);
    }
    return run_pairs(ctx, norm, first_stream, options.batch, options.mode, options.threads);
}

TauStatistics estimate_tau_cpl(const FlowParams& params, std::size_t n_samples,
                               PairDistribution dist, const StepPolicy& policy, std::uint64_t seed,
                               const TauOptions& options)
{
    if (n_samples < 30) throw ValidationError("estimate_tau_cpl needs at least 30 samples");
    params.validate();
    const FlowField field(params);
    std::vector<std::pair<LatticePoint, LatticePoint>> pairs(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) {
        const auto [x, xt] = starting_pair(dist, seed, i, params.epsilon);
        pairs[i] = {field.to_lattice(x), field.to_lattice(xt)};
    }
    TauStatistics st;
    st.n_samples = n_samples;
    st.outcomes = couple_pairs(field, pairs, policy, seed, 0, options);

    std::vector<double> tau, sums;
    for (const CouplingOutcome& o : st.outcomes) {
        if (!o.success) {
            ++st.failures;
            continue;
        }
        tau.push_back(o.tau_cpl);
        double s = 0.0;
        for (int k = 0; k < 5; ++k) {
            st.stage_means[k] += o.stage_durations[k];
            if (options.stage_sum & (1u << k)) s += o.stage_durations[k];
        }
        sums.push_back(s);
    }
    const double n = static_cast<double>(tau.size());
    if (tau.empty()) {
        st.mean = st.median = st.upper_quartile = st.standard_error =
            std::numeric_limits<double>::quiet_NaN();
        st.stage_sum_mean = st.stage_sum_se = std::numeric_limits<double>::quiet_NaN();
        return st;
    }
    for (double& m : st.stage_means) m /= n;
    auto mean_se = [n](const std::vector<double>& v, double& mean, double& se) {
        double s = 0.0;
        for (double x : v) s += x;
        mean = s / n;
        double ss = 0.0;
        for (double x : v) ss += (x - mean) * (x - mean);
        se = v.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
    };
    mean_se(tau, st.mean, st.standard_error);
    mean_se(sums, st.stage_sum_mean, st.stage_sum_se);
    std::sort(tau.begin(), tau.end());
    st.median = quantile_sorted(tau, 0.5);
    st.upper_quartile = quantile_sorted(tau, 0.75);
    return st;
}

} // namespace cellmix
