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

/// @file stopping.hpp
/// @brief Crossing detectors and the separatrix clocks.
///
/// The separatrix {H = 0} is the union of the lattice lines x_i in (eps/2)Z,
/// so returns to it are detected as line crossings per axis. Boundary-layer
/// exits |H| = delta are refined by bisection along the linearly
/// interpolated step.

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cellmix/flowfield.hpp"
#include "cellmix/sde.hpp"

namespace cellmix {

enum class EventKind { vertical_line, horizontal_line, level_up, level_down, separatrix, diagonal };

const char* to_string(EventKind kind);

struct CrossingEvent {
    double time = 0.0;
    /// Plane coordinates of the event.
    Vec2 location;
    /// Lattice form of the location (exact on the crossed line).
    LatticePoint point;
    EventKind kind = EventKind::separatrix;
    /// Lattice line index for line events, +1/-1 for the level sign.
    std::int64_t index = 0;
};

/// Optional Brownian-bridge correction: a step whose endpoints lie on the
/// same side of a line at distances a and b still counts as a crossing with
/// probability exp(-2ab/(kappa dt)), decided by `uniform`.
struct BridgeDraw {
    double kappa = 0.0;
    double uniform = 1.0;
};

/// Crossing of a lattice line x_axis in (eps/2)Z during the step (axis 0 or
/// 1). Throws StepTooLarge when the step moves eps/4 or more along the axis.
std::optional<CrossingEvent> detect_line_hit(const FlowField& field, const StepSegment& seg,
                                             int axis, const BridgeDraw* bridge = nullptr);

/// Crossing of the level set H = level, refined by bisection on the linear
/// interpolant (at most 40 halvings, stops once |H - level| <= 1e-12).
std::optional<CrossingEvent> detect_level_hit(const FlowField& field, const StepSegment& seg,
                                              double level, const BridgeDraw* bridge = nullptr);

/// Crossing of a cell diagonal x1 -+ x2 in (eps/2)Z. family 0 is x1 - x2,
/// family 1 is x1 + x2.
std::optional<CrossingEvent> detect_diagonal_hit(const FlowField& field, const StepSegment& seg,
                                                 int family);

/// Event sequences of one trajectory. Index k of sigma_seq / tau_seq holds
/// sigma_{k+1} / tau_{k+1}; the first separatrix hit tau_0 is kept apart.
struct StoppingClock {
    std::optional<CrossingEvent> tau0;
    std::vector<CrossingEvent> sigma_seq;
    std::vector<CrossingEvent> tau_seq;
    /// tau_axis[i]: the returns in tau_seq whose coordinate i lies on the
    /// lattice (corners go to both).
    std::array<std::vector<CrossingEvent>, 2> tau_axis;
    /// Returns to {H = 0} after a diagonal crossing; index k holds the
    /// (k+1)-th such return.
    std::vector<CrossingEvent> tau_check_seq;
};

struct ClockOptions {
    bool layer = true;
    bool diagonal = false;
    /// Stop recording once this many tau (layer) events exist.
    std::size_t max_tau = static_cast<std::size_t>(-1);
    /// Stop recording once this many tau_check events exist.
    std::size_t max_check = static_cast<std::size_t>(-1);
};

/// Streaming fold of the clocks over one trajectory.
class ClockTracker {
public:
    ClockTracker(const FlowField& field, double delta, ClockOptions options = {});

    /// Starting state; a start on the separatrix fires tau_0 at t0.
    void start(const LatticePoint& x0, double t0 = 0.0);
    /// Consumes one step. `bridge` (optional) applies to the line detectors.
    void observe(const StepSegment& seg, const BridgeDraw* bridge = nullptr);

    const StoppingClock& clock() const { return clock_; }
    StoppingClock& clock() { return clock_; }
    /// True once every enabled sequence reached its cap.
    bool done() const;

private:
    enum class Phase { wait_tau0, wait_sigma, wait_tau };

    void record_return(const CrossingEvent& ev);

    const FlowField* field_;
    double delta_;
    ClockOptions opt_;
    StoppingClock clock_;
    Phase phase_ = Phase::wait_tau0;
    bool crossed_diagonal_ = false;
    double last_return_time_ = -1.0;
};

/// Clock sequences of a sampled trajectory (consecutive samples are treated
/// as steps).
StoppingClock boundary_layer_clock(const FlowField& field, const Trajectory& traj, double delta);

/// tau_check sequence of a sampled trajectory.
std::vector<CrossingEvent> diagonal_return_clock(const FlowField& field, const Trajectory& traj);

/// Returns of `clock.tau_seq` whose coordinate `axis` (0 or 1) lies within
/// 1e-8 eps of the lattice (eps/2)Z.
std::vector<CrossingEvent> axis_filtered_returns(const StoppingClock& clock, int axis, double eps);

} // namespace cellmix
