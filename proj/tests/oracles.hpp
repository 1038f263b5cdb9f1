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

// Reference computations that share no code with the library. They are
// slow and plain on purpose.

#pragma once

#include <cstdint>
#include <vector>

namespace oracle {

/// Total variation integral |p - 1| of the heat kernel on the unit torus
/// after time t, started from a Gaussian of standard deviation sigma, with
/// generator (kappa/2) Laplacian. Midpoint quadrature on quad^2 nodes.
double heat_tv(double kappa, double t, double sigma, int quad = 256);

/// First t with heat_tv(kappa, t, sigma) = 1/2, by bisection.
double heat_mixing_time(double kappa, double sigma, int quad = 256);

/// Norm-halving time of the slowest mean-zero heat mode, ln 2 / (2 pi^2 kappa).
double heat_halving_time(double kappa);

/// Stage-1 coupling times for two Brownian motions on the eps-torus (no
/// drift): independent until both sit in the same quarter cell with
/// |H| > h0, then reflected until the separation along the fixed reflection
/// axis changes sign; a copy reaching |H| <= u_level ends the attempt.
/// Plain Euler steps of size dt with std::mt19937_64 normals.
std::vector<double> bm_stage1_times(double eps, double kappa, double h0, double u_level,
                                    int pairs, double dt, std::uint64_t seed);

/// Mean first time a 1-D Brownian motion with variance rate kappa started
/// at x0 in (0, L) leaves the interval: x0 (L - x0) / kappa.
double interval_exit_mean(double x0, double length, double kappa);

/// Independent Philox4x32-10 round function, straight from the published
/// description.
void philox4x32_10(std::uint32_t ctr[4], std::uint32_t key[2]);

} // namespace oracle
