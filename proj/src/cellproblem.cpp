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

// Cell problem for the homogenized diffusivity, finite volumes on one
// quarter of the periodic cell.
//
// In cell units y = x/eps the corrector solves
//     Lap chi + Pe w . grad chi = -Pe w1,   Pe = 2A/kappa,
// with w = grad-perp (H zeta(H)), H = sin(2 pi y1) sin(2 pi y2). chi is odd
// about y1 = 0 and y1 = 1/2 and even about y2 = 0 and y2 = 1/2, so the
// quarter [0, 1/2]^2 with Dirichlet/Neumann walls carries the whole
// solution. Velocities enter as exact face fluxes of the discrete stream
// function, which keeps the discrete field divergence free.

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include "cellmix/errors.hpp"
#include "cellmix/spectral.hpp"

namespace cellmix {

namespace {

constexpr int kMaxCellN = 4096;

int auto_cell_n(double delta)
{
    int n = 8;
    while (n * delta < 8.0 && n < kMaxCellN) n *= 2;
    return n;
}

} // namespace

Diffusivity effective_diffusivity(const FlowParams& params, const SolverConfig& config)
{
    params.validate();
    config.validate();
    Diffusivity out;
    if (params.amplitude == 0.0) {
        out.d11 = out.d22 = params.kappa;
        out.cell_n = config.cell_n;
        return out;
    }
    const double delta = params.delta();
    const int cell_n = config.cell_n > 0 ? config.cell_n : auto_cell_n(delta);
    if (config.resolution_guard && cell_n * delta < 8.0)
        throw ResolutionGuard("cell_n * delta = " + std::to_string(cell_n * delta) +
                              " < 8; the cell boundary layers are unresolved");
    out.cell_n = cell_n;

    const int m = cell_n / 2;
    const double h = 1.0 / cell_n;
    const double pe = 2.0 * params.amplitude / params.kappa;
    const CutoffProfile cut(params.cutoff_inner, params.cutoff_outer);

    // Stream function at the (m+1)^2 corners.
    std::vector<double> psi(static_cast<std::size_t>(m + 1) * (m + 1));
    auto P = [&](int i, int j) -> double& { return psi[static_cast<std::size_t>(i) * (m + 1) + j]; };
    for (int i = 0; i <= m; ++i)
        for (int j = 0; j <= m; ++j) {
            const double H = std::sin(2.0 * std::numbers::pi * i * h) *
                             std::sin(2.0 * std::numbers::pi * j * h);
            P(i, j) = H * cut.zeta(H);
        }
    // F1(i, j): flux through the x-face at y1 = i h of row j (h times w1).
    // F2(i, j): flux through the y-face at y2 = j h of column i.
    auto F1 = [&](int i, int j) { return -(P(i, j + 1) - P(i, j)); };
    auto F2 = [&](int i, int j) { return P(i + 1, j) - P(i, j); };

    const int N = m * m;
    auto id = [m](int i, int j) { return i * m + j; };
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(N) * 5);
    Eigen::VectorXd rhs(N);
    const double ih2 = 1.0 / (h * h);
    const double adv = pe / (2.0 * h * h);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) {
            const int r = id(i, j);
            double diag = 0.0;
            // Diffusion; ghost -c across x-walls, c across y-walls.
            if (i > 0) {
                trip.emplace_back(r, id(i - 1, j), ih2);
                diag -= ih2;
            } else {
                diag -= 2.0 * ih2;
            }
            if (i < m - 1) {
                trip.emplace_back(r, id(i + 1, j), ih2);
                diag -= ih2;
            } else {
                diag -= 2.0 * ih2;
            }
            if (j > 0) {
                trip.emplace_back(r, id(i, j - 1), ih2);
                diag -= ih2;
            }
            if (j < m - 1) {
                trip.emplace_back(r, id(i, j + 1), ih2);
                diag -= ih2;
            }
            // Centred advection in flux form; wall fluxes vanish.
            const double fe = F1(i + 1, j), fw = F1(i, j);
            const double fn = F2(i, j + 1), fs = F2(i, j);
            diag += adv * (fe - fw + fn - fs);
            if (i < m - 1) trip.emplace_back(r, id(i + 1, j), adv * fe);
            if (i > 0) trip.emplace_back(r, id(i - 1, j), -adv * fw);
            if (j < m - 1) trip.emplace_back(r, id(i, j + 1), adv * fn);
            if (j > 0) trip.emplace_back(r, id(i, j - 1), -adv * fs);
            trip.emplace_back(r, r, diag);
            rhs[r] = -pe * (fe + fw) / (2.0 * h);
        }
    Eigen::SparseMatrix<double> M(N, N);
    M.setFromTriplets(trip.begin(), trip.end());
    M.makeCompressed();
    Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
    lu.compute(M);
    if (lu.info() != Eigen::Success) throw SolverDiverged("cell problem factorisation failed");
    const Eigen::VectorXd chi = lu.solve(rhs);
    if (lu.info() != Eigen::Success || !chi.allFinite())
        throw SolverDiverged("cell problem solve failed");
    out.residual = (M * chi - rhs).norm() / std::max(rhs.norm(), 1e-300);

    // kappa <|e1 + grad chi|^2> over the quarter cell. x-face gradients use
    // trapezoid weights across the x-walls; y-wall gradients vanish.
    double s = 0.0;
    for (int j = 0; j < m; ++j) {
        for (int i = 0; i <= m; ++i) {
            double g;
            if (i == 0) g = 2.0 * chi[id(0, j)] / h;
            else if (i == m) g = -2.0 * chi[id(m - 1, j)] / h;
            else g = (chi[id(i, j)] - chi[id(i - 1, j)]) / h;
            const double w = (i == 0 || i == m) ? 0.5 : 1.0;
            s += w * (1.0 + g) * (1.0 + g);
        }
    }
    for (int i = 0; i < m; ++i)
        for (int j = 1; j < m; ++j) {
            const double g = (chi[id(i, j)] - chi[id(i, j - 1)]) / h;
            s += g * g;
        }
    out.d11 = params.kappa * s / (static_cast<double>(m) * m);
    out.d22 = out.d11;
    out.d12 = out.d21 = 0.0;
    return out;
}

} // namespace cellmix
