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

#include "cellmix/fft.hpp"

#include <fftw3.h>

#include <mutex>

namespace cellmix {

namespace {
// FFTW's planner is not thread-safe; execution is.
std::mutex& planner_mutex()
{
    static std::mutex m;
    return m;
}
} // namespace

RealFft2D::RealFft2D(int n)
    : n_(n), scratch_real_(static_cast<std::size_t>(n) * n),
      scratch_spec_(static_cast<std::size_t>(n) * (n / 2 + 1))
{
    std::lock_guard<std::mutex> lock(planner_mutex());
    // ESTIMATE keeps the plan, and therefore the rounding, reproducible.
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    plan_fwd_ = fftw_plan_dft_r2c_2d(n, n, scratch_real_.data(),
                                     reinterpret_cast<fftw_complex*>(scratch_spec_.data()), flags);
    plan_inv_ = fftw_plan_dft_c2r_2d(n, n, reinterpret_cast<fftw_complex*>(scratch_spec_.data()),
                                     scratch_real_.data(), flags);
}

RealFft2D::~RealFft2D()
{
    std::lock_guard<std::mutex> lock(planner_mutex());
    fftw_destroy_plan(static_cast<fftw_plan>(plan_fwd_));
    fftw_destroy_plan(static_cast<fftw_plan>(plan_inv_));
}

void RealFft2D::forward(const double* in, cplx* out)
{
    fftw_execute_dft_r2c(static_cast<fftw_plan>(plan_fwd_), const_cast<double*>(in),
                         reinterpret_cast<fftw_complex*>(out));
}

void RealFft2D::inverse(cplx* in, double* out)
{
    fftw_execute_dft_c2r(static_cast<fftw_plan>(plan_inv_), reinterpret_cast<fftw_complex*>(in), out);
    const double scale = 1.0 / (static_cast<double>(n_) * n_);
    const std::size_t total = real_size();
    for (std::size_t i = 0; i < total; ++i) out[i] *= scale;
}

} // namespace cellmix
