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

#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace cellmix {

using cplx = std::complex<double>;

/// Real-to-complex 2-D transform on an n x n periodic grid (row-major,
/// index i*n + l with i along x1). The half spectrum has n*(n/2+1) entries,
/// index i*(n/2+1) + l. forward() is unnormalised; inverse() divides by n^2.
class RealFft2D {
public:
    explicit RealFft2D(int n);
    ~RealFft2D();
    RealFft2D(const RealFft2D&) = delete;
    RealFft2D& operator=(const RealFft2D&) = delete;

    int n() const { return n_; }
    int half_n() const { return n_ / 2 + 1; }
    std::size_t real_size() const { return static_cast<std::size_t>(n_) * n_; }
    std::size_t spec_size() const { return static_cast<std::size_t>(n_) * half_n(); }

    /// Signed integer wavenumber of row i (x1 direction).
    int wave1(int i) const { return i <= n_ / 2 ? i : i - n_; }
    /// Wavenumber of column l (x2 direction), 0..n/2.
    int wave2(int l) const { return l; }

    void forward(const double* in, cplx* out);
    /// Destroys `in`.
    void inverse(cplx* in, double* out);

private:
    int n_;
    void* plan_fwd_ = nullptr;
    void* plan_inv_ = nullptr;
    std::vector<double> scratch_real_;
    std::vector<cplx> scratch_spec_;
};

} // namespace cellmix
