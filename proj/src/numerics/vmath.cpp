// SPDX-License-Identifier: Apache-2.0
// Compiled with fast-math so the loops below vectorise through libmvec. Keep
// this file free of any NaN/Inf logic: finite-math is assumed here.
#include "flowtok/numerics/vmath.hpp"

#include <cmath>

namespace flowtok::num::vmath {

void exp(const double* x, double* y, std::size_t n) {
#pragma omp simd
    for (std::size_t i = 0; i < n; ++i) y[i] = std::exp(x[i]);
}

void tanh(const double* x, double* y, std::size_t n) {
#pragma omp simd
    for (std::size_t i = 0; i < n; ++i) y[i] = std::tanh(x[i]);
}

void erf(const double* x, double* y, std::size_t n) {
#pragma omp simd
    for (std::size_t i = 0; i < n; ++i) y[i] = std::erf(x[i]);
}

}  // namespace flowtok::num::vmath
