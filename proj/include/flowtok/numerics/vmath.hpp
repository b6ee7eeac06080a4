// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>

// Array forms of the transcendental functions used by the elementwise ops.
// They live in their own translation unit so the compiler can dispatch to
// vectorised libm variants; results are deterministic for a given build.
namespace flowtok::num::vmath {

void exp(const double* x, double* y, std::size_t n);
void tanh(const double* x, double* y, std::size_t n);
void erf(const double* x, double* y, std::size_t n);

}  // namespace flowtok::num::vmath
