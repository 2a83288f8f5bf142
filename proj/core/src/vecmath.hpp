#pragma once

#include <cstddef>

namespace vitca::detail {

// Elementwise y[i] = f(scale * x[i]). Built with fast-math so glibc's vector
// math library is used (a few ulp from the scalar results). Inputs are
// expected to be finite; callers multiply by x, so NaN still propagates.
void vec_erf(const double* x, double scale, double* y, std::size_t n);
void vec_exp(const double* x, double scale, double* y, std::size_t n);

}  // namespace vitca::detail
