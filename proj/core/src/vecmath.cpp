#include "vecmath.hpp"

#include <cmath>

namespace vitca::detail {

void vec_erf(const double* x, double scale, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = std::erf(scale * x[i]);
}

void vec_exp(const double* x, double scale, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = std::exp(scale * x[i]);
}

}  // namespace vitca::detail
