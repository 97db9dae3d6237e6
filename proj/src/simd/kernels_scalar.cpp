#include "kernels_impl.hpp"

namespace dln::simd::detail {

double dot_scalar(const double* a, const double* b, std::size_t len) {
  double acc = 0.0;
  for (std::size_t j = 0; j < len; ++j) acc += a[j] * b[j];
  return acc;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t len) {
  for (std::size_t j = 0; j < len; ++j) y[j] += alpha * x[j];
}

void pair_update_scalar(double* wp, double* wm, const double* a, double* beta, std::size_t len) {
  for (std::size_t j = 0; j < len; ++j) {
    const double p = wp[j] + wp[j] * a[j];
    const double m = wm[j] - wm[j] * a[j];
    wp[j] = p;
    wm[j] = m;
    beta[j] = p * p - m * m;
  }
}

}  // namespace dln::simd::detail
