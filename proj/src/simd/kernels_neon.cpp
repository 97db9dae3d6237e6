#include <arm_neon.h>

#include "kernels_impl.hpp"

namespace dln::simd::detail {

double dot_neon(const double* a, const double* b, std::size_t len) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t j = 0;
  for (; j + 4 <= len; j += 4) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(a + j), vld1q_f64(b + j));
    acc1 = vfmaq_f64(acc1, vld1q_f64(a + j + 2), vld1q_f64(b + j + 2));
  }
  double acc = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; j < len; ++j) acc += a[j] * b[j];
  return acc;
}

void axpy_neon(double alpha, const double* x, double* y, std::size_t len) {
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t j = 0;
  for (; j + 2 <= len; j += 2) vst1q_f64(y + j, vfmaq_f64(vld1q_f64(y + j), va, vld1q_f64(x + j)));
  for (; j < len; ++j) y[j] += alpha * x[j];
}

void pair_update_neon(double* wp, double* wm, const double* a, double* beta, std::size_t len) {
  std::size_t j = 0;
  for (; j + 2 <= len; j += 2) {
    const float64x2_t va = vld1q_f64(a + j);
    const float64x2_t vp = vld1q_f64(wp + j);
    const float64x2_t vm = vld1q_f64(wm + j);
    const float64x2_t np = vfmaq_f64(vp, vp, va);
    const float64x2_t nm = vfmsq_f64(vm, vm, va);
    vst1q_f64(wp + j, np);
    vst1q_f64(wm + j, nm);
    vst1q_f64(beta + j, vfmsq_f64(vmulq_f64(np, np), nm, nm));
  }
  for (; j < len; ++j) {
    const double p = wp[j] + wp[j] * a[j];
    const double m = wm[j] - wm[j] * a[j];
    wp[j] = p;
    wm[j] = m;
    beta[j] = p * p - m * m;
  }
}

}  // namespace dln::simd::detail
