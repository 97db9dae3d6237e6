// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.
#include <immintrin.h>

#include "kernels_impl.hpp"

namespace dln::simd::detail {

namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

}  // namespace

double dot_avx2(const double* a, const double* b, std::size_t len) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t j = 0;
  for (; j + 8 <= len; j += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + j), _mm256_loadu_pd(b + j), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + j + 4), _mm256_loadu_pd(b + j + 4), acc1);
  }
  for (; j + 4 <= len; j += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + j), _mm256_loadu_pd(b + j), acc0);
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; j < len; ++j) acc += a[j] * b[j];
  return acc;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t len) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t j = 0;
  for (; j + 4 <= len; j += 4) {
    _mm256_storeu_pd(y + j, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + j), _mm256_loadu_pd(y + j)));
  }
  for (; j < len; ++j) y[j] += alpha * x[j];
}

void pair_update_avx2(double* wp, double* wm, const double* a, double* beta, std::size_t len) {
  std::size_t j = 0;
  for (; j + 4 <= len; j += 4) {
    const __m256d va = _mm256_loadu_pd(a + j);
    const __m256d vp = _mm256_loadu_pd(wp + j);
    const __m256d vm = _mm256_loadu_pd(wm + j);
    const __m256d np = _mm256_fmadd_pd(vp, va, vp);
    const __m256d nm = _mm256_fnmadd_pd(vm, va, vm);
    _mm256_storeu_pd(wp + j, np);
    _mm256_storeu_pd(wm + j, nm);
    _mm256_storeu_pd(beta + j, _mm256_fmsub_pd(np, np, _mm256_mul_pd(nm, nm)));
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
