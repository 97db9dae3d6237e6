#pragma once

#include <cstddef>

namespace dln::simd::detail {

double dot_scalar(const double* a, const double* b, std::size_t len);
void axpy_scalar(double alpha, const double* x, double* y, std::size_t len);
void pair_update_scalar(double* wp, double* wm, const double* a, double* beta, std::size_t len);

#if defined(DLN_HAVE_AVX2_TU)
double dot_avx2(const double* a, const double* b, std::size_t len);
void axpy_avx2(double alpha, const double* x, double* y, std::size_t len);
void pair_update_avx2(double* wp, double* wm, const double* a, double* beta, std::size_t len);
#endif

#if defined(DLN_HAVE_NEON_TU)
double dot_neon(const double* a, const double* b, std::size_t len);
void axpy_neon(double alpha, const double* x, double* y, std::size_t len);
void pair_update_neon(double* wp, double* wm, const double* a, double* beta, std::size_t len);
#endif

}  // namespace dln::simd::detail
