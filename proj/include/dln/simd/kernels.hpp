#pragma once

// Data-parallel inner loops shared by every dynamics driver.
//
// Each kernel exists as a scalar reference and as ISA-specific variants
// (AVX2+FMA on x86-64, NEON on AArch64). The active table is chosen once at
// first use from the host CPU; `DLN_SIMD=scalar` in the environment forces
// the reference path. Variants are not bit-identical to the reference
// (different summation order, fused multiply-add), only equivalent to
// rounding; a given binary on a given host is deterministic.

#include <cstddef>
#include <span>
#include <string_view>

namespace dln::simd {

enum class Isa { scalar, avx2, neon };

std::string_view isa_name(Isa isa);

struct KernelTable {
  Isa isa;
  // sum_j a[j] * b[j]
  double (*dot)(const double* a, const double* b, std::size_t len);
  // y[j] += alpha * x[j]
  void (*axpy)(double alpha, const double* x, double* y, std::size_t len);
  // Depth-2 multiplicative pair update:
  //   wp[j] += wp[j] * a[j];  wm[j] -= wm[j] * a[j];  beta[j] = wp[j]^2 - wm[j]^2
  void (*pair_update)(double* wp, double* wm, const double* a, double* beta, std::size_t len);
};

bool isa_available(Isa isa);

// Throws std::invalid_argument when `isa` is not available on this host.
const KernelTable& kernels_for(Isa isa);

// The dispatched table (best available ISA unless overridden).
const KernelTable& kernels();

// Row-major matrix view helpers built on the active table.

// out[i] = <row_i, v> - offset[i]  (offset may be empty)
void residual(std::span<const double> rows, std::size_t n, std::size_t d,
              std::span<const double> v, std::span<const double> offset, std::span<double> out,
              const KernelTable& k = kernels());

// out = sum_i coef[i] * row_i; rows whose coefficient is exactly zero are skipped.
void transpose_apply(std::span<const double> rows, std::size_t n, std::size_t d,
                     std::span<const double> coef, std::span<double> out,
                     const KernelTable& k = kernels());

}  // namespace dln::simd
