#include "dln/simd/kernels.hpp"

#include <algorithm>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "kernels_impl.hpp"

namespace dln::simd {

namespace {

constexpr KernelTable kScalar{Isa::scalar, detail::dot_scalar, detail::axpy_scalar,
                              detail::pair_update_scalar};

#if defined(DLN_HAVE_AVX2_TU)
constexpr KernelTable kAvx2{Isa::avx2, detail::dot_avx2, detail::axpy_avx2, detail::pair_update_avx2};
#endif

#if defined(DLN_HAVE_NEON_TU)
constexpr KernelTable kNeon{Isa::neon, detail::dot_neon, detail::axpy_neon, detail::pair_update_neon};
#endif

const KernelTable& select_best() {
  if (const char* env = std::getenv("DLN_SIMD"); env != nullptr && std::string(env) == "scalar") {
    return kScalar;
  }
  if (isa_available(Isa::avx2)) return kernels_for(Isa::avx2);
  if (isa_available(Isa::neon)) return kernels_for(Isa::neon);
  return kScalar;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
    case Isa::neon: return "neon";
  }
  return "unknown";
}

bool isa_available(Isa isa) {
  switch (isa) {
    case Isa::scalar: return true;
    case Isa::avx2:
#if defined(DLN_HAVE_AVX2_TU)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Isa::neon:
#if defined(DLN_HAVE_NEON_TU)
      return true;
#else
      return false;
#endif
  }
  return false;
}

const KernelTable& kernels_for(Isa isa) {
  if (!isa_available(isa)) {
    throw std::invalid_argument("SIMD kernels not available on this host: " + std::string(isa_name(isa)));
  }
  switch (isa) {
#if defined(DLN_HAVE_AVX2_TU)
    case Isa::avx2: return kAvx2;
#endif
#if defined(DLN_HAVE_NEON_TU)
    case Isa::neon: return kNeon;
#endif
    default: return kScalar;
  }
}

const KernelTable& kernels() {
  static const KernelTable& table = select_best();
  return table;
}

void residual(std::span<const double> rows, std::size_t n, std::size_t d, std::span<const double> v,
              std::span<const double> offset, std::span<double> out, const KernelTable& k) {
  const double* base = rows.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double dot = k.dot(base + i * d, v.data(), d);
    out[i] = offset.empty() ? dot : dot - offset[i];
  }
}

void transpose_apply(std::span<const double> rows, std::size_t n, std::size_t d,
                     std::span<const double> coef, std::span<double> out, const KernelTable& k) {
  std::fill(out.begin(), out.end(), 0.0);
  const double* base = rows.data();
  for (std::size_t i = 0; i < n; ++i) {
    if (coef[i] == 0.0) continue;
    k.axpy(coef[i], base + i * d, out.data(), d);
  }
}

}  // namespace dln::simd
