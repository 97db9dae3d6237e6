#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <vector>

#include "dln/rng.hpp"
#include "dln/simd/kernels.hpp"

namespace {

using dln::simd::Isa;

std::vector<double> random_values(std::size_t len, std::uint64_t seed, double lo = -2.0, double hi = 2.0) {
  dln::CounterRng r(seed, "simd");
  std::vector<double> v(len);
  for (auto& x : v) x = lo + (hi - lo) * r.uniform();
  return v;
}

std::vector<Isa> vector_isas() {
  std::vector<Isa> out;
  for (Isa isa : {Isa::avx2, Isa::neon}) {
    if (dln::simd::isa_available(isa)) out.push_back(isa);
  }
  return out;
}

TEST(Simd, ScalarAlwaysAvailable) {
  EXPECT_TRUE(dln::simd::isa_available(Isa::scalar));
  EXPECT_EQ(dln::simd::kernels_for(Isa::scalar).isa, Isa::scalar);
  EXPECT_EQ(dln::simd::isa_name(Isa::scalar), "scalar");
}

TEST(Simd, UnavailableIsaThrows) {
  for (Isa isa : {Isa::avx2, Isa::neon}) {
    if (!dln::simd::isa_available(isa)) EXPECT_THROW(dln::simd::kernels_for(isa), std::invalid_argument);
  }
}

TEST(Simd, DispatchHonoursEnvironment) {
  const char* env = std::getenv("DLN_SIMD");
  if (env != nullptr && std::string(env) == "scalar") EXPECT_EQ(dln::simd::kernels().isa, Isa::scalar);
  else EXPECT_TRUE(dln::simd::isa_available(dln::simd::kernels().isa));
}

class KernelEquivalence : public ::testing::TestWithParam<std::size_t> {};

TEST_P(KernelEquivalence, DotAxpyPairUpdate) {
  const std::size_t len = GetParam();
  const auto& ref = dln::simd::kernels_for(Isa::scalar);
  for (Isa isa : vector_isas()) {
    const auto& k = dln::simd::kernels_for(isa);
    const auto a = random_values(len, 1), b = random_values(len, 2);

    double abs_sum = 0.0;
    for (std::size_t j = 0; j < len; ++j) abs_sum += std::abs(a[j] * b[j]);
    EXPECT_NEAR(k.dot(a.data(), b.data(), len), ref.dot(a.data(), b.data(), len), 1e-14 * (abs_sum + 1.0));

    auto y1 = random_values(len, 3), y2 = y1;
    ref.axpy(0.37, a.data(), y1.data(), len);
    k.axpy(0.37, a.data(), y2.data(), len);
    for (std::size_t j = 0; j < len; ++j) EXPECT_NEAR(y1[j], y2[j], 1e-15 * (std::abs(y1[j]) + 1.0));

    auto wp1 = random_values(len, 4, 0.1, 1.0), wm1 = random_values(len, 5, 0.1, 1.0);
    auto wp2 = wp1, wm2 = wm1;
    const auto step = random_values(len, 6, -0.05, 0.05);
    std::vector<double> beta1(len), beta2(len);
    ref.pair_update(wp1.data(), wm1.data(), step.data(), beta1.data(), len);
    k.pair_update(wp2.data(), wm2.data(), step.data(), beta2.data(), len);
    for (std::size_t j = 0; j < len; ++j) {
      EXPECT_NEAR(wp1[j], wp2[j], 1e-15);
      EXPECT_NEAR(wm1[j], wm2[j], 1e-15);
      EXPECT_NEAR(beta1[j], beta2[j], 1e-15);
      EXPECT_NEAR(beta1[j], wp1[j] * wp1[j] - wm1[j] * wm1[j], 1e-15);
    }
  }
}

// Lengths cover empty input, pure tails and several full vector blocks.
INSTANTIATE_TEST_SUITE_P(Lengths, KernelEquivalence, ::testing::Values(0, 1, 3, 4, 5, 7, 8, 17, 100, 1001));

TEST(Simd, MatrixHelpersAgreeAcrossIsas) {
  const std::size_t n = 13, d = 37;
  const auto rows = random_values(n * d, 7);
  const auto v = random_values(d, 8);
  const auto off = random_values(n, 9);
  const auto coef = [&] {
    auto c = random_values(n, 10);
    c[3] = 0.0;
    return c;
  }();
  const auto& ref = dln::simd::kernels_for(Isa::scalar);
  std::vector<double> r_ref(n), t_ref(d);
  dln::simd::residual(rows, n, d, v, off, r_ref, ref);
  dln::simd::transpose_apply(rows, n, d, coef, t_ref, ref);
  for (std::size_t i = 0; i < n; ++i) {
    double s = -off[i];
    for (std::size_t j = 0; j < d; ++j) s += rows[i * d + j] * v[j];
    EXPECT_NEAR(r_ref[i], s, 1e-13);
  }
  for (std::size_t j = 0; j < d; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += coef[i] * rows[i * d + j];
    EXPECT_NEAR(t_ref[j], s, 1e-13);
  }
  for (Isa isa : vector_isas()) {
    const auto& k = dln::simd::kernels_for(isa);
    std::vector<double> r(n), t(d);
    dln::simd::residual(rows, n, d, v, off, r, k);
    dln::simd::transpose_apply(rows, n, d, coef, t, k);
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(r[i], r_ref[i], 1e-13);
    for (std::size_t j = 0; j < d; ++j) EXPECT_NEAR(t[j], t_ref[j], 1e-13);
  }
  std::vector<double> r_no_offset(n);
  dln::simd::residual(rows, n, d, v, {}, r_no_offset, ref);
  for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(r_no_offset[i], r_ref[i] + off[i], 1e-13);
}

}  // namespace
