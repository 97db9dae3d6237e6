#pragma once

// Seeded random streams.
//
// Every consumer (dataset features, support draw, SGD indices, Brownian
// increments, label noise, ...) owns a stream derived from (seed, label):
//
//   key = mix64(seed ^ mix64(fnv1a64(label)))
//   u_k = mix64(key + k * 0x9E3779B97F4A7C15),  k = 1, 2, ...
//
// where mix64 is the SplitMix64 finalizer. A stream is therefore a pure
// function of (seed, label, k), so adding or removing a consumer never shifts
// another consumer's draws.
//
// Gaussians for dataset generation use Box-Muller on 53-bit uniforms, which
// any implementation can reproduce from the formulas above. The dynamics
// drivers draw many Gaussians per step and use Boost's ziggurat sampler on
// the same streams instead.

#include <cstdint>
#include <initializer_list>
#include <limits>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace dln {

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (const char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

// Counter-based generator; satisfies UniformRandomBitGenerator.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  constexpr CounterRng() noexcept = default;
  constexpr explicit CounterRng(std::uint64_t key) noexcept : key_(key) {}
  CounterRng(std::uint64_t seed, std::string_view label) noexcept
      : key_(mix64(seed ^ mix64(fnv1a64(label)))) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  constexpr result_type operator()() noexcept {
    ++counter_;
    return mix64(key_ + counter_ * 0x9E3779B97F4A7C15ULL);
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, bound), unbiased (bitmask rejection).
  std::uint64_t below(std::uint64_t bound);

  // Box-Muller standard normal; caches the second variate of each pair.
  double normal_box_muller();

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Fast standard normal sampler (ziggurat) over a CounterRng.
class GaussianSource {
 public:
  explicit GaussianSource(CounterRng rng);
  ~GaussianSource();
  GaussianSource(GaussianSource&&) noexcept;
  GaussianSource& operator=(GaussianSource&&) noexcept;
  GaussianSource(const GaussianSource&) = delete;
  GaussianSource& operator=(const GaussianSource&) = delete;

  double operator()();
  // Fill with i.i.d. N(0, scale^2).
  void fill(std::vector<double>& out, double scale);
  void fill(double* out, std::size_t len, double scale);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Independent named substreams for one seed. Duplicate labels are a ConfigError.
std::map<std::string, CounterRng> rng_streams(std::uint64_t seed, std::initializer_list<std::string_view> labels);
std::map<std::string, CounterRng> rng_streams(std::uint64_t seed, const std::vector<std::string>& labels);

}  // namespace dln
