#include "dln/rng.hpp"

#include <bit>
#include <cmath>
#include <numbers>

#include <boost/random/normal_distribution.hpp>

#include "dln/errors.hpp"

namespace dln {

std::uint64_t CounterRng::below(std::uint64_t bound) {
  if (bound == 0) throw ConfigError("CounterRng::below: bound must be positive");
  if (bound == 1) return 0;
  const std::uint64_t mask = std::numeric_limits<std::uint64_t>::max() >> std::countl_zero(bound - 1);
  for (;;) {
    const std::uint64_t x = (*this)() & mask;
    if (x < bound) return x;
  }
}

double CounterRng::normal_box_muller() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // u1 in (0, 1] keeps the logarithm finite.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(theta);
  has_spare_ = true;
  return radius * std::cos(theta);
}

struct GaussianSource::Impl {
  CounterRng rng;
  boost::random::normal_distribution<double> dist;
};

GaussianSource::GaussianSource(CounterRng rng) : impl_(std::make_unique<Impl>(Impl{rng, boost::random::normal_distribution<double>(0.0, 1.0)})) {}
GaussianSource::~GaussianSource() = default;
GaussianSource::GaussianSource(GaussianSource&&) noexcept = default;
GaussianSource& GaussianSource::operator=(GaussianSource&&) noexcept = default;

double GaussianSource::operator()() { return impl_->dist(impl_->rng); }

void GaussianSource::fill(std::vector<double>& out, double scale) { fill(out.data(), out.size(), scale); }

void GaussianSource::fill(double* out, std::size_t len, double scale) {
  for (std::size_t i = 0; i < len; ++i) out[i] = scale * impl_->dist(impl_->rng);
}

std::map<std::string, CounterRng> rng_streams(std::uint64_t seed, const std::vector<std::string>& labels) {
  std::map<std::string, CounterRng> out;
  for (const auto& label : labels) {
    if (!out.emplace(label, CounterRng(seed, label)).second) {
      throw ConfigError("rng_streams: duplicate label '" + label + "'");
    }
  }
  return out;
}

std::map<std::string, CounterRng> rng_streams(std::uint64_t seed, std::initializer_list<std::string_view> labels) {
  std::vector<std::string> v;
  v.reserve(labels.size());
  for (const auto l : labels) v.emplace_back(l);
  return rng_streams(seed, v);
}

}  // namespace dln
