#include "dln/model.hpp"

#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "dln/errors.hpp"
#include "dln/rng.hpp"

namespace dln {

void Dataset::validate() const {
  if (X.rows() == 0 || X.cols() == 0) throw ConfigError("dataset: X must be non-empty");
  if (y.size() != X.rows()) {
    throw ConfigError("dataset: y has " + std::to_string(y.size()) + " entries, X has " +
                      std::to_string(X.rows()) + " rows");
  }
  if (beta_l0 && beta_l0->size() != X.cols()) throw ConfigError("dataset: beta_l0 length differs from d");
}

WeightState WeightState::from_alpha(const Vector& alpha, int depth) {
  WeightState s{alpha, alpha, depth};
  s.validate();
  return s;
}

Vector int_pow(const Vector& v, int p) {
  if (p < 0) throw ConfigError("int_pow: negative exponent");
  if (p == 0) return Vector::Ones(v.size());
  Vector out = v;
  for (int k = 1; k < p; ++k) out = out.cwiseProduct(v);
  return out;
}

Vector WeightState::beta() const { return int_pow(w_plus, depth) - int_pow(w_minus, depth); }

void WeightState::validate() const {
  if (depth < 2) throw ConfigError("weight state: depth must be >= 2");
  if (w_plus.size() != w_minus.size()) throw ConfigError("weight state: w_plus and w_minus differ in length");
  if (depth >= 3) {
    if ((w_plus.array() <= 0.0).any() || (w_minus.array() <= 0.0).any()) {
      throw ConfigError("weight state: depth >= 3 requires strictly positive weights");
    }
  }
}

Dataset generate_sparse_regression(std::size_t n, std::size_t d, std::size_t s, std::uint64_t seed) {
  if (n < 1 || d < 1) throw ConfigError("generate: n and d must be >= 1");
  if (s < 1 || s > d) throw ConfigError("generate: need 1 <= s <= d");

  CounterRng features(seed, "data.features");
  CounterRng support(seed, "data.support");
  CounterRng values(seed, "data.values");

  Dataset data;
  data.X.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < data.X.rows(); ++i) {
    for (Eigen::Index j = 0; j < data.X.cols(); ++j) data.X(i, j) = features.normal_box_muller();
  }

  // Partial Fisher-Yates: the first s slots are a uniform s-subset.
  std::vector<std::size_t> idx(d);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t k = 0; k < s; ++k) {
    const std::size_t pick = k + static_cast<std::size_t>(support.below(d - k));
    std::swap(idx[k], idx[pick]);
  }
  Vector beta = Vector::Zero(static_cast<Eigen::Index>(d));
  for (std::size_t k = 0; k < s; ++k) {
    double v = values.normal_box_muller();
    // Exactly s nonzeros even in the measure-zero event of a zero draw.
    while (v == 0.0) v = values.normal_box_muller();
    beta(static_cast<Eigen::Index>(idx[k])) = v;
  }
  data.y = data.X * beta;
  data.beta_l0 = std::move(beta);
  return data;
}

namespace {

void check_beta(const Vector& beta, const Dataset& data) {
  if (static_cast<std::size_t>(beta.size()) != data.d()) {
    throw ConfigError("beta has length " + std::to_string(beta.size()) + ", expected " + std::to_string(data.d()));
  }
}

}  // namespace

double loss(const Vector& beta, const Dataset& data) {
  check_beta(beta, data);
  return (data.X * beta - data.y).squaredNorm() / (4.0 * static_cast<double>(data.n()));
}

double per_sample_loss(const Vector& beta, const Dataset& data, std::size_t i) {
  check_beta(beta, data);
  if (i >= data.n()) throw ConfigError("per_sample_loss: index out of range");
  const double r = data.X.row(static_cast<Eigen::Index>(i)).dot(beta) - data.y(static_cast<Eigen::Index>(i));
  return 0.25 * r * r;
}

Vector grad_beta_loss(const Vector& beta, const Dataset& data) {
  check_beta(beta, data);
  return data.X.transpose() * (data.X * beta - data.y) / (2.0 * static_cast<double>(data.n()));
}

std::pair<Vector, Vector> grad_w_loss(const WeightState& state, const Dataset& data) {
  state.validate();
  const Vector beta = state.beta();
  check_beta(beta, data);
  const Vector h = data.X.transpose() * (data.X * beta - data.y) / static_cast<double>(data.n());
  const double half_p = 0.5 * state.depth;
  const Vector gp = half_p * h.cwiseProduct(int_pow(state.w_plus, state.depth - 1));
  const Vector gm = -half_p * h.cwiseProduct(int_pow(state.w_minus, state.depth - 1));
  return {gp, gm};
}

double validation_loss(const Vector& beta, const Dataset& data) {
  check_beta(beta, data);
  if (!data.beta_l0) throw DiagnosticError("validation_loss: dataset has no planted model");
  return (beta - *data.beta_l0).squaredNorm();
}

}  // namespace dln
