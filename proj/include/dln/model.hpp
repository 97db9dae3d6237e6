#pragma once

// Regression problem, losses and the diagonal-network parametrization
// beta = w_+^p - w_-^p. All losses use the 1/(4n) normalization:
//   L(beta) = 1/(4n) * ||X beta - y||^2.

#include <cstdint>
#include <optional>
#include <utility>

#include <Eigen/Dense>

namespace dln {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

struct Dataset {
  Matrix X;                      // n x d, row i is x_i
  Vector y;                      // n
  std::optional<Vector> beta_l0;  // planted sparse model, when known

  std::size_t n() const { return static_cast<std::size_t>(X.rows()); }
  std::size_t d() const { return static_cast<std::size_t>(X.cols()); }

  // Throws ConfigError on inconsistent shapes.
  void validate() const;
};

struct WeightState {
  Vector w_plus;
  Vector w_minus;
  int depth = 2;

  // Both halves initialized at alpha, so beta starts at zero.
  static WeightState from_alpha(const Vector& alpha, int depth = 2);

  Vector beta() const;
  void validate() const;
};

// X ~ N(0,1) i.i.d., beta_l0 with exactly s nonzero N(0,1) entries at uniform
// positions, y = X beta_l0. Deterministic in `seed`.
Dataset generate_sparse_regression(std::size_t n, std::size_t d, std::size_t s, std::uint64_t seed);

double loss(const Vector& beta, const Dataset& data);
double per_sample_loss(const Vector& beta, const Dataset& data, std::size_t i);

// (1/(2n)) X^T (X beta - y)
Vector grad_beta_loss(const Vector& beta, const Dataset& data);

// Gradients of L(beta(w)) w.r.t. (w_+, w_-): +-(p/2) h * w_+-^{p-1}, h = (1/n) X^T (X beta - y).
std::pair<Vector, Vector> grad_w_loss(const WeightState& state, const Dataset& data);

// ||beta - beta_l0||^2; throws DiagnosticError when the planted model is absent.
double validation_loss(const Vector& beta, const Dataset& data);

// Componentwise integer power, computed by repeated multiplication so the
// result is deterministic and exact for p = 1.
Vector int_pow(const Vector& v, int p);

}  // namespace dln
