#pragma once

// Hyperbolic entropy
//   phi_alpha(beta) = 1/4 sum_i [beta_i asinh(beta_i / (2 alpha_i^2)) - sqrt(beta_i^2 + 4 alpha_i^4)],
// its minimizer over {X beta = y}, the l1/l2 reference interpolators and the
// depth-p link function h.

#include <optional>
#include <string>
#include <string_view>

#include "dln/model.hpp"

namespace dln {

struct EntropyParams {
  Vector alpha;

  static EntropyParams constant(double alpha, std::size_t d);
  // Throws ConfigError unless all entries are positive and finite.
  void validate() const;
};

// asinh with a logarithmic form for |x| > 1e8.
double stable_asinh(double x);

double hyperbolic_entropy(const Vector& beta, const EntropyParams& params);
Vector grad_hyperbolic_entropy(const Vector& beta, const EntropyParams& params);
// phi(beta) - phi(ref) - <grad phi(ref), beta - ref>, clamped at zero per coordinate.
double bregman_divergence(const Vector& beta, const Vector& ref_beta, const EntropyParams& params);

// Orthogonal projector onto the complement of the row space of X, from an SVD
// with singular values <= 1e-10 sigma_max treated as zero.
class RowSpaceProjector {
 public:
  explicit RowSpaceProjector(const Matrix& X);
  Vector complement(const Vector& g) const;  // (I - P_row) g
  std::size_t rank() const { return static_cast<std::size_t>(basis_.cols()); }

 private:
  Eigen::MatrixXd basis_;  // d x rank, orthonormal
};

enum class BiasPath { newton, mirror_descent };
std::string_view to_string(BiasPath p);

struct BiasSolverOptions {
  int max_newton_iter = 500;
  int max_mirror_iter = 2'000'000;
  double feas_tol = 1e-10;        // ||X beta - y|| / max(||y||, 1e-300)
  std::optional<Vector> mu0;      // dual start, length n
  bool allow_fallback = true;
  bool force_mirror = false;
};

struct BiasSolution {
  Vector beta;
  Vector mu;  // beta = 2 alpha^2 sinh(X^T mu)
  BiasPath path = BiasPath::newton;
  int iterations = 0;
  double feasibility = 0.0;
  std::string newton_failure;  // empty unless the fallback ran
};

// argmin phi_alpha(beta) s.t. X beta = y, by damped Newton on the dual
//   D(mu) = sum_j 2 alpha_j^2 cosh((X^T mu)_j) - <mu, y>,
// with mirror descent in theta = asinh(beta / (2 alpha^2)) as fallback.
// Throws SolverError when both fail.
BiasSolution solve_implicit_bias_detailed(const Dataset& data, const EntropyParams& params,
                                          const BiasSolverOptions& options = {});
Vector solve_implicit_bias(const Dataset& data, const EntropyParams& params);

struct L1Solution {
  Vector beta;
  double objective = 0.0;
  double dual_objective = 0.0;
  double duality_gap = 0.0;
  double dual_infeasibility = 0.0;  // max(0, ||X^T lambda||_inf - 1)
  int pivots = 0;
};

// Basis pursuit min ||beta||_1 s.t. X beta = y by a dense-tableau two-phase
// simplex with Bland's rule. Throws SolverError when infeasible.
L1Solution min_l1_interpolator_detailed(const Dataset& data);
Vector min_l1_interpolator(const Dataset& data);

// X^T (X X^T)^{-1} y; throws SolverError when X lacks full row rank.
Vector min_l2_interpolator(const Dataset& data);

// Depth-p link
//   h(z) = (alpha_+^{2-p} - z)^{-p/(p-2)} - (alpha_-^{2-p} + z)^{-p/(p-2)},
// strictly increasing from -inf to +inf on (-alpha_-^{2-p}, alpha_+^{2-p}).
struct DepthPPotential {
  Vector alpha_plus;
  Vector alpha_minus;
  int depth = 3;

  DepthPPotential(Vector alpha_plus, Vector alpha_minus, int depth);
};

Vector depth_p_h(const Vector& z, const DepthPPotential& pot);
Vector depth_p_h_inverse(const Vector& v, const DepthPPotential& pot);
// sum_j int_0^{beta_j} h_j^{-1}(s) ds by adaptive Gauss-Kronrod quadrature.
double depth_p_potential(const Vector& beta, const DepthPPotential& pot);
// ||(I - P_row) h^{-1}(beta)|| / ||h^{-1}(beta)||
double depth_p_kkt_residual(const Vector& beta, const Dataset& data, const DepthPPotential& pot);

}  // namespace dln
