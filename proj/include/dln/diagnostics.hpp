#pragma once

// Quantities predicted or bounded by the theory, evaluated on trajectories.
//
// Notation: H~ = X^T X / n (only its diagonal and top eigenvalue are used),
// beta* = min-l1 interpolator, alpha_t = alpha * exp(-2 gamma H~_ii int L),
// xi_t = sqrt(beta_t^2 + 4 alpha_t^4).

#include <optional>
#include <utility>
#include <vector>

#include "dln/bias.hpp"
#include "dln/dynamics.hpp"
#include "dln/model.hpp"

namespace dln {

// Largest eigenvalue of X^T X / n (computed on the n x n Gram matrix).
double lambda_max_gram(const Matrix& X);
Vector h_tilde_diag(const Matrix& X);

struct TheoryContext {
  Dataset data;
  Vector H_tilde_diag;
  double lambda_max = 0.0;
  Vector beta_l1;
  EntropyParams alpha;
  double p_fail = 0.04;
  double a = 0.0;
  double b = 0.0;

  // beta_l1 is computed with the simplex when not supplied.
  static TheoryContext build(const Dataset& data, const EntropyParams& alpha, double p_fail = 0.04,
                             std::optional<Vector> beta_l1 = std::nullopt);

  double beta_l1_norm() const { return beta_l1.lpNorm<1>(); }
  double min_alpha_sq() const { return alpha.alpha.array().square().minCoeff(); }
};

double step_size_bound(const TheoryContext& ctx);
// The 1 / (lambda_max ||beta*||_1) scale without the logarithmic factor.
double heuristic_step_size(const TheoryContext& ctx);

EntropyParams alpha_t(const Vector& alpha, double gamma, const Vector& H_tilde_diag, double loss_integral);
// alpha * exp(-2 gamma diag(X~^T diag(int L_i) X~)), X~ = X / sqrt(n).
EntropyParams alpha_eff_general(const Vector& alpha, double gamma, const Matrix& X, const Vector& per_sample_integral);
std::pair<Vector, Vector> depth_p_alpha_eff(const Vector& alpha, double gamma, int p, const Vector& H_tilde_diag,
                                            const Vector& aux_plus, const Vector& aux_minus);

Vector xi_of(const Vector& beta, const Vector& alpha_t);

double lyapunov_V(const Vector& beta_t, const EntropyParams& alpha_t, const TheoryContext& ctx, double gamma,
                  double loss_integral);
double lyapunov_V_lower_bound(const TheoryContext& ctx);
double lyapunov_W(const Vector& beta_t, const EntropyParams& alpha_t, const Vector& beta_target,
                  const EntropyParams& alpha_inf);
double weight_U(const Vector& beta_t, const Vector& xi_t, const TheoryContext& ctx, double gamma);
double boundedness_bound(const TheoryContext& ctx);

struct MartingaleReport {
  std::vector<double> time;
  std::vector<double> S;
  std::vector<double> bound;
  bool violated = false;
  long first_violation_step = -1;
};

// Rebuilds S from the recorded eta increments:
//   dS = <(d eta + r dt / sqrt(n)) / 2, r / sqrt(n)> = sqrt(gamma L / n) <dB, X (beta - beta*)>.
// Needs a flow trajectory recorded at every step; otherwise DiagnosticError.
MartingaleReport martingale_S_and_eventA(const Trajectory& traj, const TheoryContext& ctx, double gamma);
// Pointwise event-A bound for a given b.
double event_A_bound(double a, double b, double gamma, double lambda_max, double weighted_loss_integral);

// ||P_perp grad phi_alpha(beta)|| / max(||grad phi_alpha(beta)||, 1e-300)
double kkt_residual(const Vector& beta, const Dataset& data, const EntropyParams& params);
double kkt_residual(const Vector& beta, const RowSpaceProjector& proj, const EntropyParams& params);
double feasibility_residual(const Vector& beta, const Dataset& data);

struct LossIntegralBounds {
  double lower = 0.0;              // (W0/4) / (1 + gamma M / W0)
  double lower_small_alpha = 0.0;  // (1/8) ||beta*||_1 ln(||beta*||_1 / alpha^2)
  double upper = 0.0;              // -V_lower + 2a
  double W0_alpha = 0.0;           // phi_alpha(argmin) - phi_alpha(0)
  double M = 0.0;
};

// Requires a constant alpha; throws DiagnosticError otherwise.
LossIntegralBounds loss_integral_bounds(const TheoryContext& ctx, double gamma);

struct AlphaRatioBounds {
  Vector exp_bound;           // exp(-H~_ii / (1600 ln(4/p) lambda_max))
  std::optional<double> zeta;  // fitted power-law exponent, when supplied
  bool gamma_at_max = false;
};

AlphaRatioBounds alpha_ratio_bounds(const TheoryContext& ctx, bool gamma_at_max);
// Least-squares slope through the origin of log(alpha_inf/alpha) against
// log(alpha^2 / ||beta*||_1). Reported, never asserted.
double fit_power_law_exponent(const std::vector<double>& alphas, const std::vector<double>& ratios,
                              double beta_l1_norm);

// Hypothesis x <= A + B ln x of the Lambert-type lemma; DiagnosticError unless
// A, B > 0 and A/B + ln B >= 2.
bool lambert_bound_check(double A, double B, double x);
double lambert_bound(double A, double B);  // (5/2)(A + B ln B)

// Per-coordinate 1/4 max{0, |beta| ln(|beta| / (2 alpha^2))}, the published
// lower bound on phi_alpha(beta) - phi_alpha(0). It does not hold once
// |beta| / (2 alpha^2) exceeds about 2.990: there the gap grows like
// |beta| (ln(|beta| / alpha^2) - 1) / 4 while this grows like |beta| ln(|beta| / alpha^2) / 4.
Vector entropy_gap_lower_bound(const Vector& beta, const EntropyParams& params);
// 1/4 max{0, |beta| ln(|beta| / (2 e alpha^2))}, which holds for every beta
// because asinh(x) >= ln(2x) >= ln(x) for x > 0.
Vector entropy_gap_valid_lower_bound(const Vector& beta, const EntropyParams& params);

// Online checks along a depth-2 flow, driven by the exact Brownian increments.
class PathMonitor : public StepObserver {
 public:
  PathMonitor(const TheoryContext& ctx, double gamma, bool keep_series = false);

  void on_step(const StepView& view) override;
  void on_finish(const StepView& view) override;

  bool event_A_violated() const { return event_a_violated_; }
  long first_violation_step() const { return first_violation_; }
  double U_min() const { return u_min_; }
  double xi_l1_max() const { return xi_l1_max_; }
  double V_min() const { return v_min_; }
  double V_lower() const { return v_lower_; }
  long V_decrease_violations() const { return v_decrease_violations_; }
  long steps_seen() const { return steps_; }
  double S_final() const { return S_; }
  const MartingaleReport& series() const { return series_; }

 private:
  void visit(const StepView& view);

  const TheoryContext& ctx_;
  double gamma_;
  bool keep_series_;
  double v0_;
  double v_lower_;
  double beta_l1_sq_;
  double S_ = 0.0;
  double weighted_int_ = 0.0;
  double ul_int_ = 0.0;
  double prev_f_ = 0.0;
  double prev_ul_ = 0.0;
  double prev_dt_ = 0.0;
  bool first_ = true;
  bool event_a_violated_ = false;
  long first_violation_ = -1;
  double u_min_ = 1.0;
  double xi_l1_max_ = 0.0;
  double v_min_ = 0.0;
  long v_decrease_violations_ = 0;
  long steps_ = 0;
  MartingaleReport series_;
  Vector beta_buf_;
};

}  // namespace dln
