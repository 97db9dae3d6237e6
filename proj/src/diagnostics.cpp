#include "dln/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "dln/errors.hpp"

namespace dln {

double lambda_max_gram(const Matrix& X) {
  if (X.size() == 0) throw ConfigError("lambda_max_gram: empty X");
  // X^T X / n and X X^T / n share their nonzero spectrum.
  const Eigen::MatrixXd G = X * X.transpose() / static_cast<double>(X.rows());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw SolverError("lambda_max_gram: eigensolver failed");
  return es.eigenvalues().maxCoeff();
}

Vector h_tilde_diag(const Matrix& X) {
  return X.colwise().squaredNorm().transpose() / static_cast<double>(X.rows());
}

TheoryContext TheoryContext::build(const Dataset& data, const EntropyParams& alpha, double p_fail,
                                   std::optional<Vector> beta_l1) {
  data.validate();
  alpha.validate();
  if (static_cast<std::size_t>(alpha.alpha.size()) != data.d()) throw ConfigError("alpha length differs from d");
  if (!(p_fail > 0.0 && p_fail <= 0.5)) throw ConfigError("p_fail must lie in (0, 1/2]");
  TheoryContext ctx;
  ctx.data = data;
  ctx.H_tilde_diag = h_tilde_diag(data.X);
  ctx.lambda_max = lambda_max_gram(data.X);
  ctx.beta_l1 = beta_l1 ? std::move(*beta_l1) : min_l1_interpolator(data);
  if (static_cast<std::size_t>(ctx.beta_l1.size()) != data.d()) throw ConfigError("beta_l1 length differs from d");
  ctx.alpha = alpha;
  ctx.p_fail = p_fail;
  const double l1 = ctx.beta_l1_norm();
  const double sparse_term = l1 > 0.0 ? l1 * std::log(std::numbers::sqrt2 * l1 / ctx.min_alpha_sq()) : 0.0;
  ctx.a = std::max(sparse_term, alpha.alpha.squaredNorm());
  ctx.b = 0.5 * std::log(4.0 / p_fail) / ctx.a;
  return ctx;
}

double step_size_bound(const TheoryContext& ctx) {
  return 1.0 / (400.0 * std::log(4.0 / ctx.p_fail) * ctx.lambda_max * ctx.a);
}

double heuristic_step_size(const TheoryContext& ctx) {
  const double l1 = ctx.beta_l1_norm();
  if (l1 == 0.0) throw DiagnosticError("heuristic step size undefined for beta* = 0");
  return 1.0 / (ctx.lambda_max * l1);
}

EntropyParams alpha_t(const Vector& alpha, double gamma, const Vector& H_tilde_diag, double loss_integral) {
  if (alpha.size() != H_tilde_diag.size()) throw ConfigError("alpha_t: length mismatch");
  if (!(loss_integral >= 0.0)) throw DiagnosticError("alpha_t: loss integral must be >= 0");
  return EntropyParams{(alpha.array() * (-2.0 * gamma * loss_integral * H_tilde_diag.array()).exp()).matrix()};
}

EntropyParams alpha_eff_general(const Vector& alpha, double gamma, const Matrix& X,
                                const Vector& per_sample_integral) {
  if (per_sample_integral.size() != X.rows() || alpha.size() != X.cols()) {
    throw ConfigError("alpha_eff_general: length mismatch");
  }
  const double n = static_cast<double>(X.rows());
  // diag(X~^T diag(I) X~)_j = (1/n) sum_i I_i X_ij^2
  const Vector weighted = (X.array().square().colwise() * per_sample_integral.array()).colwise().sum().transpose() / n;
  return EntropyParams{(alpha.array() * (-2.0 * gamma * weighted.array()).exp()).matrix()};
}

std::pair<Vector, Vector> depth_p_alpha_eff(const Vector& alpha, double gamma, int p, const Vector& H_tilde_diag,
                                            const Vector& aux_plus, const Vector& aux_minus) {
  if (p < 3) throw ConfigError("depth_p_alpha_eff: p must be >= 3");
  const auto d = alpha.size();
  if (H_tilde_diag.size() != d || aux_plus.size() != d || aux_minus.size() != d) {
    throw ConfigError("depth_p_alpha_eff: length mismatch");
  }
  if ((aux_plus.array() < 0.0).any() || (aux_minus.array() < 0.0).any()) {
    throw DiagnosticError("depth_p_alpha_eff: integrals must be >= 0");
  }
  const double pm2 = p - 2.0;
  const double k = 2.0 * gamma * pm2 * (p - 1.0);
  auto one = [&](const Vector& aux) {
    const Eigen::ArrayXd apow = alpha.array().pow(pm2);
    return Vector((alpha.array() * (1.0 + k * apow * H_tilde_diag.array() * aux.array()).pow(-1.0 / pm2)).matrix());
  };
  return {one(aux_plus), one(aux_minus)};
}

Vector xi_of(const Vector& beta, const Vector& alpha_t) {
  if (beta.size() != alpha_t.size()) throw ConfigError("xi_of: length mismatch");
  Vector xi(beta.size());
  for (Eigen::Index j = 0; j < beta.size(); ++j) xi(j) = std::hypot(beta(j), 2.0 * alpha_t(j) * alpha_t(j));
  return xi;
}

double lyapunov_V(const Vector& beta_t, const EntropyParams& alpha_t, const TheoryContext& ctx, double gamma,
                  double loss_integral) {
  return -hyperbolic_entropy(beta_t, alpha_t) + grad_hyperbolic_entropy(beta_t, alpha_t).dot(beta_t - ctx.beta_l1) +
         gamma * loss_integral * ctx.beta_l1.cwiseAbs().dot(ctx.H_tilde_diag);
}

double lyapunov_V_lower_bound(const TheoryContext& ctx) {
  return -(ctx.beta_l1_norm() / 4.0) * std::log(18.0 * std::numbers::sqrt2 * ctx.a / ctx.min_alpha_sq());
}

double lyapunov_W(const Vector& beta_t, const EntropyParams& alpha_t, const Vector& beta_target,
                  const EntropyParams& alpha_inf) {
  if (alpha_inf.alpha.size() != alpha_t.alpha.size()) throw ConfigError("lyapunov_W: length mismatch");
  if ((alpha_inf.alpha.array() > alpha_t.alpha.array()).any()) {
    throw DiagnosticError("lyapunov_W: requires alpha_inf <= alpha_t componentwise");
  }
  return hyperbolic_entropy(beta_target, alpha_inf) - hyperbolic_entropy(beta_t, alpha_t) +
         grad_hyperbolic_entropy(beta_t, alpha_t).dot(beta_t - beta_target);
}

double weight_U(const Vector& beta_t, const Vector& xi_t, const TheoryContext& ctx, double gamma) {
  const double l1 = beta_t.lpNorm<1>();
  const double s1 = ctx.beta_l1_norm();
  const double bracket = ctx.H_tilde_diag.dot(xi_t + ctx.beta_l1.cwiseAbs()) +
                         2.0 * ctx.b * ctx.lambda_max * (l1 * l1 + s1 * s1);
  return 1.0 - 0.5 * gamma * bracket;
}

double boundedness_bound(const TheoryContext& ctx) { return 18.0 * ctx.a; }

double event_A_bound(double a, double b, double gamma, double lambda_max, double weighted_loss_integral) {
  return a + 2.0 * b * gamma * lambda_max * weighted_loss_integral;
}

MartingaleReport martingale_S_and_eventA(const Trajectory& traj, const TheoryContext& ctx, double gamma) {
  const auto& recs = traj.records;
  const Dataset& data = ctx.data;
  if (recs.empty()) throw DiagnosticError("martingale: missing noise records (empty trajectory)");
  for (std::size_t k = 0; k < recs.size(); ++k) {
    if (static_cast<std::size_t>(recs[k].eta.size()) != data.n() ||
        recs[k].step != recs.front().step + static_cast<long>(k)) {
      throw DiagnosticError("martingale: missing noise records (need a flow trajectory recorded at every step)");
    }
  }
  const double sqrt_n = std::sqrt(static_cast<double>(data.n()));
  const double s1 = ctx.beta_l1_norm();
  MartingaleReport rep;
  double S = 0.0;
  double weighted = 0.0;
  auto f_of = [&](const Record& r) {
    const double l1 = r.beta.lpNorm<1>();
    return r.loss * (l1 * l1 + s1 * s1);
  };
  for (std::size_t k = 0; k < recs.size(); ++k) {
    if (k > 0) {
      const Record& prev = recs[k - 1];
      const Record& cur = recs[k];
      const double dt = cur.time - prev.time;
      const Vector r = data.X * prev.beta - data.y;
      const Vector dB_scaled = 0.5 * (cur.eta - prev.eta + r * (dt / sqrt_n));
      S += dB_scaled.dot(r) / sqrt_n;
      weighted += 0.5 * dt * (f_of(prev) + f_of(cur));
    }
    const double bound = event_A_bound(ctx.a, ctx.b, gamma, ctx.lambda_max, weighted);
    rep.time.push_back(recs[k].time);
    rep.S.push_back(S);
    rep.bound.push_back(bound);
    if (std::abs(S) > bound && !rep.violated) {
      rep.violated = true;
      rep.first_violation_step = recs[k].step;
    }
  }
  return rep;
}

double kkt_residual(const Vector& beta, const RowSpaceProjector& proj, const EntropyParams& params) {
  const Vector g = grad_hyperbolic_entropy(beta, params);
  return proj.complement(g).norm() / std::max(g.norm(), 1e-300);
}

double kkt_residual(const Vector& beta, const Dataset& data, const EntropyParams& params) {
  if (static_cast<std::size_t>(beta.size()) != data.d()) throw ConfigError("kkt_residual: length mismatch");
  return kkt_residual(beta, RowSpaceProjector(data.X), params);
}

double feasibility_residual(const Vector& beta, const Dataset& data) {
  const double yn = data.y.norm();
  const double rn = (data.X * beta - data.y).norm();
  return yn > 0.0 ? rn / yn : rn;
}

LossIntegralBounds loss_integral_bounds(const TheoryContext& ctx, double gamma) {
  const Vector& al = ctx.alpha.alpha;
  const double alpha = al(0);
  if ((al.array() != alpha).any()) throw DiagnosticError("loss_integral_bounds: requires a constant alpha");
  if (!(gamma >= 0.0)) throw ConfigError("loss_integral_bounds: gamma must be >= 0");
  const double a2 = alpha * alpha;
  const double l1 = ctx.beta_l1_norm();
  const auto d = static_cast<double>(ctx.data.d());
  LossIntegralBounds out;
  const Vector beta_alpha = solve_implicit_bias(ctx.data, ctx.alpha);
  out.W0_alpha = hyperbolic_entropy(beta_alpha, ctx.alpha) - hyperbolic_entropy(Vector::Zero(al.size()), ctx.alpha);
  const double lg = l1 > 0.0 ? std::log(std::numbers::sqrt2 * l1 / a2) : 0.0;
  out.M = 325.0 * ctx.lambda_max * std::log(4.0 / ctx.p_fail) * std::max(l1 * l1 * lg * lg, a2 * a2 * d * d);
  out.lower = out.W0_alpha > 0.0 ? (out.W0_alpha / 4.0) / (1.0 + gamma * out.M / out.W0_alpha) : 0.0;
  out.lower_small_alpha = l1 > 0.0 ? 0.125 * l1 * std::log(l1 / a2) : 0.0;
  out.upper = -lyapunov_V_lower_bound(ctx) + 2.0 * ctx.a;
  return out;
}

AlphaRatioBounds alpha_ratio_bounds(const TheoryContext& ctx, bool gamma_at_max) {
  AlphaRatioBounds out;
  out.gamma_at_max = gamma_at_max;
  out.exp_bound = (-ctx.H_tilde_diag.array() / (1600.0 * std::log(4.0 / ctx.p_fail) * ctx.lambda_max)).exp();
  return out;
}

double fit_power_law_exponent(const std::vector<double>& alphas, const std::vector<double>& ratios,
                              double beta_l1_norm) {
  if (alphas.size() != ratios.size() || alphas.empty()) throw DiagnosticError("power-law fit: need matched samples");
  if (!(beta_l1_norm > 0.0)) throw DiagnosticError("power-law fit: ||beta*||_1 must be positive");
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t k = 0; k < alphas.size(); ++k) {
    if (!(alphas[k] > 0.0) || !(ratios[k] > 0.0)) throw DiagnosticError("power-law fit: inputs must be positive");
    const double x = std::log(alphas[k] * alphas[k] / beta_l1_norm);
    const double y = std::log(ratios[k]);
    sxy += x * y;
    sxx += x * x;
  }
  if (sxx == 0.0) throw DiagnosticError("power-law fit: degenerate abscissae");
  return sxy / sxx;
}

bool lambert_bound_check(double A, double B, double x) {
  if (!(A > 0.0) || !(B > 0.0) || !(A / B + std::log(B) >= 2.0)) {
    throw DiagnosticError("Lambert lemma inapplicable: need A, B > 0 and A/B + ln B >= 2");
  }
  if (!(x > 0.0)) return false;
  return x <= A + B * std::log(x);
}

double lambert_bound(double A, double B) { return 2.5 * (A + B * std::log(B)); }

namespace {

Vector entropy_gap_bound(const Vector& beta, const EntropyParams& params, double shift) {
  params.validate();
  if (beta.size() != params.alpha.size()) throw ConfigError("entropy gap bound: length mismatch");
  Vector out(beta.size());
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    const double ab = std::abs(beta(j));
    const double a = params.alpha(j);
    out(j) = ab > 0.0 ? 0.25 * std::max(0.0, ab * (std::log(ab / (2.0 * a * a)) - shift)) : 0.0;
  }
  return out;
}

}  // namespace

Vector entropy_gap_lower_bound(const Vector& beta, const EntropyParams& params) {
  return entropy_gap_bound(beta, params, 0.0);
}

Vector entropy_gap_valid_lower_bound(const Vector& beta, const EntropyParams& params) {
  return entropy_gap_bound(beta, params, 1.0);
}

PathMonitor::PathMonitor(const TheoryContext& ctx, double gamma, bool keep_series)
    : ctx_(ctx),
      gamma_(gamma),
      keep_series_(keep_series),
      v0_(0.5 * ctx.alpha.alpha.squaredNorm()),
      v_lower_(lyapunov_V_lower_bound(ctx)),
      beta_l1_sq_(ctx.beta_l1_norm() * ctx.beta_l1_norm()) {}

void PathMonitor::visit(const StepView& view) {
  beta_buf_ = Eigen::Map<const Vector>(view.beta.data(), static_cast<Eigen::Index>(view.beta.size()));
  const EntropyParams at = alpha_t(ctx_.alpha.alpha, gamma_, ctx_.H_tilde_diag, view.loss_integral);
  const Vector xi = xi_of(beta_buf_, at.alpha);
  const double U = weight_U(beta_buf_, xi, ctx_, gamma_);
  const double V = lyapunov_V(beta_buf_, at, ctx_, gamma_, view.loss_integral);
  const double l1 = beta_buf_.lpNorm<1>();
  const double f = view.loss * (l1 * l1 + beta_l1_sq_);
  const double ul = U * view.loss;
  if (!first_) {
    weighted_int_ += 0.5 * prev_dt_ * (prev_f_ + f);
    ul_int_ += 0.5 * prev_dt_ * (prev_ul_ + ul);
  }
  const double bound = event_A_bound(ctx_.a, ctx_.b, gamma_, ctx_.lambda_max, weighted_int_);
  if (std::abs(S_) > bound && !event_a_violated_) {
    event_a_violated_ = true;
    first_violation_ = view.step;
  }
  u_min_ = first_ ? U : std::min(u_min_, U);
  xi_l1_max_ = std::max(xi_l1_max_, xi.sum());
  v_min_ = first_ ? V : std::min(v_min_, V);
  const double slack = 1e-9 * (std::abs(v0_) + ctx_.a);
  if (!event_a_violated_ && V > v0_ - 2.0 * ul_int_ + ctx_.a + slack) ++v_decrease_violations_;
  if (keep_series_) {
    series_.time.push_back(view.time);
    series_.S.push_back(S_);
    series_.bound.push_back(bound);
    series_.violated = event_a_violated_;
    series_.first_violation_step = first_violation_;
  }
  prev_f_ = f;
  prev_ul_ = ul;
  first_ = false;
}

void PathMonitor::on_step(const StepView& view) {
  visit(view);
  prev_dt_ = view.dt;
  ++steps_;
  if (view.noise.empty() || view.loss == 0.0) return;
  double dot = 0.0;
  for (std::size_t i = 0; i < view.noise.size(); ++i) dot += view.noise[i] * view.residual[i];
  S_ += std::sqrt(gamma_ * view.loss / static_cast<double>(view.residual.size())) * dot;
}

void PathMonitor::on_finish(const StepView& view) { visit(view); }

}  // namespace dln
