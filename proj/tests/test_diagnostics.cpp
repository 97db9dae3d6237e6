#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "dln/bias.hpp"
#include "dln/diagnostics.hpp"
#include "dln/dynamics.hpp"
#include "dln/errors.hpp"
#include "dln/rng.hpp"
#include "oracle_values.hpp"

namespace {

using dln::Dataset;
using dln::EntropyParams;
using dln::Matrix;
using dln::TheoryContext;
using dln::Vector;

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index k = 0;
  for (double x : v) out(k++) = x;
  return out;
}

Vector random_vector(Eigen::Index d, std::uint64_t seed, double scale = 1.0) {
  dln::CounterRng r(seed, "test");
  Vector v(d);
  for (Eigen::Index j = 0; j < d; ++j) v(j) = scale * r.normal_box_muller();
  return v;
}

// X = [1 2], y = 5, alpha = 0.1: beta*_l1 = (0, 2.5), lambda_max = 5, H~ = (1, 4).
TheoryContext row_ctx() {
  Dataset data;
  data.X = Matrix(1, 2);
  data.X << 1.0, 2.0;
  data.y = vec({5.0});
  return TheoryContext::build(data, EntropyParams::constant(0.1, 2), 0.04);
}

// lambda_max = 1, ||beta*||_1 = 1, min alpha^2 = 0.01, ||alpha||^2 = 0.02.
TheoryContext unit_ctx() {
  Dataset data;
  data.X = std::sqrt(2.0) * Matrix::Identity(2, 2);
  data.y = vec({std::sqrt(2.0), 0.0});
  return TheoryContext::build(data, EntropyParams::constant(0.1, 2), 0.04);
}

TEST(Theory, ContextConstants) {
  const auto ctx = row_ctx();
  EXPECT_NEAR(ctx.beta_l1(0), 0.0, 1e-14);
  EXPECT_NEAR(ctx.beta_l1(1), 2.5, 1e-14);
  EXPECT_NEAR(ctx.lambda_max, oracle::kCtxLambda, 1e-13);
  EXPECT_NEAR(ctx.a, oracle::kCtxA, 1e-13);
  EXPECT_NEAR(ctx.b, oracle::kCtxB, 1e-15);
  EXPECT_NEAR(ctx.a * ctx.b, 0.5 * std::log(100.0), 1e-14);
  EXPECT_GE(ctx.lambda_max, ctx.H_tilde_diag.maxCoeff());
}

TEST(Theory, StepSizeBounds) {
  const auto u = unit_ctx();
  EXPECT_NEAR(dln::step_size_bound(u), oracle::kStepBoundSpec, 1e-18);
  EXPECT_NEAR(dln::step_size_bound(u), 1.096e-4, 1e-7);
  const auto ctx = row_ctx();
  EXPECT_NEAR(dln::step_size_bound(ctx), oracle::kCtxStepBound, 1e-19);
  EXPECT_NEAR(dln::heuristic_step_size(ctx), oracle::kCtxHeuristic, 1e-16);

  // alpha-dominated branch and lambda homogeneity
  Dataset data = u.data;
  auto big = TheoryContext::build(data, EntropyParams::constant(3.0, 2), 0.04);
  EXPECT_NEAR(big.a, 18.0, 1e-12);
  EXPECT_NEAR(dln::step_size_bound(big), 1.0 / (400.0 * std::log(100.0) * 18.0), 1e-16);
  data.X *= std::sqrt(2.0);
  data.y *= std::sqrt(2.0);
  const auto doubled = TheoryContext::build(data, EntropyParams::constant(0.1, 2), 0.04);
  EXPECT_NEAR(dln::step_size_bound(doubled), 0.5 * dln::step_size_bound(u), 1e-16);
}

TEST(Theory, BoundednessBound) {
  EXPECT_NEAR(dln::boundedness_bound(unit_ctx()), oracle::kBoundednessSpec, 1e-12);
  EXPECT_NEAR(dln::boundedness_bound(unit_ctx()), 89.14, 0.01);
  EXPECT_NEAR(dln::boundedness_bound(row_ctx()), oracle::kCtxBoundedness, 1e-11);
}

TEST(Theory, AlphaT) {
  EXPECT_NEAR(dln::alpha_t(vec({0.1}), 0.01, vec({1.0}), 10.0).alpha(0), oracle::kAlphaTSpec, 1e-16);
  EXPECT_TRUE(dln::alpha_t(vec({0.1, 0.2}), 0.01, vec({1.0, 2.0}), 0.0).alpha == vec({0.1, 0.2}));
  EXPECT_TRUE(dln::alpha_t(vec({0.1, 0.2}), 0.0, vec({1.0, 2.0}), 5.0).alpha == vec({0.1, 0.2}));
  const Vector a = dln::alpha_t(vec({0.1, 0.2}), 0.01, vec({1.0, 2.0}), 1.0).alpha;
  EXPECT_LT(a(0), 0.1);
  EXPECT_LT(a(1), 0.2);
}

TEST(Theory, GeneralAlphaEffReducesToAlphaT) {
  const Dataset data = dln::generate_sparse_regression(5, 9, 2, 4);
  const Vector alpha = Vector::Constant(9, 0.2);
  const Vector a = dln::alpha_eff_general(alpha, 0.03, data.X, Vector::Constant(5, 1.7)).alpha;
  const Vector b = dln::alpha_t(alpha, 0.03, dln::h_tilde_diag(data.X), 1.7).alpha;
  EXPECT_LE((a - b).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Theory, DepthPAlphaEff) {
  const auto [p, m] = dln::depth_p_alpha_eff(vec({1.0}), 0.1, 3, vec({1.0}), vec({0.5}), vec({0.0}));
  EXPECT_NEAR(p(0), oracle::kDepthPAlphaEffSpec, 1e-15);
  EXPECT_DOUBLE_EQ(m(0), 1.0);
  const auto [p4, m4] = dln::depth_p_alpha_eff(vec({0.5, 0.5}), 0.1, 4, vec({1.0, 2.0}), vec({0.2, 0.3}), vec({0.1, 0.0}));
  EXPECT_TRUE((p4.array() < 0.5).all());
  EXPECT_LT(m4(0), 0.5);
  EXPECT_DOUBLE_EQ(m4(1), 0.5);
}

TEST(Theory, Lyapunov) {
  const auto ctx = row_ctx();
  EXPECT_NEAR(dln::lyapunov_V(Vector::Zero(2), ctx.alpha, ctx, 1e-4, 0.0), 0.5 * ctx.alpha.alpha.squaredNorm(), 1e-16);
  EXPECT_NEAR(dln::lyapunov_V(ctx.beta_l1, ctx.alpha, ctx, 1e-4, 0.0), -dln::hyperbolic_entropy(ctx.beta_l1, ctx.alpha),
              1e-14);
  const EntropyParams at{vec({0.09, 0.08})};
  EXPECT_NEAR(dln::lyapunov_V(vec({0.5, 1.0}), at, ctx, 1e-4, 3.0), oracle::kCtxV, 1e-13);
  EXPECT_NEAR(dln::lyapunov_V_lower_bound(ctx), oracle::kCtxVLower, 1e-13);
  EXPECT_NEAR(dln::lyapunov_W(vec({0.5, 1.0}), at, ctx.beta_l1, EntropyParams{vec({0.05, 0.07})}), oracle::kCtxW, 1e-13);
  EXPECT_THROW(dln::lyapunov_W(vec({0.5, 1.0}), at, ctx.beta_l1, EntropyParams{vec({0.1, 0.07})}), dln::DiagnosticError);
}

TEST(Theory, LyapunovWDominatesBregman) {
  for (std::uint64_t s = 0; s < 50; ++s) {
    const Vector at = random_vector(4, s).cwiseAbs().array() + 0.05;
    const Vector ainf = at.array() * (random_vector(4, s + 100).cwiseAbs().array() * 0.3 + 0.1).min(1.0);
    const Vector bt = random_vector(4, s + 200), target = random_vector(4, s + 300);
    const double W = dln::lyapunov_W(bt, EntropyParams{at}, target, EntropyParams{ainf});
    const double D = dln::bregman_divergence(target, bt, EntropyParams{at});
    EXPECT_GE(W, D - 1e-12);
    EXPECT_GE(D, 0.0);
  }
  const Vector b = random_vector(3, 9);
  const EntropyParams a = EntropyParams::constant(0.3, 3);
  EXPECT_NEAR(dln::lyapunov_W(b, a, b, a), 0.0, 1e-14);
}

TEST(Theory, WeightU) {
  const auto ctx = row_ctx();
  const Vector beta = vec({0.5, 1.0});
  const Vector xi = dln::xi_of(beta, vec({0.09, 0.08}));
  EXPECT_NEAR(xi(0), std::sqrt(0.25 + 4 * std::pow(0.09, 4)), 1e-15);
  EXPECT_NEAR(dln::weight_U(beta, xi, ctx, 1e-4), oracle::kCtxU, 1e-15);
  EXPECT_DOUBLE_EQ(dln::weight_U(beta, xi, ctx, 0.0), 1.0);
}

TEST(Theory, LossIntegralBounds) {
  const auto ctx = row_ctx();
  const auto b = dln::loss_integral_bounds(ctx, 1e-4);
  EXPECT_NEAR(b.W0_alpha, oracle::kCtxW0, 1e-12);
  EXPECT_NEAR(b.M, oracle::kCtxM, 1e-8);
  EXPECT_NEAR(b.lower, oracle::kCtxLowerGamma1e4, 1e-14);
  EXPECT_NEAR(b.lower_small_alpha, oracle::kCtxLowerSmall, 1e-13);
  EXPECT_NEAR(b.upper, oracle::kCtxUpper, 1e-12);
  Dataset data = ctx.data;
  const auto mixed = TheoryContext::build(data, EntropyParams{vec({0.1, 0.2})}, 0.04);
  EXPECT_THROW(dln::loss_integral_bounds(mixed, 1e-4), dln::DiagnosticError);
}

TEST(Theory, AlphaRatioAndEventA) {
  const auto ctx = row_ctx();
  EXPECT_NEAR(dln::alpha_ratio_bounds(ctx, true).exp_bound(1), oracle::kCtxExpBound1, 1e-16);
  const auto u = dln::alpha_ratio_bounds(unit_ctx(), true);
  EXPECT_NEAR(u.exp_bound(0), std::exp(-1.0 / (1600.0 * std::log(100.0))), 1e-16);
  EXPECT_NEAR(dln::event_A_bound(ctx.a, ctx.b, 1e-4, ctx.lambda_max, 0.75), oracle::kCtxEventA, 1e-13);
  EXPECT_LT(dln::event_A_bound(ctx.a, ctx.b, 1e-4, ctx.lambda_max, 0.75),
            dln::event_A_bound(ctx.a, 2 * ctx.b, 1e-4, ctx.lambda_max, 0.75));
}

TEST(Theory, PowerLawFit) {
  const std::vector<double> alphas{0.2, 0.1, 0.05, 0.02};
  std::vector<double> ratios;
  for (double a : alphas) ratios.push_back(std::pow(a * a / 3.0, 0.15));
  EXPECT_NEAR(dln::fit_power_law_exponent(alphas, ratios, 3.0), 0.15, 1e-12);
  EXPECT_THROW(dln::fit_power_law_exponent({0.1}, {0.5, 0.6}, 3.0), dln::DiagnosticError);
}

TEST(Theory, Lambert) {
  EXPECT_TRUE(dln::lambert_bound_check(5.0, 1.0, oracle::kLambertFixedPoint - 1e-9));
  EXPECT_FALSE(dln::lambert_bound_check(5.0, 1.0, oracle::kLambertFixedPoint + 1e-6));
  EXPECT_DOUBLE_EQ(dln::lambert_bound(5.0, 1.0), 12.5);
  EXPECT_LE(oracle::kLambertFixedPoint, dln::lambert_bound(5.0, 1.0));
  EXPECT_TRUE(dln::lambert_bound_check(3.0, 1.5, 3.0));
  EXPECT_THROW(dln::lambert_bound_check(1.0, 1.0, 1.0), dln::DiagnosticError);
  EXPECT_THROW(dln::lambert_bound_check(-1.0, 1.0, 1.0), dln::DiagnosticError);
}

TEST(Theory, KktResidualOfSolverOutput) {
  const Dataset data = dln::generate_sparse_regression(10, 30, 3, 2);
  const auto params = EntropyParams::constant(0.07, 30);
  const Vector beta = dln::solve_implicit_bias(data, params);
  EXPECT_LE(dln::kkt_residual(beta, data, params), 1e-8);
  EXPECT_LE(dln::feasibility_residual(beta, data), 1e-10);
  EXPECT_GT(dln::kkt_residual(beta, data, EntropyParams::constant(0.5, 30)), 1e-3);
}

TEST(Theory, MartingaleIsZeroWithoutNoise) {
  const Dataset data = dln::generate_sparse_regression(5, 10, 2, 3);
  const auto ctx = TheoryContext::build(data, EntropyParams::constant(0.2, 10));
  dln::DynamicsConfig c;
  c.algo = dln::Algo::sgf;
  c.gamma = 1e-12;
  c.dt = 0.01;
  c.alpha = Vector::Constant(10, 0.2);
  c.max_steps = 500;
  c.record_every = 1;
  auto tr = dln::run_sgf(data, c);
  // Replace eta by its drift part, i.e. a zero-noise path.
  const double sqrt_n = std::sqrt(5.0);
  Vector eta = Vector::Zero(5);
  for (std::size_t k = 0; k < tr.records.size(); ++k) {
    if (k > 0) {
      const double dt = tr.records[k].time - tr.records[k - 1].time;
      eta -= (data.X * tr.records[k - 1].beta - data.y) * dt / sqrt_n;
    }
    tr.records[k].eta = eta;
  }
  const auto rep = dln::martingale_S_and_eventA(tr, ctx, c.gamma);
  EXPECT_FALSE(rep.violated);
  for (double s : rep.S) EXPECT_NEAR(s, 0.0, 1e-12);

  auto sparse = tr;
  sparse.records.erase(sparse.records.begin() + 3);
  EXPECT_THROW(dln::martingale_S_and_eventA(sparse, ctx, c.gamma), dln::DiagnosticError);
}

class NoiseCapture : public dln::StepObserver {
 public:
  struct Step {
    double dt;
    Vector beta;
    double loss_integral;
    double loss;
    Vector noise;
  };
  std::vector<Step> steps;
  void on_step(const dln::StepView& v) override {
    steps.push_back({v.dt, Eigen::Map<const Vector>(v.beta.data(), static_cast<Eigen::Index>(v.beta.size())),
                     v.loss_integral, v.loss,
                     Eigen::Map<const Vector>(v.noise.data(), static_cast<Eigen::Index>(v.noise.size()))});
  }
};

// One-step mirror identity of the stochastic flow with time-varying potential.
TEST(Theory, MirrorIdentityPerStep) {
  const Dataset data = dln::generate_sparse_regression(6, 12, 2, 5);
  dln::DynamicsConfig c;
  c.algo = dln::Algo::sgf;
  c.gamma = 0.05;
  c.dt = 1e-4;
  c.alpha = Vector::Constant(12, 0.3);
  c.max_steps = 200;
  c.seed = 3;
  NoiseCapture cap;
  const auto tr = dln::run_sgf(data, c, &cap);
  ASSERT_EQ(cap.steps.size(), 200u);
  const Vector H = dln::h_tilde_diag(data.X);
  const double n = 6.0;
  auto potential_grad = [&](const NoiseCapture::Step& s) {
    const Vector at = dln::alpha_t(c.alpha, c.gamma, H, s.loss_integral).alpha;
    return dln::grad_hyperbolic_entropy(s.beta, EntropyParams{at});
  };
  double worst = 0.0, scale = 0.0;
  for (std::size_t k = 0; k + 1 < cap.steps.size(); ++k) {
    const auto& s = cap.steps[k];
    const Vector lhs = potential_grad(cap.steps[k + 1]) - potential_grad(s);
    const Vector rhs = -dln::grad_beta_loss(s.beta, data) * s.dt +
                       std::sqrt(c.gamma * s.loss / n) * (data.X.transpose() * s.noise);
    worst = std::max(worst, (lhs - rhs).cwiseAbs().maxCoeff());
    scale = std::max(scale, rhs.cwiseAbs().maxCoeff());
  }
  EXPECT_LE(worst, 0.02 * scale);
}

TEST(Theory, PathMonitorAgreesWithOfflineMartingale) {
  const Dataset data = dln::generate_sparse_regression(5, 10, 2, 3);
  const auto ctx = TheoryContext::build(data, EntropyParams::constant(0.1, 10));
  const double gamma = dln::step_size_bound(ctx);
  dln::DynamicsConfig c;
  c.algo = dln::Algo::sgf;
  c.gamma = gamma;
  c.dt = gamma;
  c.alpha = Vector::Constant(10, 0.1);
  c.max_steps = 3000;
  c.record_every = 1;
  c.seed = 8;
  dln::PathMonitor mon(ctx, gamma, true);
  const auto tr = dln::run_sgf(data, c, &mon);
  const auto rep = dln::martingale_S_and_eventA(tr, ctx, gamma);
  ASSERT_EQ(mon.series().S.size(), rep.S.size());
  for (std::size_t k = 0; k < rep.S.size(); ++k) {
    EXPECT_NEAR(mon.series().S[k], rep.S[k], 1e-9 * (1.0 + std::abs(rep.S[k])));
  }
  EXPECT_EQ(mon.event_A_violated(), rep.violated);
  EXPECT_GE(mon.U_min(), 0.5);
  EXPECT_LE(mon.xi_l1_max(), dln::boundedness_bound(ctx));
  EXPECT_GE(mon.V_min(), mon.V_lower());
}

TEST(Theory, AlphaTShrinksAlongSgfRun) {
  const Dataset data = dln::generate_sparse_regression(8, 16, 2, 6);
  dln::DynamicsConfig c;
  c.algo = dln::Algo::sgf;
  c.gamma = 0.05;
  c.dt = 0.005;
  c.alpha = Vector::Constant(16, 0.1);
  c.record_every = 50;
  const auto tr = dln::run_sgf(data, c);
  const Vector H = dln::h_tilde_diag(data.X);
  Vector prev = c.alpha;
  for (const auto& r : tr.records) {
    const Vector at = dln::alpha_t(c.alpha, c.gamma, H, r.loss_integral).alpha;
    EXPECT_TRUE((at.array() <= prev.array()).all());
    prev = at;
  }
  EXPECT_TRUE((prev.array() < c.alpha.array()).all());
}

// The stochastic runs converge more slowly than the flow.
TEST(Theory, SgfLossIntegralExceedsGradientFlow) {
  const Dataset data = dln::generate_sparse_regression(8, 16, 2, 6);
  dln::DynamicsConfig c;
  c.algo = dln::Algo::gd;
  c.gamma = 0.05;
  c.dt = 0.005;
  c.alpha = Vector::Constant(16, 0.1);
  c.record_every = 100'000;
  const double gf = dln::run_gd(data, c).loss_integral;
  c.algo = dln::Algo::sgf;
  std::vector<double> ints;
  for (std::uint64_t s = 1; s <= 9; ++s) {
    c.seed = s;
    ints.push_back(dln::run_sgf(data, c).loss_integral);
  }
  std::nth_element(ints.begin(), ints.begin() + 4, ints.end());
  EXPECT_GT(ints[4], gf);
}

}  // namespace
