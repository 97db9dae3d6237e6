#include "properties.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "dln/bias.hpp"
#include "dln/diagnostics.hpp"
#include "dln/dynamics.hpp"
#include "dln/harness/io.hpp"
#include "dln/model.hpp"
#include "dln/rng.hpp"

namespace props {

namespace {

using dln::Vector;

Vector normals(dln::CounterRng& r, Eigen::Index d, double scale = 1.0) {
  Vector v(d);
  for (Eigen::Index j = 0; j < d; ++j) v(j) = scale * r.normal_box_muller();
  return v;
}

Vector positives(dln::CounterRng& r, Eigen::Index d, double lo, double hi) {
  Vector v(d);
  for (Eigen::Index j = 0; j < d; ++j) v(j) = lo * std::pow(hi / lo, r.uniform());
  return v;
}

std::string fmt(const char* what, double x) {
  std::ostringstream os;
  os << what << '=' << x;
  return os.str();
}

}  // namespace

Result gradient_finite_differences() {
  dln::CounterRng r(1, "props.grad");
  double worst = 0.0;
  const double h = 1e-6;
  for (int trial = 0; trial < 20; ++trial) {
    const auto data = dln::generate_sparse_regression(6, 10, 3, 100 + trial);
    const Vector beta = normals(r, 10);
    const Vector g = dln::grad_beta_loss(beta, data);
    for (Eigen::Index j = 0; j < 10; ++j) {
      Vector p = beta, m = beta;
      p(j) += h;
      m(j) -= h;
      const double fd = (dln::loss(p, data) - dln::loss(m, data)) / (2 * h);
      worst = std::max(worst, std::abs(g(j) - fd) / std::max(1.0, std::abs(fd)));
    }
    for (int depth : {2, 3}) {
      dln::WeightState st;
      st.depth = depth;
      st.w_plus = positives(r, 10, 0.2, 1.2);
      st.w_minus = positives(r, 10, 0.2, 1.2);
      const auto [gp, gm] = dln::grad_w_loss(st, data);
      for (Eigen::Index j = 0; j < 10; ++j) {
        for (int side = 0; side < 2; ++side) {
          auto a = st, b = st;
          (side ? a.w_minus : a.w_plus)(j) += h;
          (side ? b.w_minus : b.w_plus)(j) -= h;
          const double fd = (dln::loss(a.beta(), data) - dln::loss(b.beta(), data)) / (2 * h);
          const double an = side ? gm(j) : gp(j);
          worst = std::max(worst, std::abs(an - fd) / std::max(1.0, std::abs(fd)));
        }
      }
    }
  }
  return {"gradient_vs_finite_differences", worst <= 1e-5, fmt("max_rel_err", worst)};
}

Result entropy_convexity_and_monotonicity() {
  dln::CounterRng r(2, "props.entropy");
  long bad = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    const dln::EntropyParams a{positives(r, 5, 1e-3, 10.0)};
    const Vector b1 = normals(r, 5, 3.0), b2 = normals(r, 5, 3.0);
    const double lam = r.uniform();
    const double lhs = dln::hyperbolic_entropy(lam * b1 + (1 - lam) * b2, a);
    const double rhs = lam * dln::hyperbolic_entropy(b1, a) + (1 - lam) * dln::hyperbolic_entropy(b2, a);
    if (lhs > rhs + 1e-12 * std::max(1.0, std::abs(rhs))) ++bad;
    const dln::EntropyParams bigger{a.alpha.array() * (1.0 + positives(r, 5, 1e-3, 3.0).array())};
    if (dln::hyperbolic_entropy(b1, a) < dln::hyperbolic_entropy(b1, bigger)) ++bad;
  }
  return {"entropy_convexity_and_alpha_monotonicity", bad == 0, fmt("violations", static_cast<double>(bad))};
}

namespace {

// Counts violations of phi(b) - phi(0) >= bound(b) and the smallest violating
// ratio |b| / (2 alpha^2).
Result entropy_gap_check(const char* name, Vector (*bound)(const Vector&, const dln::EntropyParams&)) {
  long bad = 0, checked = 0;
  double first_bad = std::numeric_limits<double>::infinity();
  auto check = [&](double beta, double alpha) {
    const dln::EntropyParams a{Vector::Constant(1, alpha)};
    const Vector b = Vector::Constant(1, beta);
    const double gap = dln::hyperbolic_entropy(b, a) - dln::hyperbolic_entropy(Vector::Zero(1), a);
    ++checked;
    if (gap < bound(b, a)(0) - 1e-12 * std::max(1.0, std::abs(gap))) {
      ++bad;
      first_bad = std::min(first_bad, std::abs(beta) / (2 * alpha * alpha));
    }
  };
  for (double alpha : {1e-4, 1e-2, 0.1, 1.0, 5.0}) {
    for (int k = -400; k <= 400; ++k) {
      check(std::copysign(std::pow(10.0, std::abs(k) / 100.0 - 3.0), static_cast<double>(k)), alpha);
    }
  }
  dln::CounterRng r(3, "props.gap");
  for (int trial = 0; trial < 20000; ++trial) {
    const double alpha = positives(r, 1, 1e-4, 10.0)(0);
    check(normals(r, 1, 5.0)(0), alpha);
  }
  std::ostringstream os;
  os << "checked=" << checked << " violations=" << bad;
  if (bad > 0) os << " smallest_violating_ratio=" << first_bad;
  return {name, bad == 0, os.str()};
}

}  // namespace

Result entropy_gap_lemma() { return entropy_gap_check("entropy_gap_lemma", dln::entropy_gap_lower_bound); }

Result entropy_gap_lemma_valid_form() {
  return entropy_gap_check("entropy_gap_lemma_valid_form", dln::entropy_gap_valid_lower_bound);
}

Result lambert_lemma(long trials) {
  dln::CounterRng r(4, "props.lambert");
  long tested = 0, counterexamples = 0;
  while (tested < trials) {
    const double A = 50.0 * r.uniform() + 1e-9;
    const double B = 20.0 * r.uniform() + 1e-9;
    if (!(A / B + std::log(B) >= 2.0)) continue;
    // Sample up to well beyond the largest admissible x.
    const double x = (3.0 * (A + B * std::log(std::max(B, 1.0)) + B) + 1.0) * r.uniform();
    if (!dln::lambert_bound_check(A, B, x)) continue;
    ++tested;
    if (x > dln::lambert_bound(A, B)) ++counterexamples;
  }
  std::ostringstream os;
  os << "trials=" << tested << " counterexamples=" << counterexamples;
  return {"lambert_lemma", counterexamples == 0, os.str()};
}

Result asinh_sinh_round_trip() {
  dln::CounterRng r(5, "props.asinh");
  double worst = 0.0;
  for (int trial = 0; trial < 100000; ++trial) {
    const double alpha = 1e-4 * std::pow(1e5, r.uniform());
    const double beta = std::copysign(std::pow(10.0, 12.0 * r.uniform() - 6.0), r.uniform() - 0.5);
    const double a2 = 2.0 * alpha * alpha;
    const double theta = dln::stable_asinh(beta / a2);
    const double back = a2 * std::sinh(theta);
    worst = std::max(worst, std::abs(back - beta) / std::abs(beta));
    const double t2 = dln::stable_asinh(std::sinh(theta));
    worst = std::max(worst, std::abs(t2 - theta) / std::max(1.0, std::abs(theta)));
  }
  return {"asinh_sinh_round_trip", worst <= 1e-12, fmt("max_rel_err", worst)};
}

Result depth_p_inverse_round_trip() {
  double worst = 0.0;
  for (int p : {3, 4, 6}) {
    for (auto [ap, am] : {std::pair{1.0, 1.0}, std::pair{0.2, 0.9}, std::pair{2.0, 0.05}}) {
      const dln::DepthPPotential pot(Vector::Constant(1, ap), Vector::Constant(1, am), p);
      const double hi = std::pow(ap, 2.0 - p), lo = -std::pow(am, 2.0 - p);
      const int kPoints = 2001;
      Vector z(kPoints);
      for (int k = 0; k < kPoints; ++k) {
        const double t = (k + 0.5) / kPoints;
        z(k) = lo + (hi - lo) * (0.001 + 0.998 * t);
      }
      for (int k = 0; k < kPoints; ++k) {
        const Vector zk = Vector::Constant(1, z(k));
        const Vector back = dln::depth_p_h_inverse(dln::depth_p_h(zk, pot), pot);
        worst = std::max(worst, std::abs(back(0) - z(k)) / std::max(1.0, std::abs(z(k))));
      }
    }
  }
  return {"depth_p_h_inverse_round_trip", worst <= 1e-10, fmt("max_err", worst)};
}

Result seed_determinism() {
  bool same = true;
  const auto d1 = dln::generate_sparse_regression(10, 20, 3, 77);
  const auto d2 = dln::generate_sparse_regression(10, 20, 3, 77);
  same = same && dln::io::dataset_csv(d1) == dln::io::dataset_csv(d2);
  for (auto algo : {dln::Algo::sgd, dln::Algo::sgf, dln::Algo::sgd_label_noise, dln::Algo::sgf_general,
                    dln::Algo::sgf_depth_p}) {
    dln::DynamicsConfig c;
    c.algo = algo;
    c.gamma = 0.02;
    c.alpha = Vector::Constant(20, 0.2);
    c.max_steps = 2000;
    c.record_every = 1;
    c.seed = 31;
    if (algo == dln::Algo::sgd_label_noise) c.label_noise = dln::LabelNoise{0.5, 1000};
    if (algo == dln::Algo::sgf_depth_p) c.depth = 3;
    same = same && dln::io::trajectory_csv(dln::run(d1, c), true) == dln::io::trajectory_csv(dln::run(d2, c), true);
  }
  return {"seed_determinism", same, same ? "byte-identical" : "reruns differ"};
}

std::vector<Result> all() {
  return {gradient_finite_differences(), entropy_convexity_and_monotonicity(), entropy_gap_lemma(),
          entropy_gap_lemma_valid_form(),  lambert_lemma(),
          asinh_sinh_round_trip(),      depth_p_inverse_round_trip(),         seed_determinism()};
}

}  // namespace props
