#include "dln/bias.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "dln/errors.hpp"

namespace dln {

EntropyParams EntropyParams::constant(double alpha, std::size_t d) {
  EntropyParams p{Vector::Constant(static_cast<Eigen::Index>(d), alpha)};
  p.validate();
  return p;
}

void EntropyParams::validate() const {
  if (alpha.size() == 0) throw ConfigError("entropy params: alpha is empty");
  if (!alpha.allFinite() || !(alpha.array() > 0.0).all()) {
    throw ConfigError("entropy params: alpha must be positive and finite");
  }
}

double stable_asinh(double x) {
  const double ax = std::abs(x);
  if (ax > 1e8) return std::copysign(std::log(2.0) + std::log(ax), x);
  return std::asinh(x);
}

namespace {

void check_len(const Vector& beta, const EntropyParams& params) {
  params.validate();
  if (beta.size() != params.alpha.size()) throw ConfigError("beta and alpha differ in length");
}

double entropy_term(double b, double alpha) {
  const double two_a2 = 2.0 * alpha * alpha;
  return b * stable_asinh(b / two_a2) - std::hypot(b, two_a2);
}

}  // namespace

double hyperbolic_entropy(const Vector& beta, const EntropyParams& params) {
  check_len(beta, params);
  double s = 0.0;
  for (Eigen::Index j = 0; j < beta.size(); ++j) s += entropy_term(beta(j), params.alpha(j));
  return 0.25 * s;
}

Vector grad_hyperbolic_entropy(const Vector& beta, const EntropyParams& params) {
  check_len(beta, params);
  Vector g(beta.size());
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    g(j) = 0.25 * stable_asinh(beta(j) / (2.0 * params.alpha(j) * params.alpha(j)));
  }
  return g;
}

double bregman_divergence(const Vector& beta, const Vector& ref_beta, const EntropyParams& params) {
  check_len(beta, params);
  check_len(ref_beta, params);
  double s = 0.0;
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    const double a = params.alpha(j);
    const double g = 0.25 * stable_asinh(ref_beta(j) / (2.0 * a * a));
    const double dj =
        0.25 * (entropy_term(beta(j), a) - entropy_term(ref_beta(j), a)) - g * (beta(j) - ref_beta(j));
    s += std::max(dj, 0.0);
  }
  return s;
}

RowSpaceProjector::RowSpaceProjector(const Matrix& X) {
  if (X.size() == 0) throw ConfigError("row-space projector: empty X");
  const Eigen::MatrixXd Xd = X;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(Xd, Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  const double cutoff = 1e-10 * (s.size() > 0 ? s(0) : 0.0);
  Eigen::Index r = 0;
  while (r < s.size() && s(r) > cutoff) ++r;
  basis_ = svd.matrixV().leftCols(r);
}

Vector RowSpaceProjector::complement(const Vector& g) const {
  if (g.size() != basis_.rows()) throw ConfigError("row-space projector: length mismatch");
  return g - basis_ * (basis_.transpose() * g);
}

std::string_view to_string(BiasPath p) { return p == BiasPath::newton ? "newton" : "mirror_descent"; }

namespace {

struct NewtonOutcome {
  bool ok = false;
  Vector mu;
  Vector beta;
  int iterations = 0;
  std::string failure;
};

NewtonOutcome dual_newton(const Dataset& data, const Vector& a2, const Vector& mu0, int max_iter, double feas_tol) {
  const Matrix& X = data.X;
  const Vector& y = data.y;
  const double scale = y.norm();
  NewtonOutcome out;
  Vector mu = mu0;

  auto beta_of = [&](const Vector& u) { return Vector((2.0 * a2.array() * u.array().sinh()).matrix()); };
  auto dual_value = [&](const Vector& m, const Vector& u) {
    return (2.0 * a2.array() * u.array().cosh()).sum() - m.dot(y);
  };

  Vector u = X.transpose() * mu;
  double D = dual_value(mu, u);
  Vector beta = beta_of(u);
  Vector g = X * beta - y;
  for (int it = 0; it < max_iter; ++it) {
    out.iterations = it;
    const double gnorm = g.norm();
    if (!std::isfinite(D) || !std::isfinite(gnorm)) {
      out.failure = "non-finite dual value";
      return out;
    }
    if (gnorm <= 1e-13 * scale) break;
    const Vector c = 2.0 * a2.array() * u.array().cosh();
    const Eigen::MatrixXd H = X * c.asDiagonal() * X.transpose();
    Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
    if (ldlt.info() != Eigen::Success) {
      out.failure = "Newton system factorization failed";
      return out;
    }
    const Vector step = ldlt.solve(-g);
    if (!step.allFinite()) {
      out.failure = "Newton step not finite";
      return out;
    }
    const double slope = g.dot(step);
    bool accepted = false;
    for (double t = 1.0; t > 1e-18; t *= 0.5) {
      const Vector mu_t = mu + t * step;
      const Vector u_t = X.transpose() * mu_t;
      const double D_t = dual_value(mu_t, u_t);
      if (!std::isfinite(D_t)) continue;
      const Vector beta_t = beta_of(u_t);
      const Vector g_t = X * beta_t - y;
      // Near the optimum D is flat to rounding; fall back to the gradient norm.
      const bool armijo = D_t <= D + 1e-4 * t * slope;
      const bool flat = std::abs(D_t - D) <= 1e-13 * (std::abs(D) + c.sum()) && g_t.norm() < gnorm;
      if (armijo || flat) {
        mu = mu_t;
        u = u_t;
        D = D_t;
        beta = beta_t;
        g = g_t;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (gnorm <= feas_tol * scale) break;
      out.failure = "line search failed at residual " + std::to_string(gnorm);
      return out;
    }
    out.iterations = it + 1;
  }
  if (!(g.norm() <= feas_tol * scale)) {
    out.failure = "no convergence after " + std::to_string(max_iter) + " Newton iterations (residual " +
                  std::to_string(g.norm() / scale) + ")";
    return out;
  }
  out.ok = true;
  out.mu = mu;
  out.beta = beta;
  return out;
}

struct MirrorOutcome {
  bool ok = false;
  Vector beta;
  int iterations = 0;
};

// theta <- theta - (2 eta / n) X^T (X beta - y), beta = 2 alpha^2 sinh(theta);
// theta stays in the row space, so any interpolating limit is the argmin.
MirrorOutcome mirror_descent(const Dataset& data, const Vector& a2, int max_iter, double feas_tol) {
  const Matrix& X = data.X;
  const Vector& y = data.y;
  const double n = static_cast<double>(data.n());
  const double scale = y.norm();
  Vector theta = Vector::Zero(X.cols());
  Vector beta = Vector::Zero(X.cols());
  Vector r = -y;
  double loss = r.squaredNorm() / (4.0 * n);
  double eta = 1.0;
  MirrorOutcome out;
  for (int it = 0; it < max_iter; ++it) {
    out.iterations = it;
    if (r.norm() <= feas_tol * scale) {
      out.ok = true;
      out.beta = beta;
      return out;
    }
    const Vector dir = (2.0 / n) * (X.transpose() * r);
    for (;;) {
      const Vector theta_t = theta - eta * dir;
      const Vector beta_t = 2.0 * a2.array() * theta_t.array().sinh();
      const Vector r_t = X * beta_t - y;
      const double loss_t = r_t.squaredNorm() / (4.0 * n);
      if (std::isfinite(loss_t) && loss_t < loss) {
        theta = theta_t;
        beta = beta_t;
        r = r_t;
        loss = loss_t;
        eta *= 1.25;
        break;
      }
      eta *= 0.5;
      if (eta < 1e-300) return out;
    }
  }
  return out;
}

}  // namespace

BiasSolution solve_implicit_bias_detailed(const Dataset& data, const EntropyParams& params,
                                          const BiasSolverOptions& options) {
  data.validate();
  params.validate();
  if (static_cast<std::size_t>(params.alpha.size()) != data.d()) throw ConfigError("alpha length differs from d");
  const Vector a2 = params.alpha.array().square();
  const auto n = static_cast<Eigen::Index>(data.n());

  BiasSolution sol;
  if (data.y.norm() == 0.0) {
    sol.beta = Vector::Zero(data.X.cols());
    sol.mu = Vector::Zero(n);
    return sol;
  }

  std::string newton_failure;
  if (!options.force_mirror) {
    const RowSpaceProjector proj(data.X);
    if (proj.rank() < data.n()) {
      newton_failure = "X is rank deficient (rank " + std::to_string(proj.rank()) + " < n)";
    } else {
      Vector mu0 = options.mu0.value_or(Vector::Zero(n));
      if (mu0.size() != n) throw ConfigError("mu0 must have length n");
      NewtonOutcome nt = dual_newton(data, a2, mu0, options.max_newton_iter, options.feas_tol);
      if (nt.ok) {
        sol.beta = std::move(nt.beta);
        sol.mu = std::move(nt.mu);
        sol.iterations = nt.iterations;
        sol.path = BiasPath::newton;
        sol.feasibility = (data.X * sol.beta - data.y).norm() / data.y.norm();
        return sol;
      }
      newton_failure = nt.failure;
    }
  } else {
    newton_failure = "mirror descent forced";
  }

  if (!options.allow_fallback) throw SolverError("implicit-bias Newton solver failed: " + newton_failure);
  MirrorOutcome md = mirror_descent(data, a2, options.max_mirror_iter, options.feas_tol);
  if (!md.ok) {
    throw SolverError("implicit-bias solver failed. Newton: " + newton_failure + "; mirror descent: no convergence after " +
                      std::to_string(md.iterations) + " iterations");
  }
  sol.beta = std::move(md.beta);
  sol.path = BiasPath::mirror_descent;
  sol.iterations = md.iterations;
  sol.newton_failure = newton_failure;
  sol.feasibility = (data.X * sol.beta - data.y).norm() / data.y.norm();
  return sol;
}

Vector solve_implicit_bias(const Dataset& data, const EntropyParams& params) {
  return solve_implicit_bias_detailed(data, params).beta;
}

namespace {

class Tableau {
 public:
  Tableau(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), t_((rows + 1) * (cols + 1), 0.0) {}

  double& at(std::size_t i, std::size_t j) { return t_[i * (cols_ + 1) + j]; }
  double at(std::size_t i, std::size_t j) const { return t_[i * (cols_ + 1) + j]; }
  double& rhs(std::size_t i) { return at(i, cols_); }
  double& cost(std::size_t j) { return at(rows_, j); }  // reduced-cost row

  void pivot(std::size_t pr, std::size_t pc) {
    const double inv = 1.0 / at(pr, pc);
    for (std::size_t j = 0; j <= cols_; ++j) at(pr, j) *= inv;
    at(pr, pc) = 1.0;
    for (std::size_t i = 0; i <= rows_; ++i) {
      if (i == pr) continue;
      const double f = at(i, pc);
      if (f == 0.0) continue;
      for (std::size_t j = 0; j <= cols_; ++j) at(i, j) -= f * at(pr, j);
      at(i, pc) = 0.0;
    }
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

 private:
  std::size_t rows_, cols_;
  std::vector<double> t_;
};

constexpr double kPivotTol = 1e-9;
constexpr double kCostTol = 1e-9;

// Bland's rule: lowest-index improving column, lowest basic index on ratio ties.
int run_simplex(Tableau& T, std::vector<std::size_t>& basis, const std::vector<bool>& allowed,
                const std::vector<bool>& active_row, int max_pivots) {
  int pivots = 0;
  for (;;) {
    std::size_t enter = T.cols();
    for (std::size_t j = 0; j < T.cols(); ++j) {
      if (allowed[j] && T.cost(j) < -kCostTol) {
        enter = j;
        break;
      }
    }
    if (enter == T.cols()) return pivots;
    std::size_t leave = T.rows();
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < T.rows(); ++i) {
      if (!active_row[i]) continue;
      const double a = T.at(i, enter);
      if (a <= kPivotTol) continue;
      const double ratio = std::max(T.rhs(i), 0.0) / a;
      if (leave == T.rows() || ratio < best - 1e-15) {
        best = ratio;
        leave = i;
      } else if (ratio <= best + 1e-15 && basis[i] < basis[leave]) {
        leave = i;
      }
    }
    if (leave == T.rows()) throw SolverError("simplex: unbounded direction (cannot occur for basis pursuit)");
    T.pivot(leave, enter);
    basis[leave] = enter;
    if (++pivots > max_pivots) throw SolverError("simplex: pivot limit exceeded");
  }
}

}  // namespace

L1Solution min_l1_interpolator_detailed(const Dataset& data) {
  data.validate();
  const std::size_t n = data.n();
  const std::size_t d = data.d();
  const std::size_t nv = 2 * d;  // p then m
  const std::size_t cols = nv + n;
  L1Solution out;
  if (data.y.norm() == 0.0) {
    out.beta = Vector::Zero(static_cast<Eigen::Index>(d));
    return out;
  }

  Tableau T(n, cols);
  std::vector<std::size_t> basis(n);
  std::vector<bool> active(n, true);
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    const double s = data.y(ii) < 0.0 ? -1.0 : 1.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double x = s * data.X(ii, static_cast<Eigen::Index>(j));
      T.at(i, j) = x;
      T.at(i, d + j) = -x;
    }
    T.at(i, nv + i) = 1.0;
    T.rhs(i) = s * data.y(ii);
    basis[i] = nv + i;
  }

  // Phase 1: minimize the sum of artificials.
  for (std::size_t j = 0; j <= cols; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s -= T.at(i, j);
    T.cost(j) = j >= nv && j < cols ? 0.0 : s;
  }
  const int max_pivots = 200000;
  std::vector<bool> allowed(cols, true);
  out.pivots += run_simplex(T, basis, allowed, active, max_pivots);
  const double phase1 = -T.cost(cols);
  if (phase1 > 1e-9 * (1.0 + data.y.lpNorm<1>())) {
    throw SolverError("basis pursuit is infeasible (phase-1 objective " + std::to_string(phase1) + ")");
  }

  // Drive zero-level artificials out; rows with nothing to pivot on are redundant.
  for (std::size_t i = 0; i < n; ++i) {
    if (basis[i] < nv) continue;
    std::size_t pc = nv;
    for (std::size_t j = 0; j < nv; ++j) {
      if (std::abs(T.at(i, j)) > kPivotTol) {
        pc = j;
        break;
      }
    }
    if (pc == nv) {
      active[i] = false;
      continue;
    }
    T.pivot(i, pc);
    basis[i] = pc;
    ++out.pivots;
  }

  // Phase 2: cost 1 on every structural column.
  for (std::size_t j = nv; j < cols; ++j) allowed[j] = false;
  for (std::size_t j = 0; j <= cols; ++j) {
    double z = j < nv ? 1.0 : 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (active[i] && basis[i] < nv) z -= T.at(i, j);
    }
    T.cost(j) = z;
  }
  out.pivots += run_simplex(T, basis, allowed, active, max_pivots);

  // Refine the basic solution with a direct solve on the final basis.
  std::vector<std::size_t> rows, bcols;
  for (std::size_t i = 0; i < n; ++i) {
    if (!active[i]) continue;
    rows.push_back(i);
    bcols.push_back(basis[i]);
  }
  const auto m = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd B(m, m);
  Vector yb(m);
  for (Eigen::Index r = 0; r < m; ++r) {
    const auto ri = static_cast<Eigen::Index>(rows[static_cast<std::size_t>(r)]);
    yb(r) = data.y(ri);
    for (Eigen::Index c = 0; c < m; ++c) {
      const std::size_t col = bcols[static_cast<std::size_t>(c)];
      const double x = data.X(ri, static_cast<Eigen::Index>(col % d));
      B(r, c) = col < d ? x : -x;
    }
  }
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(B);
  Vector xb = lu.solve(yb);
  Vector tableau_xb(m);
  for (Eigen::Index r = 0; r < m; ++r) tableau_xb(r) = T.rhs(rows[static_cast<std::size_t>(r)]);
  if (!xb.allFinite() || (xb.array() < -1e-9).any() || (xb - tableau_xb).norm() > 1e-6 * (1.0 + tableau_xb.norm())) {
    xb = tableau_xb;
  }

  out.beta = Vector::Zero(static_cast<Eigen::Index>(d));
  for (Eigen::Index c = 0; c < m; ++c) {
    const std::size_t col = bcols[static_cast<std::size_t>(c)];
    const double v = std::max(xb(c), 0.0);
    if (col < d) {
      out.beta(static_cast<Eigen::Index>(col)) += v;
    } else {
      out.beta(static_cast<Eigen::Index>(col - d)) -= v;
    }
  }
  out.objective = out.beta.lpNorm<1>();

  // Dual certificate: B^T lambda = 1 on active rows.
  const Vector lam_b = lu.transpose().solve(Vector::Ones(m));
  Vector lam = Vector::Zero(static_cast<Eigen::Index>(n));
  for (Eigen::Index r = 0; r < m; ++r) lam(static_cast<Eigen::Index>(rows[static_cast<std::size_t>(r)])) = lam_b(r);
  out.dual_objective = lam.dot(data.y);
  out.duality_gap = std::abs(out.objective - out.dual_objective);
  out.dual_infeasibility = std::max(0.0, (data.X.transpose() * lam).lpNorm<Eigen::Infinity>() - 1.0);
  return out;
}

Vector min_l1_interpolator(const Dataset& data) { return min_l1_interpolator_detailed(data).beta; }

Vector min_l2_interpolator(const Dataset& data) {
  data.validate();
  const Eigen::MatrixXd X = data.X;
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(X);
  cod.setThreshold(1e-12);
  if (static_cast<std::size_t>(cod.rank()) < data.n()) {
    throw SolverError("min-l2 interpolator: X has rank " + std::to_string(cod.rank()) + " < n = " +
                      std::to_string(data.n()));
  }
  return cod.solve(data.y);
}

DepthPPotential::DepthPPotential(Vector ap, Vector am, int p)
    : alpha_plus(std::move(ap)), alpha_minus(std::move(am)), depth(p) {
  if (depth < 3) throw ConfigError("depth-p potential requires p >= 3");
  if (alpha_plus.size() == 0 || alpha_plus.size() != alpha_minus.size()) {
    throw ConfigError("depth-p potential: alpha_plus and alpha_minus must be non-empty and equal length");
  }
  for (const Vector* a : {&alpha_plus, &alpha_minus}) {
    if (!a->allFinite() || !(a->array() > 0.0).all()) throw ConfigError("depth-p potential: alpha must be positive");
  }
  // Monotonicity on an interior grid of each coordinate's domain.
  const double q = static_cast<double>(depth) / (depth - 2);
  for (Eigen::Index j = 0; j < alpha_plus.size(); ++j) {
    const double A = std::pow(alpha_plus(j), 2.0 - depth);
    const double Bm = std::pow(alpha_minus(j), 2.0 - depth);
    double prev = -std::numeric_limits<double>::infinity();
    for (int k = 1; k < 64; ++k) {
      const double z = -Bm + (A + Bm) * k / 64.0;
      const double h = std::pow(A - z, -q) - std::pow(Bm + z, -q);
      if (!(h > prev)) throw DomainError("depth-p potential: h is not increasing on its domain");
      prev = h;
    }
  }
}

namespace {

struct LinkCoord {
  double A;  // alpha_+^{2-p}
  double B;  // alpha_-^{2-p}
  double q;  // p / (p - 2)
};

LinkCoord link_coord(const DepthPPotential& pot, Eigen::Index j) {
  const double e = 2.0 - pot.depth;
  return {std::pow(pot.alpha_plus(j), e), std::pow(pot.alpha_minus(j), e),
          static_cast<double>(pot.depth) / (pot.depth - 2)};
}

// With u = A - z, w = B + z, S = u + w and g = w - u, h = u^{-q} - w^{-q}.
// For |g| <= S/2 use h = w^{-q} expm1(2q atanh(g/S)), which keeps relative
// accuracy near h = 0.
double h_central(double g, double S, double q) {
  const double w = 0.5 * (S + g);
  return std::pow(w, -q) * std::expm1(2.0 * q * std::atanh(g / S));
}

double h_coord(double z, const LinkCoord& c) {
  if (!(z > -c.B) || !(z < c.A)) throw DomainError("depth-p h: z outside (-alpha_-^{2-p}, alpha_+^{2-p})");
  const double S = c.A + c.B;
  const double g = (c.B - c.A) + 2.0 * z;
  if (std::abs(g) <= 0.5 * S) return h_central(g, S, c.q);
  return std::pow(c.A - z, -c.q) - std::pow(c.B + z, -c.q);
}

// Solve u^{-q} - (S - u)^{-q} = v for u in (0, S/4], given v >= h(u = S/4).
double solve_boundary_side(double v, double S, double q) {
  auto f = [&](double u) { return std::pow(u, -q) - std::pow(S - u, -q) - v; };
  double hi = 0.25 * S;
  if (f(hi) >= 0.0) return hi;
  double lo = 0.5 * hi;
  while (f(lo) < 0.0) {
    hi = lo;
    lo *= 0.5;
    if (lo == 0.0) throw DomainError("depth-p h inverse: value out of range");
  }
  while (hi - lo > 1e-14 * hi) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) >= 0.0 ? lo : hi) = mid;
  }
  double u = 0.5 * (lo + hi);
  for (int it = 0; it < 3; ++it) {
    const double fp = -q * std::pow(u, -q - 1.0) - q * std::pow(S - u, -q - 1.0);
    const double next = u - f(u) / fp;
    if (!(next > 0.0) || !(next < S)) break;
    u = next;
  }
  return u;
}

// Solve h_central(g) = v for g in [0, S/2], given 0 <= v <= h_central(S/2).
double solve_central_side(double v, double S, double q) {
  if (v == 0.0) return 0.0;
  auto f = [&](double g) { return h_central(g, S, q) - v; };
  double hi = 0.5 * S;
  double lo = 0.5 * hi;
  while (f(lo) > 0.0) {
    hi = lo;
    lo *= 0.5;
    if (lo == 0.0) return 0.0;
  }
  while (hi - lo > 1e-14 * hi) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) <= 0.0 ? lo : hi) = mid;
  }
  double g = 0.5 * (lo + hi);
  for (int it = 0; it < 3; ++it) {
    const double u = 0.5 * (S - g);
    const double w = 0.5 * (S + g);
    const double fp = 0.5 * q * (std::pow(u, -q - 1.0) + std::pow(w, -q - 1.0));
    const double next = g - f(g) / fp;
    if (!(next >= 0.0) || !(next <= 0.5 * S)) break;
    g = next;
  }
  return g;
}

double h_inverse_coord(double v, const LinkCoord& c) {
  if (!std::isfinite(v)) throw DomainError("depth-p h inverse: non-finite value");
  const double S = c.A + c.B;
  const double h_half = h_central(0.5 * S, S, c.q);
  const double av = std::abs(v);
  const double sign = v < 0.0 ? -1.0 : 1.0;
  if (av <= h_half) {
    // h(-g) = -h(g) in the (u, w) variables, so solve for |g| and reflect.
    const double g = sign * solve_central_side(av, S, c.q);
    return 0.5 * (g - (c.B - c.A));
  }
  const double small = solve_boundary_side(av, S, c.q);
  return v > 0.0 ? c.A - small : small - c.B;
}

}  // namespace

Vector depth_p_h(const Vector& z, const DepthPPotential& pot) {
  if (z.size() != pot.alpha_plus.size()) throw ConfigError("depth_p_h: length mismatch");
  Vector out(z.size());
  for (Eigen::Index j = 0; j < z.size(); ++j) out(j) = h_coord(z(j), link_coord(pot, j));
  return out;
}

Vector depth_p_h_inverse(const Vector& v, const DepthPPotential& pot) {
  if (v.size() != pot.alpha_plus.size()) throw ConfigError("depth_p_h_inverse: length mismatch");
  Vector out(v.size());
  for (Eigen::Index j = 0; j < v.size(); ++j) out(j) = h_inverse_coord(v(j), link_coord(pot, j));
  return out;
}

double depth_p_potential(const Vector& beta, const DepthPPotential& pot) {
  if (beta.size() != pot.alpha_plus.size()) throw ConfigError("depth_p_potential: length mismatch");
  double total = 0.0;
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    const LinkCoord c = link_coord(pot, j);
    auto integrand = [&](double s) { return h_inverse_coord(s, c); };
    if (beta(j) == 0.0) continue;
    total += boost::math::quadrature::gauss_kronrod<double, 31>::integrate(integrand, 0.0, beta(j), 15, 1e-12);
  }
  return total;
}

double depth_p_kkt_residual(const Vector& beta, const Dataset& data, const DepthPPotential& pot) {
  if (static_cast<std::size_t>(beta.size()) != data.d()) throw ConfigError("depth_p_kkt_residual: length mismatch");
  const Vector z = depth_p_h_inverse(beta, pot);
  const double zn = z.norm();
  if (zn == 0.0) return 0.0;
  return RowSpaceProjector(data.X).complement(z).norm() / zn;
}

}  // namespace dln
