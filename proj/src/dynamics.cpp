#include "dln/dynamics.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "dln/errors.hpp"
#include "dln/rng.hpp"
#include "dln/simd/kernels.hpp"

namespace dln {

std::string_view to_string(Algo a) {
  switch (a) {
    case Algo::gd: return "gd";
    case Algo::sgd: return "sgd";
    case Algo::sgf: return "sgf";
    case Algo::sgd_label_noise: return "sgd_label_noise";
    case Algo::sgf_label_noise: return "sgf_label_noise";
    case Algo::sgf_general: return "sgf_general";
    case Algo::sgf_depth_p: return "sgf_depth_p";
  }
  return "unknown";
}

std::string_view to_string(Sampling s) {
  return s == Sampling::with_replacement ? "with_replacement" : "without_replacement";
}

std::string_view to_string(Status s) {
  switch (s) {
    case Status::converged: return "converged";
    case Status::max_steps: return "max_steps";
    case Status::diverged: return "diverged";
  }
  return "unknown";
}

Algo parse_algo(std::string_view s) {
  for (Algo a : {Algo::gd, Algo::sgd, Algo::sgf, Algo::sgd_label_noise, Algo::sgf_label_noise, Algo::sgf_general,
                 Algo::sgf_depth_p}) {
    if (to_string(a) == s) return a;
  }
  throw ConfigError("unknown algo '" + std::string(s) + "'");
}

Sampling parse_sampling(std::string_view s) {
  if (s == "with_replacement") return Sampling::with_replacement;
  if (s == "without_replacement") return Sampling::without_replacement;
  throw ConfigError("unknown sampling mode '" + std::string(s) + "'");
}

bool is_flow(Algo a) {
  return a == Algo::sgf || a == Algo::sgf_label_noise || a == Algo::sgf_general || a == Algo::sgf_depth_p;
}

void DynamicsConfig::validate(const Dataset& data) const {
  data.validate();
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw ConfigError("gamma must be positive and finite");
  if (dt && (!(*dt > 0.0) || !std::isfinite(*dt))) throw ConfigError("dt must be positive and finite");
  if (static_cast<std::size_t>(alpha.size()) != data.d()) {
    throw ConfigError("alpha has length " + std::to_string(alpha.size()) + ", expected d = " +
                      std::to_string(data.d()));
  }
  if (!(alpha.array() > 0.0).all() || !alpha.allFinite()) throw ConfigError("alpha must be positive and finite");
  if (depth < 2) throw ConfigError("depth must be >= 2");
  if (depth != 2 && algo != Algo::sgf_depth_p) throw ConfigError("depth != 2 requires algo sgf_depth_p");
  if (batch_size < 1 || batch_size > data.n()) throw ConfigError("batch_size must be in [1, n]");
  if (max_steps < 0) throw ConfigError("max_steps must be >= 0");
  if (!(loss_tol >= 0.0)) throw ConfigError("loss_tol must be >= 0");
  if (record_every < 1) throw ConfigError("record_every must be >= 1");
  const bool wants_noise = algo == Algo::sgd_label_noise || algo == Algo::sgf_label_noise;
  if (wants_noise && !label_noise) throw ConfigError(std::string(to_string(algo)) + " requires a label-noise schedule");
  if (label_noise && !(label_noise->delta >= 0.0)) throw ConfigError("label-noise delta must be >= 0");
}

double effective_step_size(double gamma, std::size_t b, std::size_t n, Sampling sampling) {
  if (b < 1 || b > n) throw ConfigError("effective_step_size: need 1 <= b <= n");
  if (b == 1) return gamma;
  const double bd = static_cast<double>(b);
  if (sampling == Sampling::with_replacement) return gamma / bd;
  const double nd = static_cast<double>(n);
  return gamma * (nd - bd) / ((nd - 1.0) * bd);
}

namespace {

constexpr double kDivergenceLoss = 1e12;
constexpr int kMaxHalvings = 20;

double ipow(double x, int p) {
  if (p == 0) return 1.0;
  double r = x;
  for (int k = 1; k < p; ++k) r *= x;
  return r;
}

double drift_coef(int p, double dt, double count) { return 0.5 * p * dt / count; }

// r = X beta - y; returns L.
double residual_loss(std::span<const double> rows, std::span<const double> y, std::size_t n, std::size_t d,
                     std::span<const double> beta, std::span<double> r, const simd::KernelTable& k) {
  simd::residual(rows, n, d, beta, y, r, k);
  return k.dot(r.data(), r.data(), n) / (4.0 * static_cast<double>(n));
}

// v_i = -(c r_i) + amp_i * noise_i
void flow_coefficients(std::span<const double> r, double c, std::span<const double> amp, bool per_sample,
                       std::span<const double> noise, std::span<double> v) {
  for (std::size_t i = 0; i < r.size(); ++i) v[i] = -(c * r[i]) + (per_sample ? amp[i] : amp[0]) * noise[i];
}

class Engine {
 public:
  Engine(const Dataset& data, const DynamicsConfig& cfg, StepObserver* observer)
      : data_(data),
        cfg_(cfg),
        observer_(observer),
        k_(simd::kernels()),
        n_(data.n()),
        d_(data.d()),
        p_(cfg.depth),
        rows_(data.X.data(), data.n() * data.d()),
        y_(data.y.data(), data.n()),
        batch_rng_(cfg.seed, "dynamics.batch"),
        label_rng_(cfg.seed, "dynamics.label_noise"),
        brownian_(CounterRng(cfg.seed, "dynamics.brownian")) {
    cfg_.validate(data_);
    wp_.assign(cfg.alpha.data(), cfg.alpha.data() + d_);
    wm_ = wp_;
    beta_.resize(d_);
    for (std::size_t j = 0; j < d_; ++j) beta_[j] = ipow(wp_[j], p_) - ipow(wm_[j], p_);
    r_.resize(n_);
    v_.resize(n_);
    a_.resize(d_);
    z_.resize(n_);
    noise_.resize(n_);
    counts_.resize(n_);
    dsum_.resize(n_);
    perm_.resize(n_);
    std::iota(perm_.begin(), perm_.end(), std::size_t{0});
    flow_ = is_flow(cfg.algo);
    general_ = cfg.algo == Algo::sgf_general;
    depth_path_ = cfg.algo == Algo::sgf_depth_p;
    if (flow_) eta_.assign(n_, 0.0);
    if (general_) {
      li_.resize(n_);
      li_int_.assign(n_, 0.0);
      amp_.resize(n_);
    } else {
      amp_.resize(1);
    }
    if (depth_path_) {
      tp_.resize(d_);
      tm_.resize(d_);
      tb_.resize(d_);
      aux_p_.assign(d_, 0.0);
      aux_m_.assign(d_, 0.0);
      fp_.resize(d_);
      fm_.resize(d_);
    }
  }

  Trajectory run() {
    refresh();
    update_aux_integrands();
    traj_.algo = cfg_.algo;
    record();
    if (!std::isfinite(loss_) || loss_ > kDivergenceLoss) {
      traj_.status = Status::diverged;
      return finish();
    }
    if (converged()) {
      traj_.status = Status::converged;
      return finish();
    }
    traj_.status = Status::max_steps;
    while (step_ < cfg_.max_steps) {
      const double loss_before = loss_;
      if (!advance()) {
        traj_.status = Status::diverged;
        break;
      }
      if (!std::isfinite(loss_) || loss_ > kDivergenceLoss) {
        traj_.status = Status::diverged;
        break;
      }
      if (cfg_.algo == Algo::gd && loss_ > loss_before * (1.0 + 1e-12)) traj_.dt_too_large = true;
      if (step_ % cfg_.record_every == 0) record();
      if (converged()) {
        traj_.status = Status::converged;
        break;
      }
    }
    return finish();
  }

 private:
  double delta_at(long step) const { return cfg_.label_noise ? cfg_.label_noise->at(step) : 0.0; }

  bool converged() const { return loss_ <= cfg_.loss_tol && delta_at(step_) == 0.0; }

  void refresh() {
    loss_ = residual_loss(rows_, y_, n_, d_, beta_, r_, k_);
    if (general_) {
      for (std::size_t i = 0; i < n_; ++i) li_[i] = 0.25 * r_[i] * r_[i];
    }
  }

  void update_aux_integrands() {
    if (!depth_path_) return;
    for (std::size_t j = 0; j < d_; ++j) {
      fp_[j] = loss_ * ipow(wp_[j], p_ - 2);
      fm_[j] = loss_ * ipow(wm_[j], p_ - 2);
    }
  }

  // One integrator step; false if the depth-p positivity retry gave up.
  bool advance() {
    const double loss_old = loss_;
    const double delta = delta_at(step_);
    double h = cfg_.algo == Algo::sgd || cfg_.algo == Algo::sgd_label_noise ? cfg_.gamma : cfg_.step_dt();
    double noise_loss = 0.0;

    std::vector<double> li_old;
    if (general_) li_old = li_;

    if (cfg_.algo == Algo::gd) {
      const double c = drift_coef(p_, h, static_cast<double>(n_));
      for (std::size_t i = 0; i < n_; ++i) v_[i] = -(c * r_[i]);
      notify(h, {}, 0.0);
      apply_pair();
    } else if (!flow_) {
      sgd_coefficients(delta);
      notify(h, {}, 0.0);
      apply_pair();
    } else {
      noise_loss = loss_ + delta * delta;
      if (general_) {
        for (std::size_t i = 0; i < n_; ++i) amp_[i] = 2.0 * std::sqrt(cfg_.gamma * li_[i] / static_cast<double>(n_));
      } else {
        amp_[0] = 2.0 * std::sqrt(cfg_.gamma * noise_loss / static_cast<double>(n_));
      }
      brownian_.fill(z_.data(), n_, 1.0);
      if (!depth_path_) {
        scale_noise(h);
        flow_coefficients(r_, drift_coef(p_, h, static_cast<double>(n_)), amp_, general_, noise_, v_);
        notify(h, noise_, noise_loss);
        update_eta(h, noise_loss);
        apply_pair();
      } else {
        int halvings = 0;
        for (;;) {
          scale_noise(h);
          flow_coefficients(r_, drift_coef(p_, h, static_cast<double>(n_)), amp_, false, noise_, v_);
          if (try_depth_p()) break;
          if (halvings == kMaxHalvings) return false;
          ++halvings;
          h *= 0.5;
        }
        traj_.dt_halvings += halvings;
        notify(h, noise_, noise_loss);
        update_eta(h, noise_loss);
        wp_.swap(tp_);
        wm_.swap(tm_);
        beta_.swap(tb_);
      }
    }

    refresh();
    const double half_h = 0.5 * h;
    loss_int_ += half_h * (loss_old + loss_);
    loss_tilde_int_ += half_h * (loss_old + loss_) + h * delta * delta;
    if (general_) {
      for (std::size_t i = 0; i < n_; ++i) li_int_[i] += half_h * (li_old[i] + li_[i]);
    }
    if (depth_path_) {
      for (std::size_t j = 0; j < d_; ++j) {
        const double fp_new = loss_ * ipow(wp_[j], p_ - 2);
        const double fm_new = loss_ * ipow(wm_[j], p_ - 2);
        aux_p_[j] += half_h * (fp_[j] + fp_new);
        aux_m_[j] += half_h * (fm_[j] + fm_new);
        fp_[j] = fp_new;
        fm_[j] = fm_new;
      }
    }
    ++step_;
    time_ += h;
    return true;
  }

  void scale_noise(double h) {
    const double s = std::sqrt(h);
    for (std::size_t i = 0; i < n_; ++i) noise_[i] = s * z_[i];
  }

  // Batch-mean multiplicative gradient; duplicates (with replacement) count
  // with multiplicity. Label noise adds an independent +-2 delta per draw.
  void sgd_coefficients(double delta) {
    const std::size_t b = cfg_.batch_size;
    std::fill(counts_.begin(), counts_.end(), 0.0);
    std::fill(dsum_.begin(), dsum_.end(), 0.0);
    auto label_shift = [&]() { return (label_rng_() & 1U) != 0U ? 2.0 * delta : -2.0 * delta; };
    if (cfg_.sampling == Sampling::with_replacement) {
      for (std::size_t k = 0; k < b; ++k) {
        const auto i = static_cast<std::size_t>(batch_rng_.below(n_));
        counts_[i] += 1.0;
        if (delta != 0.0) dsum_[i] += label_shift();
      }
    } else {
      for (std::size_t k = 0; k < b; ++k) {
        const std::size_t pick = k + static_cast<std::size_t>(batch_rng_.below(n_ - k));
        std::swap(perm_[k], perm_[pick]);
        counts_[perm_[k]] = 1.0;
        if (delta != 0.0) dsum_[perm_[k]] += label_shift();
      }
    }
    const double c = drift_coef(p_, cfg_.gamma, static_cast<double>(b));
    for (std::size_t i = 0; i < n_; ++i) {
      v_[i] = counts_[i] == 0.0 ? 0.0 : -(c * r_[i]) * counts_[i] - c * dsum_[i];
    }
  }

  void update_eta(double h, double noise_loss) {
    const double sqrt_n = std::sqrt(static_cast<double>(n_));
    for (std::size_t i = 0; i < n_; ++i) {
      const double amp = 2.0 * std::sqrt(cfg_.gamma * (general_ ? li_[i] : noise_loss));
      eta_[i] += -(r_[i] * h) / sqrt_n + amp * noise_[i];
    }
  }

  void apply_pair() {
    simd::transpose_apply(rows_, n_, d_, v_, a_, k_);
    k_.pair_update(wp_.data(), wm_.data(), a_.data(), beta_.data(), d_);
  }

  // Trial step into tp_/tm_/tb_; false if any weight leaves (0, inf).
  bool try_depth_p() {
    simd::transpose_apply(rows_, n_, d_, v_, a_, k_);
    tp_ = wp_;
    tm_ = wm_;
    if (p_ == 2) {
      k_.pair_update(tp_.data(), tm_.data(), a_.data(), tb_.data(), d_);
    } else {
      for (std::size_t j = 0; j < d_; ++j) {
        tp_[j] += ipow(wp_[j], p_ - 1) * a_[j];
        tm_[j] -= ipow(wm_[j], p_ - 1) * a_[j];
        tb_[j] = ipow(tp_[j], p_) - ipow(tm_[j], p_);
      }
    }
    for (std::size_t j = 0; j < d_; ++j) {
      if (!(tp_[j] > 0.0) || !(tm_[j] > 0.0) || !std::isfinite(tp_[j]) || !std::isfinite(tm_[j])) return false;
    }
    return true;
  }

  void notify(double h, std::span<const double> noise, double noise_loss) {
    if (observer_ == nullptr) return;
    observer_->on_step(StepView{step_, time_, h, beta_, loss_, loss_int_, r_, noise, noise_loss});
  }

  static Vector to_vector(const std::vector<double>& v) {
    return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
  }

  void record() {
    Record rec;
    rec.step = step_;
    rec.time = time_;
    rec.beta = to_vector(beta_);
    rec.loss = loss_;
    rec.loss_integral = loss_int_;
    if (depth_path_) {
      rec.aux_plus = to_vector(aux_p_);
      rec.aux_minus = to_vector(aux_m_);
    }
    if (flow_) rec.eta = to_vector(eta_);
    if (data_.beta_l0) rec.val_loss = (rec.beta - *data_.beta_l0).squaredNorm();
    traj_.records.push_back(std::move(rec));
  }

  Trajectory finish() {
    if (traj_.records.empty() || traj_.records.back().step != step_) record();
    if (observer_ != nullptr) {
      observer_->on_finish(StepView{step_, time_, 0.0, beta_, loss_, loss_int_, r_, {}, 0.0});
    }
    traj_.terminal = WeightState{to_vector(wp_), to_vector(wm_), p_};
    traj_.steps = step_;
    traj_.time = time_;
    traj_.final_loss = loss_;
    traj_.loss_integral = loss_int_;
    traj_.loss_tilde_integral = loss_tilde_int_;
    if (general_) traj_.per_sample_integral = to_vector(li_int_);
    if (depth_path_) {
      traj_.aux_plus = to_vector(aux_p_);
      traj_.aux_minus = to_vector(aux_m_);
    }
    if (flow_) traj_.eta = to_vector(eta_);
    return std::move(traj_);
  }

  const Dataset& data_;
  DynamicsConfig cfg_;
  StepObserver* observer_;
  const simd::KernelTable& k_;
  std::size_t n_, d_;
  int p_;
  std::span<const double> rows_, y_;
  CounterRng batch_rng_, label_rng_;
  GaussianSource brownian_;
  bool flow_ = false, general_ = false, depth_path_ = false;

  std::vector<double> wp_, wm_, beta_, r_, v_, a_, z_, noise_, counts_, dsum_;
  std::vector<std::size_t> perm_;
  std::vector<double> eta_, li_, li_int_, amp_;
  std::vector<double> tp_, tm_, tb_, aux_p_, aux_m_, fp_, fm_;

  long step_ = 0;
  double time_ = 0.0;
  double loss_ = 0.0;
  double loss_int_ = 0.0;
  double loss_tilde_int_ = 0.0;
  Trajectory traj_;
};

void require_algo(const DynamicsConfig& cfg, Algo expected) {
  if (cfg.algo != expected) {
    throw ConfigError("config.algo is " + std::string(to_string(cfg.algo)) + ", expected " +
                      std::string(to_string(expected)));
  }
}

}  // namespace

Trajectory run(const Dataset& data, const DynamicsConfig& config, StepObserver* observer) {
  return Engine(data, config, observer).run();
}

Trajectory run_gd(const Dataset& data, const DynamicsConfig& config) {
  require_algo(config, Algo::gd);
  return run(data, config);
}

Trajectory run_sgd(const Dataset& data, const DynamicsConfig& config) {
  require_algo(config, Algo::sgd);
  return run(data, config);
}

Trajectory run_sgf(const Dataset& data, const DynamicsConfig& config, StepObserver* observer) {
  require_algo(config, Algo::sgf);
  return run(data, config, observer);
}

Trajectory run_sgd_label_noise(const Dataset& data, const DynamicsConfig& config) {
  require_algo(config, Algo::sgd_label_noise);
  return run(data, config);
}

Trajectory run_sgf_label_noise(const Dataset& data, const DynamicsConfig& config) {
  require_algo(config, Algo::sgf_label_noise);
  return run(data, config);
}

Trajectory run_sgf_general(const Dataset& data, const DynamicsConfig& config) {
  require_algo(config, Algo::sgf_general);
  return run(data, config);
}

Trajectory run_sgf_depth_p(const Dataset& data, const DynamicsConfig& config) {
  require_algo(config, Algo::sgf_depth_p);
  return run(data, config);
}

WeightState sgf_step(const WeightState& state, const Dataset& data, double gamma, double dt,
                     std::span<const double> noise) {
  state.validate();
  data.validate();
  if (state.depth != 2) throw ConfigError("sgf_step: depth-2 state required");
  const std::size_t n = data.n();
  const std::size_t d = data.d();
  if (static_cast<std::size_t>(state.w_plus.size()) != d) throw ConfigError("sgf_step: state length differs from d");
  if (noise.size() != n) throw ConfigError("sgf_step: noise must have length n");
  const auto& k = simd::kernels();
  std::span<const double> rows(data.X.data(), n * d);
  std::span<const double> y(data.y.data(), n);

  std::vector<double> wp(state.w_plus.data(), state.w_plus.data() + d);
  std::vector<double> wm(state.w_minus.data(), state.w_minus.data() + d);
  std::vector<double> beta(d), r(n), v(n), a(d);
  for (std::size_t j = 0; j < d; ++j) beta[j] = ipow(wp[j], 2) - ipow(wm[j], 2);
  const double loss = residual_loss(rows, y, n, d, beta, r, k);
  const double amp = 2.0 * std::sqrt(gamma * loss / static_cast<double>(n));
  flow_coefficients(r, drift_coef(2, dt, static_cast<double>(n)), std::span<const double>(&amp, 1), false, noise, v);
  simd::transpose_apply(rows, n, d, v, a, k);
  k.pair_update(wp.data(), wm.data(), a.data(), beta.data(), d);
  return WeightState{Eigen::Map<const Vector>(wp.data(), static_cast<Eigen::Index>(d)),
                     Eigen::Map<const Vector>(wm.data(), static_cast<Eigen::Index>(d)), 2};
}

}  // namespace dln
