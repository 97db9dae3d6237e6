#pragma once

// Training dynamics of diagonal linear networks: GD, mini-batch SGD, the
// stochastic gradient flow (Euler-Maruyama) and its variants.
//
// All drivers share one fused update. With r = X beta - y and a coefficient
// vector v in R^n,
//
//   a = X^T v,   w_+ += w_+^{p-1} * a,   w_- -= w_-^{p-1} * a,
//
// where v = -(p/2)(dt/n) r for the drift and, for the flows, the diffusion
// adds 2 sqrt(gamma L / n) dB with dB ~ N(0, dt I_n). The same dB drives both
// halves. SGD uses v_i = -(gamma/b) r_i on the sampled rows.

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "dln/model.hpp"

namespace dln {

enum class Algo { gd, sgd, sgf, sgd_label_noise, sgf_label_noise, sgf_general, sgf_depth_p };
enum class Sampling { with_replacement, without_replacement };
enum class Status { converged, max_steps, diverged };

std::string_view to_string(Algo a);
std::string_view to_string(Sampling s);
std::string_view to_string(Status s);
Algo parse_algo(std::string_view s);
Sampling parse_sampling(std::string_view s);

bool is_flow(Algo a);

struct LabelNoise {
  double delta = 0.0;
  long cutoff_step = 0;  // delta applies while step <= cutoff_step

  double at(long step) const { return step <= cutoff_step ? delta : 0.0; }
};

struct DynamicsConfig {
  Algo algo = Algo::gd;
  double gamma = 0.01;
  std::optional<double> dt;  // integrator step; defaults to gamma
  Vector alpha;
  int depth = 2;
  std::size_t batch_size = 1;
  Sampling sampling = Sampling::with_replacement;
  std::optional<LabelNoise> label_noise;
  long max_steps = 1'000'000;
  double loss_tol = 1e-10;
  std::uint64_t seed = 0;
  long record_every = 1000;

  double step_dt() const { return dt.value_or(gamma); }
  // Throws ConfigError.
  void validate(const Dataset& data) const;
};

struct Record {
  long step = 0;
  double time = 0.0;
  Vector beta;
  double loss = 0.0;
  double loss_integral = 0.0;
  Vector aux_plus;   // depth p: int L w_+^{p-2} ds
  Vector aux_minus;  // depth p: int L w_-^{p-2} ds
  Vector eta;        // flows: eta_t of the closed form
  std::optional<double> val_loss;
};

struct Trajectory {
  Algo algo = Algo::gd;
  std::vector<Record> records;
  WeightState terminal;
  Status status = Status::max_steps;
  long steps = 0;
  double time = 0.0;
  double final_loss = 0.0;
  double loss_integral = 0.0;
  double loss_tilde_integral = 0.0;  // int (L + delta_t^2) ds, label-noise flow
  Vector per_sample_integral;        // int L_i ds, general flow
  Vector aux_plus;
  Vector aux_minus;
  Vector eta;
  bool dt_too_large = false;  // GD loss increased at some step
  long dt_halvings = 0;       // depth-p positivity retries
};

// State seen by an observer before each step, together with the increment
// about to be applied. `noise` is the Brownian increment (empty for GD/SGD).
// After the last step on_finish receives the terminal state with empty noise.
struct StepView {
  long step;
  double time;
  double dt;
  std::span<const double> beta;
  double loss;
  double loss_integral;
  std::span<const double> residual;
  std::span<const double> noise;
  double noise_loss;  // L (or L + delta^2) used in the diffusion amplitude
};

class StepObserver {
 public:
  virtual ~StepObserver() = default;
  virtual void on_step(const StepView& view) = 0;
  virtual void on_finish(const StepView& view) { (void)view; }
};

// Dispatches on config.algo.
Trajectory run(const Dataset& data, const DynamicsConfig& config, StepObserver* observer = nullptr);

Trajectory run_gd(const Dataset& data, const DynamicsConfig& config);
Trajectory run_sgd(const Dataset& data, const DynamicsConfig& config);
Trajectory run_sgf(const Dataset& data, const DynamicsConfig& config, StepObserver* observer = nullptr);
Trajectory run_sgd_label_noise(const Dataset& data, const DynamicsConfig& config);
Trajectory run_sgf_label_noise(const Dataset& data, const DynamicsConfig& config);
Trajectory run_sgf_general(const Dataset& data, const DynamicsConfig& config);
Trajectory run_sgf_depth_p(const Dataset& data, const DynamicsConfig& config);

// gamma/b with replacement, gamma (n-b)/((n-1) b) without.
double effective_step_size(double gamma, std::size_t b, std::size_t n, Sampling sampling);

// One Euler-Maruyama step of the depth-2 flow with a given Brownian increment.
WeightState sgf_step(const WeightState& state, const Dataset& data, double gamma, double dt,
                     std::span<const double> noise);

}  // namespace dln
