#pragma once

// Experiment presets. Each preset takes a fixed dataset and a seed list; the
// seeds drive the dynamics only. Results come back as a RunReport whose rows
// are sorted (group, seed), so permuting the seed list does not change it.
//
// Output layout under <out>/<preset>/:
//   manifest.json  report.json  rows.csv  [sweep.csv] [curves.csv] [*.svg]
//   <seed>/trajectory.csv (main algorithm), <seed>/trajectory_<algo>.csv

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dln/dynamics.hpp"
#include "dln/harness/io.hpp"
#include "dln/model.hpp"

namespace dln::harness {

enum class Preset {
  fig1_generalization,
  fig_main_theorem,
  sde_validation,
  gd_from_alpha_eff,
  label_noise,
  alpha_sweep,
  depth_p_demo,
};

std::string_view to_string(Preset p);
Preset parse_preset(std::string_view s);  // ConfigError on unknown names

struct PresetOptions {
  std::optional<double> gamma;  // set: skip the search and use this value
  long probe_steps = 20'000;    // budget of one divergence probe
  int max_doublings = 48;
  int max_halvings = 8;
  double dt_div = 10.0;         // flows run at dt = gamma / dt_div
  LabelNoise label_noise{1.0, 1000};
  std::vector<double> alphas{0.2, 0.1, 0.05, 0.02};
  int grid_points = 100;
  double sde_gamma_fraction = 0.25;  // sde_validation: share of the searched gamma
  bool path_monitor = true;  // fig_main_theorem: online event-A, U and xi checks
  bool write_trajectories = true;
  bool dump_state = false;
  bool svg = false;
};

struct ExperimentSpec {
  Preset preset = Preset::fig1_generalization;
  DynamicsConfig base;
  std::vector<std::uint64_t> seeds;
  std::filesystem::path output_dir;
  io::DatasetMeta data;  // dataset generated from this
  PresetOptions options;
};

// Paper-scale defaults (n = 40, d = 100, s = 5 except depth_p_demo).
ExperimentSpec default_spec(Preset p);

struct SeedRow {
  std::uint64_t seed = 0;
  std::string algo;
  double alpha = 0.0;  // initial scale (geometric mean if not constant)
  double gamma = 0.0;
  Status status = Status::max_steps;
  long steps = 0;
  double final_loss = 0.0;
  std::optional<double> final_val_loss;
  double loss_integral = 0.0;
  double alpha_eff_geo_mean = 0.0;
  std::optional<double> kkt_residual;  // only for converged runs
  std::map<std::string, double> extra;
};

struct RunReport {
  std::string preset;
  std::vector<SeedRow> rows;
  nlohmann::json aggregates;
  nlohmann::json checks;
  nlohmann::json manifest;
  std::vector<std::string> warnings;
  std::map<std::string, std::string> files;  // relative path -> content
  bool diverged = false;                      // some reported run diverged
};

struct Quantiles {
  double q25 = 0.0;
  double median = 0.0;
  double q75 = 0.0;
  std::size_t count = 0;
};

// Linear interpolation between order statistics. Empty input gives NaNs.
Quantiles quantiles(std::vector<double> values);

// Median/quartiles of every numeric column per (algo, alpha), using converged rows.
nlohmann::json aggregate_rows(const std::vector<SeedRow>& rows);

// Doubling search: gamma_k = start * 2^k is probed with short runs until some
// run diverges; then gamma_div / 2, / 4, ... are run in full and the first
// value at which every run converges is taken. Deterministic algorithms run once.
struct GammaSearch {
  double start = 0.0;
  std::optional<double> diverged_at;
  double chosen = 0.0;
  bool all_converged = false;
  nlohmann::json log = nlohmann::json::array();
  // Full runs at the chosen gamma, keyed by (variant index, seed).
  std::map<std::pair<std::size_t, std::uint64_t>, Trajectory> runs;
};

GammaSearch search_gamma(const Dataset& data, const std::vector<DynamicsConfig>& variants,
                         const std::vector<std::uint64_t>& seeds, double start, const PresetOptions& options);

RunReport preset_fig1_generalization(const Dataset& data, const DynamicsConfig& config,
                                     const std::vector<std::uint64_t>& seeds, const PresetOptions& options = {});
RunReport preset_fig_main_theorem(const Dataset& data, const DynamicsConfig& config,
                                  const std::vector<std::uint64_t>& seeds, const PresetOptions& options = {});
RunReport preset_sde_validation(const Dataset& data, const DynamicsConfig& config,
                                const std::vector<std::uint64_t>& seeds, const PresetOptions& options = {});
RunReport preset_gd_from_alpha_eff(const Dataset& data, const DynamicsConfig& config,
                                   const std::vector<std::uint64_t>& seeds, const PresetOptions& options = {});
RunReport preset_label_noise(const Dataset& data, const DynamicsConfig& config,
                             const std::vector<std::uint64_t>& seeds, const PresetOptions& options = {});
RunReport preset_alpha_sweep(const Dataset& data, const DynamicsConfig& base_config, const std::vector<double>& alphas,
                             const std::vector<std::uint64_t>& seeds, const PresetOptions& options = {});
RunReport preset_depth_p_demo(const Dataset& data, const DynamicsConfig& config,
                              const std::vector<std::uint64_t>& seeds, const PresetOptions& options = {});

// Generates the dataset, runs the preset and fills the manifest.
RunReport run_experiment(const ExperimentSpec& spec);
RunReport run_experiment(const ExperimentSpec& spec, const Dataset& data);

nlohmann::json report_json(const RunReport& report);
std::string rows_csv(const std::vector<SeedRow>& rows);
// Writes every file of the report under dir / report.preset.
void write_report(const RunReport& report, const std::filesystem::path& dir);

struct SvgSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};
// Self-contained line chart; log10 of y when log_y (non-positive values skipped).
std::string svg_line_chart(const std::string& title, const std::vector<SvgSeries>& series, bool log_y);

}  // namespace dln::harness
