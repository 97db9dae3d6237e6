#include "dln/harness/cli.hpp"

#include <cmath>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dln/bias.hpp"
#include "dln/diagnostics.hpp"
#include "dln/dynamics.hpp"
#include "dln/errors.hpp"
#include "dln/harness/io.hpp"
#include "dln/harness/presets.hpp"
#include "dln/model.hpp"

namespace dln {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr int kOk = 0;
constexpr int kSolverFailure = 1;
constexpr int kDiverged = 2;
constexpr int kConfigError = 3;

struct DataFlags {
  std::optional<std::string> dir;
  std::size_t n = 40;
  std::size_t d = 100;
  std::size_t s = 5;
  std::uint64_t seed = 1;
};

void add_data_flags(CLI::App* app, DataFlags& f, bool generated_defaults) {
  app->add_option("--data", f.dir, "Dataset directory written by `generate`");
  if (generated_defaults) {
    app->add_option("--n", f.n, "Samples when generating");
    app->add_option("--d", f.d, "Dimension when generating");
    app->add_option("--s", f.s, "Sparsity when generating");
    app->add_option("--data-seed", f.seed, "Seed of the generated dataset");
  }
}

Dataset load_data(const DataFlags& f, io::DatasetMeta& meta) {
  if (f.dir) {
    const auto j = json::parse(io::read_text(fs::path(*f.dir) / "dataset.json"));
    meta = io::DatasetMeta{j.at("n").get<std::size_t>(), j.at("d").get<std::size_t>(), j.at("s").get<std::size_t>(),
                           j.at("seed").get<std::uint64_t>()};
    return io::read_dataset(*f.dir);
  }
  meta = io::DatasetMeta{f.n, f.d, f.s, f.seed};
  return generate_sparse_regression(f.n, f.d, f.s, f.seed);
}

// Dynamics flags; each one overrides the config file only when given.
struct DynFlags {
  std::optional<std::string> config;
  std::optional<std::string> algo;
  std::optional<double> gamma;
  std::optional<double> dt;
  std::optional<double> dt_div;
  std::optional<std::string> alpha;
  std::optional<int> depth;
  std::optional<std::size_t> batch_size;
  std::optional<std::string> sampling;
  std::optional<double> ln_delta;
  std::optional<long> ln_cutoff;
  std::optional<long> max_steps;
  std::optional<double> loss_tol;
  std::optional<std::uint64_t> seed;
  std::optional<long> record_every;
};

void add_dyn_flags(CLI::App* app, DynFlags& f) {
  app->add_option("--config", f.config, "JSON file with DynamicsConfig fields");
  app->add_option("--algo", f.algo, "gd|sgd|sgf|sgd_label_noise|sgf_label_noise|sgf_general|sgf_depth_p");
  app->add_option("--gamma", f.gamma, "Step size");
  app->add_option("--dt", f.dt, "Integrator step");
  app->add_option("--dt-div", f.dt_div, "Integrator step as gamma / value");
  app->add_option("--alpha", f.alpha, "Initialization scale, or a CSV file with d entries");
  app->add_option("--depth", f.depth, "Network depth p");
  app->add_option("--batch-size", f.batch_size, "Mini-batch size");
  app->add_option("--sampling", f.sampling, "with_replacement|without_replacement");
  app->add_option("--label-noise-delta", f.ln_delta, "Label-noise amplitude");
  app->add_option("--label-noise-cutoff", f.ln_cutoff, "Last step with label noise");
  app->add_option("--max-steps", f.max_steps, "Step budget");
  app->add_option("--loss-tol", f.loss_tol, "Stop when the loss falls to this value");
  app->add_option("--seed", f.seed, "Dynamics seed");
  app->add_option("--record-every", f.record_every, "Record stride");
}

DynamicsConfig build_config(const DynFlags& f, DynamicsConfig cfg, std::size_t d) {
  if (f.config) cfg = io::config_from_json(json::parse(io::read_text(*f.config)), cfg, d);
  if (f.algo) cfg.algo = parse_algo(*f.algo);
  if (f.gamma) cfg.gamma = *f.gamma;
  if (f.dt && f.dt_div) throw ConfigError("--dt and --dt-div are exclusive");
  if (f.dt) cfg.dt = *f.dt;
  if (f.dt_div) {
    if (!(*f.dt_div > 0.0)) throw ConfigError("--dt-div must be positive");
    cfg.dt = cfg.gamma / *f.dt_div;
  }
  if (f.alpha) cfg.alpha = io::parse_alpha(*f.alpha, d);
  if (f.depth) cfg.depth = *f.depth;
  if (f.batch_size) cfg.batch_size = *f.batch_size;
  if (f.sampling) cfg.sampling = parse_sampling(*f.sampling);
  if (f.ln_delta || f.ln_cutoff) {
    LabelNoise ln = cfg.label_noise.value_or(LabelNoise{1.0, 1000});
    if (f.ln_delta) ln.delta = *f.ln_delta;
    if (f.ln_cutoff) ln.cutoff_step = *f.ln_cutoff;
    cfg.label_noise = ln;
  }
  if ((cfg.algo == Algo::sgd_label_noise || cfg.algo == Algo::sgf_label_noise) && !cfg.label_noise) {
    cfg.label_noise = LabelNoise{1.0, 1000};
  }
  if (f.max_steps) cfg.max_steps = *f.max_steps;
  if (f.loss_tol) cfg.loss_tol = *f.loss_tol;
  if (f.seed) cfg.seed = *f.seed;
  if (f.record_every) cfg.record_every = *f.record_every;
  if (cfg.alpha.size() == 0) throw ConfigError("alpha is required (--alpha or config)");
  return cfg;
}

json vec_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::vector<std::uint64_t> parse_seeds(const std::string& spec) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      const auto dash = item.find('-');
      if (dash != std::string::npos && dash > 0) {
        const auto lo = std::stoull(item.substr(0, dash));
        const auto hi = std::stoull(item.substr(dash + 1));
        if (hi < lo) throw ConfigError("bad seed range '" + item + "'");
        for (auto s = lo; s <= hi; ++s) out.push_back(s);
      } else {
        out.push_back(std::stoull(item));
      }
    } catch (const std::logic_error&) {
      throw ConfigError("bad seed list entry '" + item + "'");
    }
  }
  if (out.empty()) throw ConfigError("empty seed list");
  return out;
}

std::vector<double> parse_reals(const std::string& spec) {
  std::vector<double> out;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      out.push_back(std::stod(item));
    } catch (const std::logic_error&) {
      throw ConfigError("bad number '" + item + "'");
    }
  }
  return out;
}

int cmd_generate(const DataFlags& f, const std::string& out_dir, std::ostream& out) {
  const Dataset data = generate_sparse_regression(f.n, f.d, f.s, f.seed);
  io::write_dataset(out_dir, data, io::DatasetMeta{f.n, f.d, f.s, f.seed});
  out << json({{"out", out_dir}, {"git_blob_sha1", io::git_blob_sha1(io::dataset_csv(data))}}).dump() << "\n";
  return kOk;
}

int cmd_run(const DataFlags& df, const DynFlags& f, const std::optional<std::string>& out_dir, bool dump_state,
            std::ostream& out) {
  io::DatasetMeta meta;
  const Dataset data = load_data(df, meta);
  const DynamicsConfig cfg = build_config(f, DynamicsConfig{}, data.d());
  cfg.validate(data);
  const Trajectory tr = run(data, cfg);
  json summary = {{"algo", std::string(to_string(cfg.algo))},
                  {"status", std::string(to_string(tr.status))},
                  {"steps", tr.steps},
                  {"time", tr.time},
                  {"final_loss", finite_or_null(tr.final_loss)},
                  {"loss_integral", finite_or_null(tr.loss_integral)},
                  {"dt_too_large", tr.dt_too_large},
                  {"dt_halvings", tr.dt_halvings}};
  if (cfg.label_noise) summary["loss_tilde_integral"] = finite_or_null(tr.loss_tilde_integral);
  if (data.beta_l0) summary["final_val_loss"] = finite_or_null(validation_loss(tr.terminal.beta(), data));
  if (out_dir) {
    const fs::path dir(*out_dir);
    io::write_trajectory_csv(dir / "trajectory.csv", tr, dump_state);
    io::write_text(dir / "config.json", io::config_to_json(cfg).dump(2) + "\n");
    io::write_text(dir / "summary.json", summary.dump(2) + "\n");
  }
  out << summary.dump() << "\n";
  return tr.status == Status::diverged ? kDiverged : kOk;
}

int cmd_solve(const DataFlags& df, const std::string& alpha_spec, const std::string& method,
              const std::optional<std::string>& out_file, std::ostream& out) {
  io::DatasetMeta meta;
  const Dataset data = load_data(df, meta);
  Vector beta;
  json summary = {{"method", method}};
  if (method == "entropy") {
    const EntropyParams params{io::parse_alpha(alpha_spec, data.d())};
    const BiasSolution sol = solve_implicit_bias_detailed(data, params);
    beta = sol.beta;
    summary["path"] = std::string(to_string(sol.path));
    summary["iterations"] = sol.iterations;
    summary["kkt_residual"] = kkt_residual(beta, data, params);
  } else if (method == "l1") {
    const L1Solution sol = min_l1_interpolator_detailed(data);
    beta = sol.beta;
    summary["objective"] = sol.objective;
    summary["duality_gap"] = sol.duality_gap;
    summary["pivots"] = sol.pivots;
  } else if (method == "l2") {
    beta = min_l2_interpolator(data);
    summary["objective"] = beta.norm();
  } else {
    throw ConfigError("unknown --method '" + method + "' (entropy, l1, l2)");
  }
  summary["feasibility"] = feasibility_residual(beta, data);
  if (data.beta_l0) summary["val_loss"] = validation_loss(beta, data);
  std::string csv = "j,beta\n";
  for (Eigen::Index j = 0; j < beta.size(); ++j) csv += std::to_string(j) + ',' + io::format_real(beta(j)) + '\n';
  if (out_file) {
    io::write_text(*out_file, csv);
  } else {
    out << csv;
  }
  out << summary.dump() << "\n";
  return kOk;
}

int cmd_diagnose(const DataFlags& df, const DynFlags& f, const std::string& traj_file, double p_fail,
                 const std::optional<std::string>& out_file, std::ostream& out) {
  io::DatasetMeta meta;
  const Dataset data = load_data(df, meta);
  const DynamicsConfig cfg = build_config(f, DynamicsConfig{}, data.d());
  Trajectory tr = io::read_trajectory_csv(traj_file);
  tr.algo = cfg.algo;
  if (tr.records.empty()) throw DiagnosticError("trajectory has no records");
  const Record& last = tr.records.back();
  if (static_cast<std::size_t>(last.beta.size()) != data.d()) {
    throw DiagnosticError("trajectory lacks beta columns; rerun with --dump-state");
  }
  const TheoryContext ctx = TheoryContext::build(data, EntropyParams{cfg.alpha}, p_fail);
  const double gamma = cfg.gamma;
  json report;
  json notes = json::array();

  std::optional<Vector> eff;
  const double dt = cfg.step_dt();
  switch (cfg.algo) {
    case Algo::gd:
      eff = cfg.alpha;
      break;
    case Algo::sgd:
    case Algo::sgf:
      eff = alpha_t(cfg.alpha, gamma, ctx.H_tilde_diag, last.loss_integral).alpha;
      break;
    case Algo::sgd_label_noise:
    case Algo::sgf_label_noise: {
      const LabelNoise ln = cfg.label_noise.value_or(LabelNoise{});
      const double active = static_cast<double>(std::min<long>(last.step, ln.cutoff_step + 1));
      const double h = cfg.algo == Algo::sgd_label_noise ? gamma : dt;
      eff = alpha_t(cfg.alpha, gamma, ctx.H_tilde_diag, last.loss_integral + ln.delta * ln.delta * h * active).alpha;
      break;
    }
    case Algo::sgf_general:
    case Algo::sgf_depth_p:
      notes.push_back("alpha_eff needs per-sample or depth-p integrals that the CSV does not carry");
      break;
  }
  report["algo"] = std::string(to_string(cfg.algo));
  report["alpha_eff"] = eff ? vec_json(*eff) : json(nullptr);
  report["loss_integral"] = last.loss_integral;
  report["final_loss"] = last.loss;
  report["steps"] = last.step;
  report["kkt_residual"] = eff ? json(kkt_residual(last.beta, data, EntropyParams{*eff})) : json(nullptr);
  report["kkt_residual_vs_alpha"] = kkt_residual(last.beta, data, EntropyParams{cfg.alpha});

  json bounds = {{"step_size_bound", step_size_bound(ctx)},
                 {"heuristic_step_size", heuristic_step_size(ctx)},
                 {"gamma_admissible", gamma <= step_size_bound(ctx)},
                 {"xi_l1_bound", boundedness_bound(ctx)},
                 {"V_lower_bound", lyapunov_V_lower_bound(ctx)},
                 {"a", ctx.a},
                 {"b", ctx.b},
                 {"lambda_max", ctx.lambda_max}};
  const bool constant = (cfg.alpha.array() == cfg.alpha(0)).all();
  if (constant) {
    const LossIntegralBounds lib = loss_integral_bounds(ctx, gamma);
    bounds["loss_integral"] = {{"lower", lib.lower},
                               {"lower_small_alpha", lib.lower_small_alpha},
                               {"upper", lib.upper},
                               {"W0_alpha", lib.W0_alpha},
                               {"within", last.loss_integral >= lib.lower && last.loss_integral <= lib.upper}};
  }
  const AlphaRatioBounds arb = alpha_ratio_bounds(ctx, false);
  bounds["alpha_ratio_exp_bound"] = vec_json(arb.exp_bound);
  report["bounds"] = bounds;

  double u_min = std::numeric_limits<double>::infinity();
  double xi_max = 0.0;
  for (const auto& rec : tr.records) {
    if (static_cast<std::size_t>(rec.beta.size()) != data.d()) continue;
    const EntropyParams at = alpha_t(cfg.alpha, gamma, ctx.H_tilde_diag, rec.loss_integral);
    const Vector xi = xi_of(rec.beta, at.alpha);
    u_min = std::min(u_min, weight_U(rec.beta, xi, ctx, gamma));
    xi_max = std::max(xi_max, xi.sum());
  }
  report["U_min"] = finite_or_null(u_min);
  report["xi_l1_max"] = xi_max;
  if (is_flow(cfg.algo)) {
    try {
      const MartingaleReport m = martingale_S_and_eventA(tr, ctx, gamma);
      report["eventA_violated"] = m.violated;
      report["eventA_first_violation_step"] = m.first_violation_step;
    } catch (const DiagnosticError& e) {
      report["eventA_violated"] = nullptr;
      notes.push_back(e.what());
    }
  } else {
    report["eventA_violated"] = nullptr;
    notes.push_back("event A is defined for flows only");
  }
  report["notes"] = notes;
  const std::string text = report.dump(2) + "\n";
  if (out_file) io::write_text(*out_file, text);
  out << text;
  return kOk;
}

struct ExpFlags {
  std::string preset;
  std::optional<std::string> seeds;
  std::optional<std::size_t> n_seeds;
  std::optional<std::string> alphas;
  std::optional<long> probe_steps;
  std::optional<int> grid_points;
  std::optional<double> p_dt_div;
  bool svg = false;
  bool no_trajectories = false;
  bool no_monitor = false;
};

int cmd_experiment(const DataFlags& df, bool data_given, const DynFlags& f, const ExpFlags& e, const std::string& out_dir,
                   bool dump_state, std::ostream& out, std::ostream& err) {
  harness::ExperimentSpec spec = harness::default_spec(harness::parse_preset(e.preset));
  if (data_given) {
    spec.data = io::DatasetMeta{df.n, df.d, df.s, df.seed};
    spec.base.alpha = Vector::Constant(static_cast<Eigen::Index>(df.d), spec.base.alpha(0));
  }
  io::DatasetMeta meta = spec.data;
  Dataset data;
  if (df.dir) {
    data = load_data(df, meta);
    spec.data = meta;
  } else {
    data = generate_sparse_regression(spec.data.n, spec.data.d, spec.data.s, spec.data.seed);
  }
  if (static_cast<std::size_t>(spec.base.alpha.size()) != data.d()) {
    spec.base.alpha = Vector::Constant(static_cast<Eigen::Index>(data.d()), spec.base.alpha(0));
  }
  DynFlags g = f;
  g.dt_div.reset();
  g.gamma.reset();
  spec.base = build_config(g, spec.base, data.d());
  if (f.gamma) spec.options.gamma = *f.gamma;
  if (f.dt_div) spec.options.dt_div = *f.dt_div;
  if (f.ln_delta) spec.options.label_noise.delta = *f.ln_delta;
  if (f.ln_cutoff) spec.options.label_noise.cutoff_step = *f.ln_cutoff;
  if (e.seeds && e.n_seeds) throw ConfigError("--seeds and --n-seeds are exclusive");
  if (e.seeds) spec.seeds = parse_seeds(*e.seeds);
  if (e.n_seeds) {
    spec.seeds.clear();
    for (std::uint64_t s = 1; s <= *e.n_seeds; ++s) spec.seeds.push_back(s);
  }
  if (e.alphas) spec.options.alphas = parse_reals(*e.alphas);
  if (e.probe_steps) spec.options.probe_steps = *e.probe_steps;
  if (e.grid_points) spec.options.grid_points = *e.grid_points;
  spec.options.svg = e.svg;
  spec.options.dump_state = dump_state;
  spec.options.write_trajectories = !e.no_trajectories;
  spec.options.path_monitor = !e.no_monitor;
  spec.output_dir = out_dir;

  const harness::RunReport rep = harness::run_experiment(spec, data);
  harness::write_report(rep, spec.output_dir);
  for (const auto& w : rep.warnings) err << "warning: " << w << "\n";
  out << json({{"preset", rep.preset}, {"checks", rep.checks}, {"out", (spec.output_dir / rep.preset).string()}}).dump()
      << "\n";
  return rep.diverged ? kDiverged : kOk;
}

}  // namespace

int cli_main(int argc, char** argv) { return cli_main(argc, argv, std::cout, std::cerr); }

int cli_main(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Diagonal linear network dynamics lab", "dlnlab"};
  app.require_subcommand(1);

  DataFlags gen;
  std::string gen_out;
  auto* generate = app.add_subcommand("generate", "Write a sparse regression dataset");
  generate->add_option("--n", gen.n, "Samples")->required();
  generate->add_option("--d", gen.d, "Dimension")->required();
  generate->add_option("--s", gen.s, "Sparsity")->required();
  generate->add_option("--seed", gen.seed, "Dataset seed")->required();
  generate->add_option("--out", gen_out, "Output directory")->required();

  DataFlags run_data;
  DynFlags run_dyn;
  std::optional<std::string> run_out;
  bool run_dump = false;
  auto* run_cmd = app.add_subcommand("run", "Simulate one trajectory");
  add_data_flags(run_cmd, run_data, true);
  add_dyn_flags(run_cmd, run_dyn);
  run_cmd->add_option("--out", run_out, "Output directory (trajectory.csv, summary.json)");
  run_cmd->add_flag("--dump-state", run_dump, "Add beta and eta columns");

  DataFlags solve_data;
  std::string solve_alpha = "1";
  std::string solve_method = "entropy";
  std::optional<std::string> solve_out;
  auto* solve = app.add_subcommand("solve", "Implicit-bias and reference interpolators");
  add_data_flags(solve, solve_data, true);
  solve->add_option("--alpha", solve_alpha, "Scale, or CSV with d entries");
  solve->add_option("--method", solve_method, "entropy|l1|l2");
  solve->add_option("--out", solve_out, "CSV file for beta (stdout otherwise)");

  DataFlags diag_data;
  DynFlags diag_dyn;
  std::string diag_traj;
  double p_fail = 0.04;
  std::optional<std::string> diag_out;
  auto* diagnose = app.add_subcommand("diagnose", "Check a trajectory against the theory");
  add_data_flags(diagnose, diag_data, true);
  add_dyn_flags(diagnose, diag_dyn);
  diagnose->add_option("--trajectory", diag_traj, "trajectory.csv written with --dump-state")->required();
  diagnose->add_option("--p-fail", p_fail, "Failure probability p");
  diagnose->add_option("--out", diag_out, "JSON report file");

  DataFlags exp_data;
  DynFlags exp_dyn;
  ExpFlags exp;
  std::string exp_out = "out";
  bool exp_dump = false;
  auto* experiment = app.add_subcommand("experiment", "Run a preset over a seed list");
  experiment->add_option("preset", exp.preset,
                         "fig1_generalization|fig_main_theorem|sde_validation|gd_from_alpha_eff|label_noise|"
                         "alpha_sweep|depth_p_demo")
      ->required();
  add_data_flags(experiment, exp_data, true);
  add_dyn_flags(experiment, exp_dyn);
  experiment->add_option("--seeds,--seed-list", exp.seeds, "Comma list, ranges allowed (1-10)");
  experiment->add_option("--n-seeds", exp.n_seeds, "Use seeds 1..N");
  experiment->add_option("--alphas", exp.alphas, "alpha_sweep grid, comma list");
  experiment->add_option("--probe-steps", exp.probe_steps, "Step budget of a divergence probe");
  experiment->add_option("--grid-points", exp.grid_points, "sde_validation time grid size");
  experiment->add_option("--out", exp_out, "Output root");
  experiment->add_flag("--svg", exp.svg, "Also write SVG charts");
  experiment->add_flag("--dump-state", exp_dump, "Add beta and eta columns to trajectories");
  experiment->add_flag("--no-trajectories", exp.no_trajectories, "Skip per-seed trajectory files");
  experiment->add_flag("--no-monitor", exp.no_monitor, "fig_main_theorem: skip online path checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kConfigError;
  }

  try {
    if (generate->parsed()) return cmd_generate(gen, gen_out, out);
    if (run_cmd->parsed()) return cmd_run(run_data, run_dyn, run_out, run_dump, out);
    if (solve->parsed()) return cmd_solve(solve_data, solve_alpha, solve_method, solve_out, out);
    if (diagnose->parsed()) return cmd_diagnose(diag_data, diag_dyn, diag_traj, p_fail, diag_out, out);
    if (experiment->parsed()) {
      const bool given = experiment->count("--n") + experiment->count("--d") + experiment->count("--s") +
                             experiment->count("--data-seed") >
                         0;
      if (given) {
        const harness::ExperimentSpec def = harness::default_spec(harness::parse_preset(exp.preset));
        if (experiment->count("--n") == 0) exp_data.n = def.data.n;
        if (experiment->count("--d") == 0) exp_data.d = def.data.d;
        if (experiment->count("--s") == 0) exp_data.s = def.data.s;
        if (experiment->count("--data-seed") == 0) exp_data.seed = def.data.seed;
      }
      return cmd_experiment(exp_data, given, exp_dyn, exp, exp_out, exp_dump, out, err);
    }
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    return kConfigError;
  } catch (const DiagnosticError& e) {
    err << "input error: " << e.what() << "\n";
    return kConfigError;
  } catch (const json::exception& e) {
    err << "configuration error: " << e.what() << "\n";
    return kConfigError;
  } catch (const SolverError& e) {
    err << "solver failure: " << e.what() << "\n";
    return kSolverFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kSolverFailure;
  }
  return kConfigError;
}

}  // namespace dln
