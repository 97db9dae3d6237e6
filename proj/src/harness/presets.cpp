#include "dln/harness/presets.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numeric>
#include <set>

#include "dln/bias.hpp"
#include "dln/diagnostics.hpp"
#include "dln/errors.hpp"

namespace dln::harness {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

const std::vector<std::pair<Preset, std::string_view>> kPresetNames = {
    {Preset::fig1_generalization, "fig1_generalization"},
    {Preset::fig_main_theorem, "fig_main_theorem"},
    {Preset::sde_validation, "sde_validation"},
    {Preset::gd_from_alpha_eff, "gd_from_alpha_eff"},
    {Preset::label_noise, "label_noise"},
    {Preset::alpha_sweep, "alpha_sweep"},
    {Preset::depth_p_demo, "depth_p_demo"},
};

double geo_mean(const Vector& v) { return std::exp(v.array().log().mean()); }

bool is_constant(const Vector& v) { return v.size() > 0 && (v.array() == v(0)).all(); }

nlohmann::json opt_json(const std::optional<double>& v) {
  return v && std::isfinite(*v) ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

// Terminal quantities shared by all presets.
class Evaluator {
 public:
  explicit Evaluator(const Dataset& data) : data_(data), H_(h_tilde_diag(data.X)), proj_(data.X) {}

  const Vector& H() const { return H_; }

  SeedRow row(const DynamicsConfig& cfg, const Trajectory& tr) const {
    SeedRow r;
    r.seed = cfg.seed;
    r.algo = std::string(to_string(cfg.algo));
    r.alpha = geo_mean(cfg.alpha);
    r.gamma = cfg.gamma;
    r.status = tr.status;
    r.steps = tr.steps;
    r.final_loss = tr.final_loss;
    const Vector beta = tr.terminal.beta();
    if (data_.beta_l0) r.final_val_loss = validation_loss(beta, data_);
    r.loss_integral = tr.loss_integral;
    r.extra["time"] = tr.time;
    const bool converged = tr.status == Status::converged;

    if (cfg.algo == Algo::sgf_depth_p) {
      const auto [ap, am] = depth_p_alpha_eff(cfg.alpha, cfg.gamma, cfg.depth, H_, tr.aux_plus, tr.aux_minus);
      Vector both(ap.size() + am.size());
      both << ap, am;
      r.alpha_eff_geo_mean = geo_mean(both);
      r.extra["alpha_eff_le_alpha"] = (ap.array() <= cfg.alpha.array()).all() && (am.array() <= cfg.alpha.array()).all();
      r.extra["dt_halvings"] = static_cast<double>(tr.dt_halvings);
      if (converged && (ap.array() > 0.0).all() && (am.array() > 0.0).all()) {
        r.kkt_residual = depth_p_kkt_residual(beta, data_, DepthPPotential(ap, am, cfg.depth));
      }
      return r;
    }

    Vector eff;
    switch (cfg.algo) {
      case Algo::gd:
        eff = cfg.alpha;
        break;
      case Algo::sgd:
        eff = alpha_t(cfg.alpha, effective_step_size(cfg.gamma, cfg.batch_size, data_.n(), cfg.sampling), H_,
                      tr.loss_integral)
                  .alpha;
        break;
      case Algo::sgd_label_noise:
        eff = alpha_t(cfg.alpha, effective_step_size(cfg.gamma, cfg.batch_size, data_.n(), cfg.sampling), H_,
                      tr.loss_tilde_integral)
                  .alpha;
        break;
      case Algo::sgf:
        eff = alpha_t(cfg.alpha, cfg.gamma, H_, tr.loss_integral).alpha;
        break;
      case Algo::sgf_label_noise:
        eff = alpha_t(cfg.alpha, cfg.gamma, H_, tr.loss_tilde_integral).alpha;
        break;
      case Algo::sgf_general:
        eff = alpha_eff_general(cfg.alpha, cfg.gamma, data_.X, tr.per_sample_integral).alpha;
        break;
      case Algo::sgf_depth_p:
        break;
    }
    if (cfg.label_noise) r.extra["loss_tilde_integral"] = tr.loss_tilde_integral;
    r.alpha_eff_geo_mean = geo_mean(eff);
    r.extra["alpha_eff_lt_alpha"] = (eff.array() < cfg.alpha.array()).all();
    if (converged && (eff.array() > 0.0).all()) r.kkt_residual = kkt_residual(beta, proj_, EntropyParams{eff});
    return r;
  }

 private:
  const Dataset& data_;
  Vector H_;
  RowSpaceProjector proj_;
};

DynamicsConfig with_gamma(const DynamicsConfig& v, double gamma) {
  DynamicsConfig c = v;
  if (v.dt) c.dt = gamma * (*v.dt / v.gamma);
  c.gamma = gamma;
  return c;
}

DynamicsConfig with_seed(DynamicsConfig c, std::uint64_t seed) {
  c.seed = seed;
  return c;
}

// Runs every (variant, seed); deterministic variants once. Stops early on the
// first divergence when asked to.
struct Batch {
  bool any_diverged = false;
  bool all_converged = true;
  std::map<std::pair<std::size_t, std::uint64_t>, Trajectory> runs;
};

Batch run_batch(const Dataset& data, const std::vector<DynamicsConfig>& variants,
                const std::vector<std::uint64_t>& seeds, double gamma, std::optional<long> max_steps,
                bool stop_on_divergence) {
  Batch b;
  for (std::size_t vi = 0; vi < variants.size(); ++vi) {
    DynamicsConfig cfg = with_gamma(variants[vi], gamma);
    if (max_steps) {
      cfg.max_steps = *max_steps;
      cfg.record_every = std::max<long>(cfg.record_every, *max_steps);
    }
    const bool deterministic = cfg.algo == Algo::gd;
    for (std::size_t k = 0; k < seeds.size(); ++k) {
      if (deterministic && k > 0) {
        b.runs[{vi, seeds[k]}] = b.runs.at({vi, seeds[0]});
        continue;
      }
      Trajectory tr = run(data, with_seed(cfg, seeds[k]));
      if (tr.status == Status::diverged) b.any_diverged = true;
      // GD only counts when the loss decreased monotonically, i.e. it still tracks the flow.
      if (tr.status != Status::converged || tr.dt_too_large) b.all_converged = false;
      b.runs[{vi, seeds[k]}] = std::move(tr);
      if (b.any_diverged && stop_on_divergence) return b;
    }
  }
  return b;
}

GammaSearch fixed_gamma(const Dataset& data, const std::vector<DynamicsConfig>& variants,
                        const std::vector<std::uint64_t>& seeds, double gamma) {
  GammaSearch s;
  s.start = gamma;
  s.chosen = gamma;
  Batch b = run_batch(data, variants, seeds, gamma, std::nullopt, false);
  s.all_converged = b.all_converged;
  s.runs = std::move(b.runs);
  s.log.push_back({{"gamma", gamma}, {"phase", "fixed"}, {"all_converged", s.all_converged}});
  return s;
}

GammaSearch gamma_for(const Dataset& data, const std::vector<DynamicsConfig>& variants,
                      const std::vector<std::uint64_t>& seeds, double start, const PresetOptions& opt) {
  if (opt.gamma) return fixed_gamma(data, variants, seeds, *opt.gamma);
  return search_gamma(data, variants, seeds, start, opt);
}

nlohmann::json search_json(const GammaSearch& s) {
  return {{"start", s.start},
          {"diverged_at", opt_json(s.diverged_at)},
          {"chosen", s.chosen},
          {"all_converged", s.all_converged},
          {"log", s.log}};
}

std::vector<std::uint64_t> sorted_unique(const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw ConfigError("seed list is empty");
  std::vector<std::uint64_t> out = seeds;
  std::sort(out.begin(), out.end());
  if (std::adjacent_find(out.begin(), out.end()) != out.end()) throw ConfigError("seed list has duplicates");
  return out;
}

double start_gamma(const Dataset& data, const Vector& alpha) {
  return step_size_bound(TheoryContext::build(data, EntropyParams{alpha}));
}

std::vector<double> column(const std::vector<SeedRow>& rows, const std::string& algo,
                           const std::function<std::optional<double>(const SeedRow&)>& get) {
  std::vector<double> out;
  for (const auto& r : rows) {
    if (r.algo != algo || r.status != Status::converged) continue;
    const auto v = get(r);
    if (v && std::isfinite(*v)) out.push_back(*v);
  }
  return out;
}

double median_of(const std::vector<SeedRow>& rows, const std::string& algo,
                 const std::function<std::optional<double>(const SeedRow&)>& get) {
  return quantiles(column(rows, algo, get)).median;
}

std::optional<double> val_of(const SeedRow& r) { return r.final_val_loss; }

void flag_unconverged(RunReport& rep) {
  for (const auto& r : rep.rows) {
    if (r.status == Status::diverged) rep.diverged = true;
    if (r.status != Status::converged) {
      rep.warnings.push_back(r.algo + " seed " + std::to_string(r.seed) + " ended with status " +
                             std::string(to_string(r.status)) + "; excluded from aggregates");
    }
  }
}

void add_trajectory(RunReport& rep, const PresetOptions& opt, std::uint64_t seed, const std::string& name,
                    const Trajectory& tr) {
  if (!opt.write_trajectories) return;
  rep.files[std::to_string(seed) + "/" + name] = io::trajectory_csv(tr, opt.dump_state);
}

std::string curves_csv(const std::vector<std::tuple<std::string, std::uint64_t, const Trajectory*>>& runs) {
  std::string out = "algo,seed,step,time,loss,val_loss\n";
  for (const auto& [algo, seed, tr] : runs) {
    for (const auto& rec : tr->records) {
      out += algo + ',' + std::to_string(seed) + ',' + std::to_string(rec.step) + ',' + io::format_real(rec.time) +
             ',' + io::format_real(rec.loss) + ',' + (rec.val_loss ? io::format_real(*rec.val_loss) : "") + '\n';
    }
  }
  return out;
}

SvgSeries loss_series(const std::string& name, const Trajectory& tr) {
  SvgSeries s{name, {}, {}};
  for (const auto& rec : tr.records) {
    s.x.push_back(rec.time);
    s.y.push_back(rec.loss);
  }
  return s;
}

void finish(RunReport& rep) {
  std::stable_sort(rep.rows.begin(), rep.rows.end(), [](const SeedRow& a, const SeedRow& b) {
    if (a.alpha != b.alpha) return a.alpha > b.alpha;
    if (a.algo != b.algo) return a.algo < b.algo;
    return a.seed < b.seed;
  });
  flag_unconverged(rep);
  rep.aggregates = aggregate_rows(rep.rows);
}

// (time, loss) at every step.
class LossTrace : public StepObserver {
 public:
  void on_step(const StepView& v) override { push(v); }
  void on_finish(const StepView& v) override { push(v); }

  std::vector<double> t;
  std::vector<double> log_loss;

 private:
  void push(const StepView& v) {
    t.push_back(v.time);
    log_loss.push_back(std::log10(std::max(v.loss, 1e-300)));
  }
};

double interp(const LossTrace& tr, double time) {
  const auto it = std::lower_bound(tr.t.begin(), tr.t.end(), time);
  if (it == tr.t.end()) return tr.log_loss.back();
  const auto k = static_cast<std::size_t>(it - tr.t.begin());
  if (k == 0 || *it == time) return tr.log_loss[k];
  const double w = (time - tr.t[k - 1]) / (tr.t[k] - tr.t[k - 1]);
  return (1.0 - w) * tr.log_loss[k - 1] + w * tr.log_loss[k];
}

}  // namespace

std::string_view to_string(Preset p) {
  for (const auto& [k, name] : kPresetNames) {
    if (k == p) return name;
  }
  return "unknown";
}

Preset parse_preset(std::string_view s) {
  for (const auto& [k, name] : kPresetNames) {
    if (name == s) return k;
  }
  throw ConfigError("unknown preset '" + std::string(s) + "'");
}

ExperimentSpec default_spec(Preset p) {
  ExperimentSpec spec;
  spec.preset = p;
  spec.data = io::DatasetMeta{40, 100, 5, 1};
  spec.seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  spec.output_dir = "out";
  DynamicsConfig& c = spec.base;
  c.algo = Algo::sgd;
  c.max_steps = 1'000'000;
  c.loss_tol = 1e-10;
  c.record_every = 100;
  double alpha = 0.05;
  switch (p) {
    case Preset::fig1_generalization:
    case Preset::alpha_sweep:
      break;
    case Preset::fig_main_theorem:
      c.algo = Algo::sgf;
      alpha = 1.0;
      c.max_steps = 200'000'000;
      c.record_every = 100'000;
      spec.data = io::DatasetMeta{10, 20, 3, 1};
      spec.seeds.resize(20);
      std::iota(spec.seeds.begin(), spec.seeds.end(), 1);
      break;
    case Preset::sde_validation:
      spec.seeds = {1, 2, 3, 4, 5};
      break;
    case Preset::gd_from_alpha_eff:
    case Preset::label_noise:
      alpha = 0.01;
      c.max_steps = 5'000'000;
      c.record_every = 1000;
      break;
    case Preset::depth_p_demo:
      c.algo = Algo::sgf_depth_p;
      c.depth = 3;
      alpha = 1.0;
      c.max_steps = 200'000'000;
      c.record_every = 100'000;
      spec.data = io::DatasetMeta{3, 6, 2, 1};
      break;
  }
  c.alpha = Vector::Constant(static_cast<Eigen::Index>(spec.data.d), alpha);
  return spec;
}

Quantiles quantiles(std::vector<double> values) {
  Quantiles q;
  q.count = values.size();
  if (values.empty()) {
    q.q25 = q.median = q.q75 = kNaN;
    return q;
  }
  std::sort(values.begin(), values.end());
  auto at = [&](double p) {
    const double pos = p * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    const double w = pos - static_cast<double>(lo);
    return (1.0 - w) * values[lo] + w * values[hi];
  };
  q.q25 = at(0.25);
  q.median = at(0.5);
  q.q75 = at(0.75);
  return q;
}

nlohmann::json aggregate_rows(const std::vector<SeedRow>& rows) {
  std::vector<std::pair<std::string, double>> groups;
  for (const auto& r : rows) {
    const std::pair<std::string, double> key{r.algo, r.alpha};
    if (std::find(groups.begin(), groups.end(), key) == groups.end()) groups.push_back(key);
  }
  nlohmann::json out = nlohmann::json::array();
  for (const auto& [algo, alpha] : groups) {
    std::map<std::string, std::vector<double>> cols;
    std::size_t total = 0;
    std::size_t converged = 0;
    for (const auto& r : rows) {
      if (r.algo != algo || r.alpha != alpha) continue;
      ++total;
      if (r.status != Status::converged) continue;
      ++converged;
      cols["steps"].push_back(static_cast<double>(r.steps));
      cols["final_loss"].push_back(r.final_loss);
      if (r.final_val_loss) cols["final_val_loss"].push_back(*r.final_val_loss);
      cols["loss_integral"].push_back(r.loss_integral);
      cols["alpha_eff_geo_mean"].push_back(r.alpha_eff_geo_mean);
      if (r.kkt_residual) cols["kkt_residual"].push_back(*r.kkt_residual);
      for (const auto& [k, v] : r.extra) cols[k].push_back(v);
    }
    nlohmann::json metrics = nlohmann::json::object();
    for (auto& [name, vals] : cols) {
      const Quantiles q = quantiles(vals);
      metrics[name] = {{"q25", q.q25}, {"median", q.median}, {"q75", q.q75}, {"count", q.count}};
    }
    out.push_back({{"algo", algo}, {"alpha", alpha}, {"rows", total}, {"converged", converged}, {"metrics", metrics}});
  }
  return out;
}

GammaSearch search_gamma(const Dataset& data, const std::vector<DynamicsConfig>& variants,
                         const std::vector<std::uint64_t>& seeds, double start, const PresetOptions& options) {
  if (!(start > 0.0) || !std::isfinite(start)) throw ConfigError("gamma search needs a positive start");
  if (variants.empty()) throw ConfigError("gamma search needs at least one algorithm");
  GammaSearch s;
  s.start = start;
  double g = start;
  for (int k = 0; k <= options.max_doublings; ++k, g *= 2.0) {
    const Batch b = run_batch(data, variants, seeds, g, options.probe_steps, true);
    s.log.push_back({{"gamma", g}, {"phase", "probe"}, {"diverged", b.any_diverged}});
    if (b.any_diverged) {
      s.diverged_at = g;
      break;
    }
  }
  double cand = s.diverged_at ? *s.diverged_at / 2.0 : g / 2.0;
  for (int h = 0; h <= options.max_halvings; ++h, cand /= 2.0) {
    Batch b = run_batch(data, variants, seeds, cand, std::nullopt, false);
    s.log.push_back({{"gamma", cand}, {"phase", "verify"}, {"all_converged", b.all_converged}});
    s.chosen = cand;
    s.runs = std::move(b.runs);
    if (b.all_converged) {
      s.all_converged = true;
      break;
    }
  }
  return s;
}

RunReport preset_fig1_generalization(const Dataset& data, const DynamicsConfig& config,
                                     const std::vector<std::uint64_t>& seeds_in, const PresetOptions& opt) {
  const auto seeds = sorted_unique(seeds_in);
  config.validate(data);
  RunReport rep;
  rep.preset = "fig1_generalization";
  Evaluator ev(data);
  const double start = start_gamma(data, config.alpha);

  DynamicsConfig gd = config;
  gd.algo = Algo::gd;
  gd.dt.reset();
  DynamicsConfig sgd = config;
  if (sgd.algo != Algo::sgd) sgd.algo = Algo::sgd;
  sgd.dt.reset();
  sgd.label_noise.reset();

  const GammaSearch sg = gamma_for(data, {gd}, {seeds.front()}, start, opt);
  const GammaSearch ss = gamma_for(data, {sgd}, seeds, start, opt);
  rep.manifest["gamma_search"] = {{"gd", search_json(sg)}, {"sgd", search_json(ss)}};

  const Trajectory& gtr = sg.runs.at({0, seeds.front()});
  std::vector<std::tuple<std::string, std::uint64_t, const Trajectory*>> curves;
  curves.emplace_back("gd", seeds.front(), &gtr);
  if (opt.write_trajectories) rep.files["trajectory_gd.csv"] = io::trajectory_csv(gtr, opt.dump_state);
  std::vector<SvgSeries> svg{loss_series("gd", gtr)};
  for (const auto seed : seeds) {
    rep.rows.push_back(ev.row(with_seed(with_gamma(gd, sg.chosen), seed), gtr));
    const Trajectory& tr = ss.runs.at({0, seed});
    rep.rows.push_back(ev.row(with_seed(with_gamma(sgd, ss.chosen), seed), tr));
    add_trajectory(rep, opt, seed, "trajectory.csv", tr);
    curves.emplace_back("sgd", seed, &tr);
    svg.push_back(loss_series("sgd seed " + std::to_string(seed), tr));
  }
  rep.files["curves.csv"] = curves_csv(curves);
  if (opt.svg) rep.files["loss.svg"] = svg_line_chart("training loss", svg, true);
  finish(rep);

  const double gd_val = median_of(rep.rows, "gd", val_of);
  const double sgd_val = median_of(rep.rows, "sgd", val_of);
  rep.checks = {{"gd_median_val_loss", gd_val},
                {"sgd_median_val_loss", sgd_val},
                {"gd_over_sgd", gd_val / sgd_val},
                {"sgd_beats_gd", sgd_val < gd_val},
                {"gap_at_least_2x", gd_val >= 2.0 * sgd_val}};
  return rep;
}

RunReport preset_fig_main_theorem(const Dataset& data, const DynamicsConfig& config,
                                  const std::vector<std::uint64_t>& seeds_in, const PresetOptions& opt) {
  const auto seeds = sorted_unique(seeds_in);
  if (!is_flow(config.algo) || config.algo == Algo::sgf_depth_p) {
    throw ConfigError("fig_main_theorem runs a depth-2 stochastic gradient flow");
  }
  config.validate(data);
  RunReport rep;
  rep.preset = "fig_main_theorem";
  Evaluator ev(data);
  const TheoryContext ctx = TheoryContext::build(data, EntropyParams{config.alpha});
  const double gamma = opt.gamma.value_or(step_size_bound(ctx));
  DynamicsConfig cfg = config;
  cfg.gamma = gamma;
  cfg.dt = gamma / opt.dt_div;
  cfg.validate(data);
  rep.manifest["gamma_search"] = {{"sgf", {{"chosen", gamma},
                                           {"source", opt.gamma ? "fixed" : "step_size_bound"},
                                           {"heuristic_step_size", heuristic_step_size(ctx)}}}};
  std::optional<LossIntegralBounds> lib;
  if (is_constant(config.alpha)) lib = loss_integral_bounds(ctx, gamma);
  const double xi_bound = boundedness_bound(ctx);

  for (const auto seed : seeds) {
    const DynamicsConfig c = with_seed(cfg, seed);
    PathMonitor mon(ctx, gamma);
    const Trajectory tr = run(data, c, opt.path_monitor ? &mon : nullptr);
    SeedRow r = ev.row(c, tr);
    const Vector eff = alpha_t(c.alpha, gamma, ev.H(), tr.loss_integral).alpha;
    if (tr.status == Status::converged) {
      r.extra["kkt_vs_alpha"] = kkt_residual(tr.terminal.beta(), data, EntropyParams{c.alpha});
    }
    r.extra["alpha_eff_over_alpha_max"] = (eff.array() / c.alpha.array()).maxCoeff();
    if (opt.path_monitor) {
      r.extra["event_A_violated"] = mon.event_A_violated();
      r.extra["U_min"] = mon.U_min();
      r.extra["xi_l1_max"] = mon.xi_l1_max();
      r.extra["xi_within_bound"] = mon.xi_l1_max() <= xi_bound;
    }
    if (lib && tr.status == Status::converged) {
      r.extra["loss_integral_in_bounds"] = tr.loss_integral >= lib->lower && tr.loss_integral <= lib->upper;
    }
    add_trajectory(rep, opt, seed, "trajectory.csv", tr);
    rep.rows.push_back(std::move(r));
  }
  finish(rep);

  std::size_t pass = 0;
  for (const auto& r : rep.rows) {
    if (r.status == Status::converged && r.kkt_residual && *r.kkt_residual <= 1e-3 && r.extra.at("alpha_eff_lt_alpha") > 0) {
      ++pass;
    }
  }
  rep.checks = {{"gamma", gamma},
                {"step_size_bound", step_size_bound(ctx)},
                {"pass_fraction", static_cast<double>(pass) / static_cast<double>(rep.rows.size())},
                {"xi_bound", xi_bound}};
  if (lib) {
    rep.checks["loss_integral_bounds"] = {
        {"lower", lib->lower}, {"lower_small_alpha", lib->lower_small_alpha}, {"upper", lib->upper}};
  }
  return rep;
}

RunReport preset_sde_validation(const Dataset& data, const DynamicsConfig& config,
                                const std::vector<std::uint64_t>& seeds_in, const PresetOptions& opt) {
  const auto seeds = sorted_unique(seeds_in);
  config.validate(data);
  RunReport rep;
  rep.preset = "sde_validation";
  Evaluator ev(data);
  DynamicsConfig sgd = config;
  sgd.algo = Algo::sgd;
  sgd.dt.reset();
  sgd.label_noise.reset();
  sgd.batch_size = 1;
  double gamma = 0.0;
  if (opt.gamma) {
    gamma = *opt.gamma;
    rep.manifest["gamma_search"] = {{"sgd", {{"chosen", gamma}, {"source", "fixed"}}}};
  } else {
    PresetOptions sopt = opt;
    const GammaSearch ss = search_gamma(data, {sgd}, seeds, start_gamma(data, config.alpha), sopt);
    gamma = ss.chosen * opt.sde_gamma_fraction;
    nlohmann::json j = search_json(ss);
    j["fraction"] = opt.sde_gamma_fraction;
    j["used"] = gamma;
    rep.manifest["gamma_search"] = {{"sgd", j}};
  }

  DynamicsConfig sgf = sgd;
  sgf.algo = Algo::sgf;
  sgf.gamma = gamma;
  sgf.dt = gamma / opt.dt_div;
  sgf.max_steps = static_cast<long>(std::llround(static_cast<double>(config.max_steps) * opt.dt_div));
  sgd.gamma = gamma;

  std::vector<LossTrace> traces_sgd;
  std::vector<LossTrace> traces_sgf;
  std::vector<SvgSeries> svg;
  for (const auto seed : seeds) {
    for (const bool flow : {false, true}) {
      const DynamicsConfig c = with_seed(flow ? sgf : sgd, seed);
      LossTrace trace;
      const Trajectory tr = run(data, c, &trace);
      rep.rows.push_back(ev.row(c, tr));
      add_trajectory(rep, opt, seed, flow ? "trajectory_sgf.csv" : "trajectory.csv", tr);
      svg.push_back(loss_series(std::string(flow ? "sgf" : "sgd") + " seed " + std::to_string(seed), tr));
      (flow ? traces_sgf : traces_sgd).push_back(std::move(trace));
    }
  }
  finish(rep);

  double horizon = std::numeric_limits<double>::infinity();
  for (const auto* set : {&traces_sgd, &traces_sgf}) {
    for (const auto& t : *set) horizon = std::min(horizon, t.t.back());
  }
  const int G = std::max(1, opt.grid_points);
  std::string csv = "time,sgd_q25,sgd_median,sgd_q75,sgf_q25,sgf_median,sgf_q75,overlap\n";
  int overlap = 0;
  for (int k = 1; k <= G; ++k) {
    const double t = horizon * static_cast<double>(k) / static_cast<double>(G);
    std::vector<double> a;
    std::vector<double> b;
    for (const auto& tr : traces_sgd) a.push_back(interp(tr, t));
    for (const auto& tr : traces_sgf) b.push_back(interp(tr, t));
    const Quantiles qa = quantiles(a);
    const Quantiles qb = quantiles(b);
    const bool ov = std::max(qa.q25, qb.q25) <= std::min(qa.q75, qb.q75);
    overlap += ov ? 1 : 0;
    csv += io::format_real(t) + ',' + io::format_real(qa.q25) + ',' + io::format_real(qa.median) + ',' +
           io::format_real(qa.q75) + ',' + io::format_real(qb.q25) + ',' + io::format_real(qb.median) + ',' +
           io::format_real(qb.q75) + ',' + (ov ? "1" : "0") + '\n';
  }
  rep.files["bands.csv"] = csv;
  if (opt.svg) rep.files["loss.svg"] = svg_line_chart("training loss, sgd and sgf", svg, true);
  const double frac = static_cast<double>(overlap) / static_cast<double>(G);
  rep.checks = {{"gamma", gamma},
                {"dt", gamma / opt.dt_div},
                {"horizon", horizon},
                {"grid_points", G},
                {"band_overlap_fraction", frac},
                {"bands_overlap", frac >= 0.9}};
  return rep;
}

RunReport preset_gd_from_alpha_eff(const Dataset& data, const DynamicsConfig& config,
                                   const std::vector<std::uint64_t>& seeds_in, const PresetOptions& opt) {
  const auto seeds = sorted_unique(seeds_in);
  config.validate(data);
  if (!is_constant(config.alpha)) throw ConfigError("gd_from_alpha_eff needs a scalar alpha");
  RunReport rep;
  rep.preset = "gd_from_alpha_eff";
  Evaluator ev(data);
  const double start = start_gamma(data, config.alpha);
  DynamicsConfig sgd = config;
  sgd.algo = Algo::sgd;
  sgd.dt.reset();
  sgd.label_noise.reset();
  DynamicsConfig gd = sgd;
  gd.algo = Algo::gd;

  const GammaSearch ss = gamma_for(data, {sgd}, seeds, start, opt);
  PresetOptions gd_opt = opt;
  gd_opt.gamma.reset();
  const GammaSearch sg = search_gamma(data, {gd}, {seeds.front()}, start, gd_opt);
  rep.manifest["gamma_search"] = {{"sgd", search_json(ss)}, {"gd", search_json(sg)}};
  const Trajectory& gtr = sg.runs.at({0, seeds.front()});
  if (opt.write_trajectories) rep.files["trajectory_gd.csv"] = io::trajectory_csv(gtr, opt.dump_state);

  const double gamma = ss.chosen;
  for (const auto seed : seeds) {
    rep.rows.push_back(ev.row(with_seed(with_gamma(gd, sg.chosen), seed), gtr));
    const DynamicsConfig sc = with_seed(with_gamma(sgd, gamma), seed);
    const Trajectory& str = ss.runs.at({0, seed});
    SeedRow srow = ev.row(sc, str);
    add_trajectory(rep, opt, seed, "trajectory.csv", str);
    if (str.status != Status::converged) {
      rep.rows.push_back(std::move(srow));
      continue;
    }
    // Left Riemann sum gamma * sum_t L(beta_t), from the trapezoid total.
    const double discrete = str.loss_integral + 0.5 * gamma * (str.records.front().loss - str.final_loss);
    const Vector a_inf = alpha_t(sc.alpha, gamma, ev.H(), discrete).alpha;
    srow.extra["discrete_loss_integral"] = discrete;
    srow.extra["alpha_inf_geo_mean"] = geo_mean(a_inf);

    DynamicsConfig gc = with_seed(with_gamma(gd, sg.chosen), seed);
    gc.alpha = a_inf;
    Trajectory gtr_inf = run(data, gc);
    for (int h = 0; h < opt.max_halvings && gtr_inf.status != Status::converged; ++h) {
      gc = with_gamma(gc, gc.gamma / 2.0);
      gtr_inf = run(data, gc);
    }
    SeedRow grow = ev.row(gc, gtr_inf);
    grow.algo = "gd_from_alpha_inf";
    grow.alpha = sc.alpha(0);
    const Vector bs = str.terminal.beta();
    const double dist = (bs - gtr_inf.terminal.beta()).norm() / bs.norm();
    grow.extra["relative_distance"] = dist;
    srow.extra["relative_distance"] = dist;
    add_trajectory(rep, opt, seed, "trajectory_gd_from_alpha_inf.csv", gtr_inf);
    rep.rows.push_back(std::move(srow));
    rep.rows.push_back(std::move(grow));
  }
  finish(rep);

  const auto dist = [](const SeedRow& r) -> std::optional<double> {
    const auto it = r.extra.find("relative_distance");
    return it == r.extra.end() ? std::nullopt : std::optional<double>(it->second);
  };
  const double med = median_of(rep.rows, "gd_from_alpha_inf", dist);
  const double gd_val = median_of(rep.rows, "gd", val_of);
  const double sgd_val = median_of(rep.rows, "sgd", val_of);
  const double inf_val = median_of(rep.rows, "gd_from_alpha_inf", val_of);
  rep.checks = {{"sgd_gamma", gamma},
                {"median_relative_distance", med},
                {"distance_within_5_percent", med <= 0.05},
                {"gd_median_val_loss", gd_val},
                {"sgd_median_val_loss", sgd_val},
                {"gd_from_alpha_inf_median_val_loss", inf_val},
                {"both_beat_gd", sgd_val < gd_val && inf_val < gd_val}};
  return rep;
}

RunReport preset_label_noise(const Dataset& data, const DynamicsConfig& config,
                             const std::vector<std::uint64_t>& seeds_in, const PresetOptions& opt) {
  const auto seeds = sorted_unique(seeds_in);
  config.validate(data);
  RunReport rep;
  rep.preset = "label_noise";
  Evaluator ev(data);
  const bool flow = is_flow(config.algo);
  DynamicsConfig plain = config;
  plain.algo = flow ? Algo::sgf : Algo::sgd;
  plain.label_noise.reset();
  if (!flow) plain.dt.reset();
  DynamicsConfig noisy = plain;
  noisy.algo = flow ? Algo::sgf_label_noise : Algo::sgd_label_noise;
  noisy.label_noise = opt.label_noise;

  const GammaSearch s = gamma_for(data, {plain, noisy}, seeds, start_gamma(data, config.alpha), opt);
  rep.manifest["gamma_search"] = {{"joint", search_json(s)}};
  for (const auto seed : seeds) {
    const Trajectory& tp = s.runs.at({0, seed});
    const Trajectory& tn = s.runs.at({1, seed});
    SeedRow rp = ev.row(with_seed(with_gamma(plain, s.chosen), seed), tp);
    rp.extra["loss_tilde_integral"] = tp.loss_tilde_integral;
    rep.rows.push_back(std::move(rp));
    rep.rows.push_back(ev.row(with_seed(with_gamma(noisy, s.chosen), seed), tn));
    add_trajectory(rep, opt, seed, "trajectory.csv", tn);
    add_trajectory(rep, opt, seed, std::string("trajectory_") + (flow ? "sgf" : "sgd") + ".csv", tp);
  }
  finish(rep);

  const std::string pn(to_string(plain.algo));
  const std::string nn(to_string(noisy.algo));
  const auto tilde = [](const SeedRow& r) -> std::optional<double> { return r.extra.at("loss_tilde_integral"); };
  const auto integral = [](const SeedRow& r) -> std::optional<double> { return r.loss_integral; };
  const double v_plain = median_of(rep.rows, pn, val_of);
  const double v_noisy = median_of(rep.rows, nn, val_of);
  const double lt = median_of(rep.rows, nn, tilde);
  const double lp = median_of(rep.rows, pn, integral);
  rep.checks = {{"gamma", s.chosen},
                {"plain_median_val_loss", v_plain},
                {"label_noise_median_val_loss", v_noisy},
                {"label_noise_beats_plain", v_noisy < v_plain},
                {"label_noise_median_loss_tilde_integral", lt},
                {"plain_median_loss_integral", lp},
                {"loss_tilde_exceeds_plain", lt > lp}};
  return rep;
}

RunReport preset_alpha_sweep(const Dataset& data, const DynamicsConfig& base_config, const std::vector<double>& alphas,
                             const std::vector<std::uint64_t>& seeds_in, const PresetOptions& opt) {
  const auto seeds = sorted_unique(seeds_in);
  if (alphas.empty()) throw ConfigError("alpha_sweep needs at least one alpha");
  RunReport rep;
  rep.preset = "alpha_sweep";
  nlohmann::json per_alpha = nlohmann::json::array();
  nlohmann::json searches = nlohmann::json::object();
  std::vector<double> used_alphas;
  std::vector<double> ratios;
  bool ordering = true;
  for (const double a : alphas) {
    if (!(a > 0.0)) throw ConfigError("alpha_sweep: alphas must be positive");
    DynamicsConfig cfg = base_config;
    cfg.alpha = Vector::Constant(static_cast<Eigen::Index>(data.d()), a);
    PresetOptions sub = opt;
    sub.write_trajectories = false;
    sub.svg = false;
    RunReport r = preset_fig1_generalization(data, cfg, seeds, sub);
    for (auto& row : r.rows) rep.rows.push_back(std::move(row));
    searches[io::format_real(a)] = r.manifest["gamma_search"];
    const bool beats = r.checks["sgd_beats_gd"].get<bool>();
    ordering = ordering && beats;
    per_alpha.push_back({{"alpha", a},
                         {"gd_median_val_loss", r.checks["gd_median_val_loss"]},
                         {"sgd_median_val_loss", r.checks["sgd_median_val_loss"]},
                         {"sgd_beats_gd", beats}});
  }
  rep.manifest["gamma_search"] = searches;
  finish(rep);

  std::string sweep = "alpha,algo,seed,final_val_loss,loss_integral,alpha_eff_geo_mean\n";
  for (const auto& r : rep.rows) {
    sweep += io::format_real(r.alpha) + ',' + r.algo + ',' + std::to_string(r.seed) + ',' +
             (r.final_val_loss ? io::format_real(*r.final_val_loss) : "") + ',' + io::format_real(r.loss_integral) +
             ',' + io::format_real(r.alpha_eff_geo_mean) + '\n';
  }
  rep.files["sweep.csv"] = sweep;

  for (const double a : alphas) {
    std::vector<double> rs;
    for (const auto& r : rep.rows) {
      if (r.algo == "sgd" && r.alpha == a && r.status == Status::converged) rs.push_back(r.alpha_eff_geo_mean / a);
    }
    const double m = quantiles(rs).median;
    if (std::isfinite(m) && m > 0.0 && m < 1.0) {
      used_alphas.push_back(a);
      ratios.push_back(m);
    }
  }
  rep.checks = {{"per_alpha", per_alpha}, {"ordering_holds_for_every_alpha", ordering}};
  if (used_alphas.size() >= 2 && data.beta_l0) {
    const double l1 = min_l1_interpolator(data).lpNorm<1>();
    rep.checks["zeta"] = {{"value", fit_power_law_exponent(used_alphas, ratios, l1)},
                          {"label", "conditional_on_boundedness_assumption"}};
  }
  if (opt.svg) {
    SvgSeries gd{"gd", {}, {}};
    SvgSeries sgd{"sgd", {}, {}};
    for (const auto& pa : per_alpha) {
      gd.x.push_back(pa["alpha"].get<double>());
      sgd.x.push_back(pa["alpha"].get<double>());
      gd.y.push_back(pa["gd_median_val_loss"].is_number() ? pa["gd_median_val_loss"].get<double>() : kNaN);
      sgd.y.push_back(pa["sgd_median_val_loss"].is_number() ? pa["sgd_median_val_loss"].get<double>() : kNaN);
    }
    rep.files["sweep.svg"] = svg_line_chart("median validation loss vs alpha", {gd, sgd}, true);
  }
  return rep;
}

RunReport preset_depth_p_demo(const Dataset& data, const DynamicsConfig& config,
                              const std::vector<std::uint64_t>& seeds_in, const PresetOptions& opt) {
  const auto seeds = sorted_unique(seeds_in);
  DynamicsConfig cfg = config;
  cfg.algo = Algo::sgf_depth_p;
  if (cfg.depth < 3) cfg.depth = 3;
  const double gamma = opt.gamma.value_or(start_gamma(data, cfg.alpha));
  cfg.gamma = gamma;
  cfg.dt = gamma / opt.dt_div;
  cfg.validate(data);
  RunReport rep;
  rep.preset = "depth_p_demo";
  rep.manifest["gamma_search"] = {{"sgf_depth_p", {{"chosen", gamma}, {"source", opt.gamma ? "fixed" : "step_size_bound"}}}};
  Evaluator ev(data);
  for (const auto seed : seeds) {
    const DynamicsConfig c = with_seed(cfg, seed);
    const Trajectory tr = run(data, c);
    rep.rows.push_back(ev.row(c, tr));
    add_trajectory(rep, opt, seed, "trajectory.csv", tr);
  }
  finish(rep);
  std::size_t kkt_ok = 0;
  std::size_t le = 0;
  for (const auto& r : rep.rows) {
    if (r.kkt_residual && *r.kkt_residual <= 1e-3) ++kkt_ok;
    if (r.extra.at("alpha_eff_le_alpha") > 0) ++le;
  }
  const auto n = static_cast<double>(rep.rows.size());
  rep.checks = {{"depth", cfg.depth},
                {"gamma", gamma},
                {"dt", *cfg.dt},
                {"kkt_pass_fraction", static_cast<double>(kkt_ok) / n},
                {"alpha_eff_le_alpha_fraction", static_cast<double>(le) / n}};
  return rep;
}

RunReport run_experiment(const ExperimentSpec& spec) {
  const Dataset data = generate_sparse_regression(spec.data.n, spec.data.d, spec.data.s, spec.data.seed);
  return run_experiment(spec, data);
}

RunReport run_experiment(const ExperimentSpec& spec, const Dataset& data) {
  RunReport rep;
  const PresetOptions& opt = spec.options;
  switch (spec.preset) {
    case Preset::fig1_generalization:
      rep = preset_fig1_generalization(data, spec.base, spec.seeds, opt);
      break;
    case Preset::fig_main_theorem:
      rep = preset_fig_main_theorem(data, spec.base, spec.seeds, opt);
      break;
    case Preset::sde_validation:
      rep = preset_sde_validation(data, spec.base, spec.seeds, opt);
      break;
    case Preset::gd_from_alpha_eff:
      rep = preset_gd_from_alpha_eff(data, spec.base, spec.seeds, opt);
      break;
    case Preset::label_noise:
      rep = preset_label_noise(data, spec.base, spec.seeds, opt);
      break;
    case Preset::alpha_sweep:
      rep = preset_alpha_sweep(data, spec.base, opt.alphas, spec.seeds, opt);
      break;
    case Preset::depth_p_demo:
      rep = preset_depth_p_demo(data, spec.base, spec.seeds, opt);
      break;
  }
  const std::string csv = io::dataset_csv(data);
  const nlohmann::json config = io::config_to_json(spec.base);
  std::vector<std::uint64_t> seeds = spec.seeds;
  std::sort(seeds.begin(), seeds.end());
  nlohmann::json options = {{"probe_steps", opt.probe_steps},   {"max_doublings", opt.max_doublings},
                            {"sde_gamma_fraction", opt.sde_gamma_fraction},
                            {"max_halvings", opt.max_halvings}, {"dt_div", opt.dt_div},
                            {"grid_points", opt.grid_points},   {"path_monitor", opt.path_monitor},
                            {"gamma", opt_json(opt.gamma)}};
  if (spec.preset == Preset::label_noise) {
    options["label_noise"] = {{"delta", opt.label_noise.delta}, {"cutoff_step", opt.label_noise.cutoff_step}};
  }
  if (spec.preset == Preset::alpha_sweep) options["alphas"] = opt.alphas;
  rep.manifest["preset"] = rep.preset;
  rep.manifest["config"] = config;
  rep.manifest["config_hash"] = io::sha256_hex(config.dump() + options.dump());
  rep.manifest["options"] = options;
  rep.manifest["seeds"] = seeds;
  rep.manifest["dataset"] = {{"n", data.n()},
                             {"d", data.d()},
                             {"s", spec.data.s},
                             {"seed", spec.data.seed},
                             {"git_blob_sha1", io::git_blob_sha1(csv)}};
  rep.files["data/dataset.csv"] = csv;
  rep.files["data/dataset.json"] =
      nlohmann::json({{"n", data.n()}, {"d", data.d()}, {"s", spec.data.s}, {"seed", spec.data.seed}}).dump(2) + "\n";
  return rep;
}

nlohmann::json report_json(const RunReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : report.rows) {
    nlohmann::json extra = nlohmann::json::object();
    for (const auto& [k, v] : r.extra) extra[k] = std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
    rows.push_back({{"seed", r.seed},
                    {"algo", r.algo},
                    {"alpha", r.alpha},
                    {"gamma", r.gamma},
                    {"status", std::string(to_string(r.status))},
                    {"steps", r.steps},
                    {"final_loss", std::isfinite(r.final_loss) ? nlohmann::json(r.final_loss) : nlohmann::json(nullptr)},
                    {"final_val_loss", opt_json(r.final_val_loss)},
                    {"loss_integral", std::isfinite(r.loss_integral) ? nlohmann::json(r.loss_integral)
                                                                     : nlohmann::json(nullptr)},
                    {"alpha_eff_geo_mean", std::isfinite(r.alpha_eff_geo_mean) ? nlohmann::json(r.alpha_eff_geo_mean)
                                                                               : nlohmann::json(nullptr)},
                    {"kkt_residual", opt_json(r.kkt_residual)},
                    {"extra", extra}});
  }
  return {{"preset", report.preset},
          {"rows", rows},
          {"aggregates", report.aggregates},
          {"checks", report.checks},
          {"warnings", report.warnings},
          {"diverged", report.diverged}};
}

std::string rows_csv(const std::vector<SeedRow>& rows) {
  std::string out =
      "seed,algo,alpha,gamma,status,steps,final_loss,final_val_loss,loss_integral,alpha_eff_geo_mean,kkt_residual\n";
  for (const auto& r : rows) {
    out += std::to_string(r.seed) + ',' + r.algo + ',' + io::format_real(r.alpha) + ',' + io::format_real(r.gamma) +
           ',' + std::string(to_string(r.status)) + ',' + std::to_string(r.steps) + ',' +
           io::format_real(r.final_loss) + ',' + (r.final_val_loss ? io::format_real(*r.final_val_loss) : "") + ',' +
           io::format_real(r.loss_integral) + ',' + io::format_real(r.alpha_eff_geo_mean) + ',' +
           (r.kkt_residual ? io::format_real(*r.kkt_residual) : "") + '\n';
  }
  return out;
}

void write_report(const RunReport& report, const std::filesystem::path& dir) {
  const auto root = dir / report.preset;
  for (const auto& [rel, content] : report.files) io::write_text(root / rel, content);
  io::write_text(root / "report.json", report_json(report).dump(2) + "\n");
  io::write_text(root / "manifest.json", report.manifest.dump(2) + "\n");
  io::write_text(root / "rows.csv", rows_csv(report.rows));
}

std::string svg_line_chart(const std::string& title, const std::vector<SvgSeries>& series, bool log_y) {
  constexpr double W = 640.0;
  constexpr double H = 400.0;
  constexpr double L = 70.0;
  constexpr double R = 20.0;
  constexpr double T = 40.0;
  constexpr double B = 50.0;
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                 "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  auto ty = [&](double y) { return log_y ? std::log10(y) : y; };
  double x0 = std::numeric_limits<double>::infinity();
  double x1 = -x0;
  double y0 = x0;
  double y1 = -x0;
  for (const auto& s : series) {
    for (std::size_t k = 0; k < s.x.size() && k < s.y.size(); ++k) {
      if (!std::isfinite(s.x[k]) || !std::isfinite(s.y[k]) || (log_y && s.y[k] <= 0.0)) continue;
      x0 = std::min(x0, s.x[k]);
      x1 = std::max(x1, s.x[k]);
      y0 = std::min(y0, ty(s.y[k]));
      y1 = std::max(y1, ty(s.y[k]));
    }
  }
  if (!std::isfinite(x0)) {
    x0 = 0.0;
    x1 = 1.0;
    y0 = 0.0;
    y1 = 1.0;
  }
  if (x1 == x0) x1 = x0 + 1.0;
  if (y1 == y0) y1 = y0 + 1.0;
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };
  char buf[256];
  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" font-family=\"sans-serif\" "
                    "font-size=\"12\">\n<rect width=\"640\" height=\"400\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof buf, "<text x=\"%g\" y=\"24\" font-size=\"14\">%s</text>\n", L, title.c_str());
  out += buf;
  std::snprintf(buf, sizeof buf,
                "<rect x=\"%g\" y=\"%g\" width=\"%g\" height=\"%g\" fill=\"none\" stroke=\"black\"/>\n", L, T,
                W - L - R, H - T - B);
  out += buf;
  for (int k = 0; k <= 4; ++k) {
    const double fx = x0 + (x1 - x0) * k / 4.0;
    const double fy = y0 + (y1 - y0) * k / 4.0;
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">%.3g</text>\n", px(fx),
                  H - B + 18.0, fx);
    out += buf;
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"end\">%s%.3g</text>\n", L - 6.0,
                  py(fy) + 4.0, log_y ? "1e" : "", fy);
    out += buf;
  }
  for (std::size_t s = 0; s < series.size(); ++s) {
    std::string pts;
    for (std::size_t k = 0; k < series[s].x.size() && k < series[s].y.size(); ++k) {
      const double x = series[s].x[k];
      const double y = series[s].y[k];
      if (!std::isfinite(x) || !std::isfinite(y) || (log_y && y <= 0.0)) continue;
      std::snprintf(buf, sizeof buf, "%.2f,%.2f ", px(x), py(ty(y)));
      pts += buf;
    }
    const char* color = colors[s % 10];
    out += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.2\" points=\"" + pts +
           "\"/>\n";
    if (s < 10) {
      std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" fill=\"%s\">%s</text>\n", W - R - 150.0,
                    T + 16.0 + 14.0 * static_cast<double>(s), color, series[s].name.c_str());
      out += buf;
    }
  }
  out += "</svg>\n";
  return out;
}

}  // namespace dln::harness
