#include "dln/harness/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

#include <openssl/evp.h>

#include "dln/errors.hpp"

namespace dln::io {

namespace fs = std::filesystem;

std::string format_real(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void write_text(const fs::path& file, const std::string& text) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + file.string());
  out << text;
  if (!out) throw ConfigError("write failed for " + file.string());
}

std::string read_text(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace {

template <typename Row>
void append_row(std::string& out, const Row& row, Eigen::Index len) {
  for (Eigen::Index j = 0; j < len; ++j) {
    if (j > 0) out += ',';
    out += format_real(row(j));
  }
  out += '\n';
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_real(const std::string& s) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw ConfigError("not a number: '" + s + "'");
  }
  if (pos != s.size()) throw ConfigError("trailing characters in number: '" + s + "'");
  return v;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

}  // namespace

std::string dataset_csv(const Dataset& data) {
  std::string out;
  for (Eigen::Index i = 0; i < data.X.rows(); ++i) append_row(out, data.X.row(i), data.X.cols());
  append_row(out, data.y, data.y.size());
  if (data.beta_l0) {
    append_row(out, *data.beta_l0, data.beta_l0->size());
  } else {
    out += '\n';
  }
  return out;
}

void write_dataset(const fs::path& dir, const Dataset& data, const DatasetMeta& meta) {
  data.validate();
  write_text(dir / "dataset.csv", dataset_csv(data));
  const nlohmann::json j = {{"n", meta.n}, {"d", meta.d}, {"s", meta.s}, {"seed", meta.seed}};
  write_text(dir / "dataset.json", j.dump(2) + "\n");
}

Dataset read_dataset(const fs::path& dir) {
  const auto meta = nlohmann::json::parse(read_text(dir / "dataset.json"));
  const auto n = meta.at("n").get<std::size_t>();
  const auto d = meta.at("d").get<std::size_t>();
  const auto lines = lines_of(read_text(dir / "dataset.csv"));
  if (lines.size() < n + 1) throw ConfigError("dataset.csv: expected at least n + 1 rows");
  Dataset data;
  data.X.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  auto parse_row = [&](const std::string& line, std::size_t expect) {
    const auto cells = split(line, ',');
    if (cells.size() != expect) {
      throw ConfigError("dataset.csv: row has " + std::to_string(cells.size()) + " cells, expected " +
                        std::to_string(expect));
    }
    Vector v(static_cast<Eigen::Index>(expect));
    for (std::size_t k = 0; k < expect; ++k) v(static_cast<Eigen::Index>(k)) = parse_real(cells[k]);
    return v;
  };
  for (std::size_t i = 0; i < n; ++i) data.X.row(static_cast<Eigen::Index>(i)) = parse_row(lines[i], d).transpose();
  data.y = parse_row(lines[n], n);
  if (lines.size() > n + 1 && !lines[n + 1].empty()) data.beta_l0 = parse_row(lines[n + 1], d);
  data.validate();
  return data;
}

std::string trajectory_csv(const Trajectory& traj, bool dump_state) {
  std::string out = "step,time,loss,loss_integral,val_loss";
  const Eigen::Index d = traj.records.empty() ? 0 : traj.records.front().beta.size();
  const Eigen::Index n = traj.records.empty() ? 0 : traj.records.front().eta.size();
  if (dump_state) {
    for (Eigen::Index j = 0; j < d; ++j) out += ",beta_" + std::to_string(j);
    for (Eigen::Index i = 0; i < n; ++i) out += ",eta_" + std::to_string(i);
  }
  out += '\n';
  for (const auto& r : traj.records) {
    out += std::to_string(r.step) + ',' + format_real(r.time) + ',' + format_real(r.loss) + ',' +
           format_real(r.loss_integral) + ',' + (r.val_loss ? format_real(*r.val_loss) : std::string());
    if (dump_state) {
      for (Eigen::Index j = 0; j < d; ++j) out += ',' + format_real(r.beta(j));
      for (Eigen::Index i = 0; i < n; ++i) out += ',' + format_real(r.eta(i));
    }
    out += '\n';
  }
  return out;
}

void write_trajectory_csv(const fs::path& file, const Trajectory& traj, bool dump_state) {
  write_text(file, trajectory_csv(traj, dump_state));
}

Trajectory read_trajectory_csv(const fs::path& file) {
  const auto lines = lines_of(read_text(file));
  if (lines.empty()) throw ConfigError(file.string() + ": empty trajectory file");
  const auto header = split(lines[0], ',');
  const std::vector<std::string> fixed = {"step", "time", "loss", "loss_integral", "val_loss"};
  if (header.size() < fixed.size() || !std::equal(fixed.begin(), fixed.end(), header.begin())) {
    throw ConfigError(file.string() + ": unexpected trajectory header");
  }
  Eigen::Index d = 0;
  Eigen::Index n = 0;
  for (std::size_t k = fixed.size(); k < header.size(); ++k) {
    if (header[k].rfind("beta_", 0) == 0) {
      ++d;
    } else if (header[k].rfind("eta_", 0) == 0) {
      ++n;
    } else {
      throw ConfigError(file.string() + ": unknown column '" + header[k] + "'");
    }
  }
  Trajectory traj;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    if (lines[li].empty()) continue;
    const auto cells = split(lines[li], ',');
    if (cells.size() != header.size()) throw ConfigError(file.string() + ": ragged row " + std::to_string(li));
    Record r;
    r.step = std::stol(cells[0]);
    r.time = parse_real(cells[1]);
    r.loss = parse_real(cells[2]);
    r.loss_integral = parse_real(cells[3]);
    if (!cells[4].empty()) r.val_loss = parse_real(cells[4]);
    r.beta.resize(d);
    for (Eigen::Index j = 0; j < d; ++j) r.beta(j) = parse_real(cells[fixed.size() + static_cast<std::size_t>(j)]);
    r.eta.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      r.eta(i) = parse_real(cells[fixed.size() + static_cast<std::size_t>(d + i)]);
    }
    traj.records.push_back(std::move(r));
  }
  if (!traj.records.empty()) {
    const auto& last = traj.records.back();
    traj.steps = last.step;
    traj.time = last.time;
    traj.final_loss = last.loss;
    traj.loss_integral = last.loss_integral;
  }
  return traj;
}

Vector parse_alpha(const std::string& spec, std::size_t d) {
  if (spec.empty()) throw ConfigError("alpha: empty value");
  if (!fs::exists(spec)) {
    const double a = parse_real(spec);
    if (!(a > 0.0) || !std::isfinite(a)) throw ConfigError("alpha must be positive and finite");
    return Vector::Constant(static_cast<Eigen::Index>(d), a);
  }
  std::vector<double> vals;
  for (const auto& line : lines_of(read_text(spec))) {
    if (line.empty()) continue;
    for (const auto& cell : split(line, ',')) vals.push_back(parse_real(cell));
  }
  if (vals.size() != d) {
    throw ConfigError("alpha file has " + std::to_string(vals.size()) + " entries, expected " + std::to_string(d));
  }
  Vector out = Eigen::Map<Vector>(vals.data(), static_cast<Eigen::Index>(d));
  if (!(out.array() > 0.0).all()) throw ConfigError("alpha entries must be positive");
  return out;
}

namespace {

std::string digest_hex(const EVP_MD* md, const std::string& content) {
  unsigned char buf[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(content.data(), content.size(), buf, &len, md, nullptr) != 1) {
    throw std::runtime_error("digest computation failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int k = 0; k < len; ++k) {
    out += hex[buf[k] >> 4];
    out += hex[buf[k] & 15];
  }
  return out;
}

}  // namespace

std::string git_blob_sha1(const std::string& content) {
  std::string blob = "blob " + std::to_string(content.size());
  blob.push_back('\0');
  blob += content;
  return digest_hex(EVP_sha1(), blob);
}

std::string sha256_hex(const std::string& content) { return digest_hex(EVP_sha256(), content); }

nlohmann::json config_to_json(const DynamicsConfig& cfg) {
  nlohmann::json j;
  j["algo"] = std::string(to_string(cfg.algo));
  j["gamma"] = cfg.gamma;
  if (cfg.dt) j["dt"] = *cfg.dt;
  if (cfg.alpha.size() > 0 && (cfg.alpha.array() == cfg.alpha(0)).all()) {
    j["alpha"] = cfg.alpha(0);
  } else {
    j["alpha"] = std::vector<double>(cfg.alpha.data(), cfg.alpha.data() + cfg.alpha.size());
  }
  j["depth"] = cfg.depth;
  j["batch_size"] = cfg.batch_size;
  j["sampling"] = std::string(to_string(cfg.sampling));
  if (cfg.label_noise) {
    j["label_noise"] = {{"delta", cfg.label_noise->delta}, {"cutoff_step", cfg.label_noise->cutoff_step}};
  }
  j["max_steps"] = cfg.max_steps;
  j["loss_tol"] = cfg.loss_tol;
  j["seed"] = cfg.seed;
  j["record_every"] = cfg.record_every;
  return j;
}

DynamicsConfig config_from_json(const nlohmann::json& j, DynamicsConfig cfg, std::size_t d) {
  static const std::vector<std::string> known = {"algo",       "gamma",    "dt",          "alpha",
                                                 "depth",      "batch_size", "sampling",  "label_noise",
                                                 "max_steps",  "loss_tol", "seed",        "record_every"};
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (std::find(known.begin(), known.end(), key) == known.end()) {
        throw ConfigError("unknown config field '" + key + "'");
      }
    }
    if (j.contains("algo")) cfg.algo = parse_algo(j["algo"].get<std::string>());
    if (j.contains("gamma")) cfg.gamma = j["gamma"].get<double>();
    if (j.contains("dt")) cfg.dt = j["dt"].get<double>();
    if (j.contains("alpha")) {
      const auto& a = j["alpha"];
      if (a.is_number()) {
        cfg.alpha = Vector::Constant(static_cast<Eigen::Index>(d), a.get<double>());
      } else {
        const auto v = a.get<std::vector<double>>();
        if (v.size() != d) throw ConfigError("config alpha has wrong length");
        cfg.alpha = Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(d));
      }
    }
    if (j.contains("depth")) cfg.depth = j["depth"].get<int>();
    if (j.contains("batch_size")) cfg.batch_size = j["batch_size"].get<std::size_t>();
    if (j.contains("sampling")) cfg.sampling = parse_sampling(j["sampling"].get<std::string>());
    if (j.contains("label_noise")) {
      const auto& ln = j["label_noise"];
      cfg.label_noise = LabelNoise{ln.at("delta").get<double>(), ln.at("cutoff_step").get<long>()};
    }
    if (j.contains("max_steps")) cfg.max_steps = j["max_steps"].get<long>();
    if (j.contains("loss_tol")) cfg.loss_tol = j["loss_tol"].get<double>();
    if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("record_every")) cfg.record_every = j["record_every"].get<long>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return cfg;
}

}  // namespace dln::io
