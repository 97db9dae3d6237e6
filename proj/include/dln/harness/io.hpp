#pragma once

// File formats.
//
//   dataset.csv   n rows of X, then one row y, then one row beta_l0 (or empty)
//   dataset.json  {"n", "d", "s", "seed"}
//   trajectory    step,time,loss,loss_integral,val_loss[,beta_0..][,eta_0..]
//
// Reals are printed with %.17g so files round-trip exactly.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "dln/dynamics.hpp"
#include "dln/model.hpp"

namespace dln::io {

std::string format_real(double x);

struct DatasetMeta {
  std::size_t n = 0;
  std::size_t d = 0;
  std::size_t s = 0;
  std::uint64_t seed = 0;
};

void write_dataset(const std::filesystem::path& dir, const Dataset& data, const DatasetMeta& meta);
Dataset read_dataset(const std::filesystem::path& dir);
std::string dataset_csv(const Dataset& data);

void write_trajectory_csv(const std::filesystem::path& file, const Trajectory& traj, bool dump_state);
std::string trajectory_csv(const Trajectory& traj, bool dump_state);
// Reads what write_trajectory_csv wrote; beta/eta are filled only when present.
Trajectory read_trajectory_csv(const std::filesystem::path& file);

// Scalar ("0.05") or a path to a one-column / one-row CSV with d entries.
Vector parse_alpha(const std::string& spec, std::size_t d);

// git blob SHA-1 of the bytes ("blob <len>\0" + content), hex.
std::string git_blob_sha1(const std::string& content);
std::string sha256_hex(const std::string& content);

nlohmann::json config_to_json(const DynamicsConfig& cfg);
// Fields missing from `j` keep their value in `base`.
DynamicsConfig config_from_json(const nlohmann::json& j, DynamicsConfig base, std::size_t d);

void write_text(const std::filesystem::path& file, const std::string& text);
std::string read_text(const std::filesystem::path& file);

}  // namespace dln::io
