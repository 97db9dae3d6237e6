// End-to-end kernel check: `simd_trace write FILE` runs a fixed set of
// trajectories with whatever kernel table is active and writes their terminal
// states; `simd_trace compare A B` checks two such files agree to rounding.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "dln/dynamics.hpp"
#include "dln/harness/io.hpp"
#include "dln/simd/kernels.hpp"

namespace {

int write(const std::string& file) {
  const auto data = dln::generate_sparse_regression(12, 37, 3, 5);
  std::ofstream out(file);
  out << "# isa " << dln::simd::isa_name(dln::simd::kernels().isa) << '\n';
  for (auto algo : {dln::Algo::gd, dln::Algo::sgd, dln::Algo::sgf, dln::Algo::sgf_general, dln::Algo::sgf_depth_p}) {
    dln::DynamicsConfig c;
    c.algo = algo;
    c.gamma = 0.02;
    c.alpha = dln::Vector::Constant(37, 0.3);
    c.max_steps = 5000;
    c.record_every = 5000;
    c.seed = 3;
    c.batch_size = 2;
    if (algo == dln::Algo::sgf_depth_p) c.depth = 3;
    const auto tr = dln::run(data, c);
    out << dln::to_string(algo) << ' ' << dln::io::format_real(tr.loss_integral);
    const dln::Vector beta = tr.terminal.beta();
    for (Eigen::Index j = 0; j < beta.size(); ++j) out << ' ' << dln::io::format_real(beta(j));
    out << '\n';
  }
  return out ? 0 : 1;
}

std::vector<std::vector<double>> load(const std::string& file) {
  std::ifstream in(file);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream is(line);
    std::string name;
    is >> name;
    std::vector<double> v;
    double x;
    while (is >> x) v.push_back(x);
    rows.push_back(std::move(v));
  }
  return rows;
}

int compare(const std::string& a, const std::string& b) {
  const auto ra = load(a), rb = load(b);
  if (ra.empty() || ra.size() != rb.size()) {
    std::cerr << "trace files differ in shape\n";
    return 1;
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    if (ra[i].size() != rb[i].size()) return 1;
    for (std::size_t j = 0; j < ra[i].size(); ++j) {
      worst = std::max(worst, std::abs(ra[i][j] - rb[i][j]) / std::max(1.0, std::abs(ra[i][j])));
    }
  }
  std::cout << "max relative difference " << worst << '\n';
  return worst <= 1e-8 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv + 1, argv + argc);
  if (args.size() == 2 && args[0] == "write") return write(args[1]);
  if (args.size() == 3 && args[0] == "compare") return compare(args[1], args[2]);
  std::cerr << "usage: simd_trace write FILE | simd_trace compare A B\n";
  return 2;
}
