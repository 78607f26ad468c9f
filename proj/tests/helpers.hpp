#pragma once

// Shared fixtures and independent oracles for the unit and acceptance suites.

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "covparam/covparam.hpp"

namespace testutil {

using covparam::MatrixXd;
using covparam::Rng;
using covparam::VectorXd;

inline MatrixXd random_gaussian(Rng& rng, int rows, int cols) {
  MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = rng.normal();
  return m;
}

inline MatrixXd random_orthogonal(Rng& rng, int d) {
  Eigen::HouseholderQR<MatrixXd> qr(random_gaussian(rng, d, d));
  MatrixXd q = qr.householderQ();
  return q;
}

/// Random SPD matrix with a log-uniform spectrum in [lo, hi]; condition
/// number bounded by hi/lo so round-trip tolerances stay meaningful.
inline MatrixXd random_pd(Rng& rng, int d, double lo = 1e-2, double hi = 1e2) {
  const MatrixXd q = random_orthogonal(rng, d);
  VectorXd eig(d);
  for (int i = 0; i < d; ++i) eig(i) = std::exp(rng.uniform(std::log(lo), std::log(hi)));
  MatrixXd c = q * eig.asDiagonal() * q.transpose();
  return 0.5 * (c + c.transpose());
}

/// Random invertible matrix with singular values in [0.5, 2].
inline MatrixXd random_conditioned_invertible(Rng& rng, int d) {
  const MatrixXd q1 = random_orthogonal(rng, d);
  const MatrixXd q2 = random_orthogonal(rng, d);
  VectorXd sv(d);
  for (int i = 0; i < d; ++i) sv(i) = rng.uniform(0.5, 2.0);
  return q1 * sv.asDiagonal() * q2.transpose();
}

inline MatrixXd random_unit_dictionary(Rng& rng, int d, int k) {
  MatrixXd m = random_gaussian(rng, d, k);
  for (int j = 0; j < k; ++j) m.col(j).normalize();
  return m;
}

// --- sparse coding oracles --------------------------------------------------

struct SubsetFit {
  std::vector<int> support;
  double residual = 0.0;
};

/// Exhaustive best T-subset least squares, the oracle OMP is checked against.
inline SubsetFit brute_force_best_subset(const MatrixXd& dict, const VectorXd& s, int t) {
  const int k = static_cast<int>(dict.cols());
  SubsetFit best;
  best.residual = s.norm();
  std::vector<int> idx(t);
  const std::function<void(int, int)> visit = [&](int start, int depth) {
    if (depth == t) {
      MatrixXd sub(dict.rows(), t);
      for (int i = 0; i < t; ++i) sub.col(i) = dict.col(idx[static_cast<std::size_t>(i)]);
      const VectorXd coeff = sub.colPivHouseholderQr().solve(s);
      const double res = (s - sub * coeff).norm();
      if (res < best.residual) {
        best.residual = res;
        best.support.assign(idx.begin(), idx.end());
      }
      return;
    }
    for (int j = start; j < k; ++j) {
      idx[static_cast<std::size_t>(depth)] = j;
      visit(j + 1, depth + 1);
    }
  };
  visit(0, 0);
  std::sort(best.support.begin(), best.support.end());
  return best;
}

/// Exact restricted-support condition for greedy recovery: for every atom
/// outside the support, |pinv(D_S) d| in l1 must stay below 1.
inline bool exact_recovery_condition(const MatrixXd& dict, const std::vector<int>& support) {
  MatrixXd sub(dict.rows(), static_cast<Eigen::Index>(support.size()));
  for (std::size_t i = 0; i < support.size(); ++i)
    sub.col(static_cast<Eigen::Index>(i)) = dict.col(support[i]);
  const Eigen::ColPivHouseholderQR<MatrixXd> qr(sub);
  for (int j = 0; j < dict.cols(); ++j) {
    if (std::find(support.begin(), support.end(), j) != support.end()) continue;
    const VectorXd p = qr.solve(dict.col(j));
    if (p.lpNorm<1>() >= 0.99) return false;
  }
  return true;
}

struct PlantedInstance {
  MatrixXd dict;
  VectorXd signal;
  std::vector<int> support;
};

/// Seeded planted-sparse instance that provably admits greedy recovery;
/// redraws until the exact recovery condition holds.
inline PlantedInstance planted_sparse_instance(Rng& rng, int d, int k, int t) {
  for (int attempt = 0; attempt < 200; ++attempt) {
    PlantedInstance inst;
    inst.dict = random_unit_dictionary(rng, d, k);
    std::vector<int> pool(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) pool[static_cast<std::size_t>(i)] = i;
    rng.shuffle(pool);
    inst.support.assign(pool.begin(), pool.begin() + t);
    std::sort(inst.support.begin(), inst.support.end());
    if (!exact_recovery_condition(inst.dict, inst.support)) continue;
    inst.signal = VectorXd::Zero(d);
    for (int j : inst.support) {
      const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
      inst.signal += sign * rng.uniform(0.5, 1.5) * inst.dict.col(j);
    }
    return inst;
  }
  throw std::runtime_error("could not build a recoverable sparse instance");
}

inline double elastic_net_objective(const MatrixXd& dict, const VectorXd& s,
                                    const VectorXd& x, double t1, double t2) {
  return (s - dict * x).squaredNorm() + t1 * x.lpNorm<1>() + 0.5 * t2 * x.squaredNorm();
}

/// Elastic-net oracle: enumerate all 3^K sign patterns, solve the equality-
/// constrained quadratic for each, keep sign-consistent candidates.
inline double elastic_net_oracle_objective(const MatrixXd& dict, const VectorXd& s,
                                           double t1, double t2) {
  const int k = static_cast<int>(dict.cols());
  double best = elastic_net_objective(dict, s, VectorXd::Zero(k), t1, t2);
  std::vector<int> sign(static_cast<std::size_t>(k), -1);
  const int patterns = static_cast<int>(std::pow(3.0, k));
  for (int p = 0; p < patterns; ++p) {
    int rest = p;
    std::vector<int> active;
    for (int j = 0; j < k; ++j) {
      sign[static_cast<std::size_t>(j)] = rest % 3 - 1;  // -1, 0, +1
      rest /= 3;
      if (sign[static_cast<std::size_t>(j)] != 0) active.push_back(j);
    }
    if (active.empty()) continue;
    const Eigen::Index na = static_cast<Eigen::Index>(active.size());
    MatrixXd sub(dict.rows(), na);
    VectorXd sgn(na);
    for (Eigen::Index i = 0; i < na; ++i) {
      sub.col(i) = dict.col(active[static_cast<std::size_t>(i)]);
      sgn(i) = sign[static_cast<std::size_t>(active[static_cast<std::size_t>(i)])];
    }
    const MatrixXd gram =
        2.0 * sub.transpose() * sub + t2 * MatrixXd::Identity(na, na);
    const VectorXd rhs = 2.0 * sub.transpose() * s - t1 * sgn;
    const VectorXd sol = gram.ldlt().solve(rhs);
    bool consistent = true;
    for (Eigen::Index i = 0; i < na; ++i)
      if (sol(i) * sgn(i) <= 0.0) consistent = false;
    if (!consistent) continue;
    VectorXd x = VectorXd::Zero(k);
    for (Eigen::Index i = 0; i < na; ++i) x(active[static_cast<std::size_t>(i)]) = sol(i);
    best = std::min(best, elastic_net_objective(dict, s, x, t1, t2));
  }
  return best;
}

// --- synthetic texture dataset ----------------------------------------------

/// Oriented sinusoid grating with a little seeded pixel noise.
inline covparam::Image make_grating(int size, double theta, double period,
                                    double noise_amp, std::uint64_t seed) {
  Rng rng(seed);
  covparam::Image im = covparam::make_image(size, size);
  const double c = std::cos(theta), s = std::sin(theta);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double phase = 2.0 * M_PI * (x * c + y * s) / period;
      double v = 0.5 + 0.35 * std::sin(phase) + noise_amp * (rng.uniform() - 0.5);
      im.at(x, y) = std::clamp(v, 0.0, 1.0);
    }
  return im;
}

/// Writes one grating image per class under dir/class<i>/.
inline void write_grating_dataset(const std::filesystem::path& dir, int size,
                                  int classes, double noise_amp, std::uint64_t seed) {
  namespace fs = std::filesystem;
  for (int c = 0; c < classes; ++c) {
    const fs::path class_dir = dir / ("class" + std::to_string(c));
    fs::create_directories(class_dir);
    const double theta = M_PI * c / classes;
    const auto im = make_grating(size, theta, 8.0, noise_amp, seed + static_cast<std::uint64_t>(c));
    covparam::save_pgm((class_dir / "grating.pgm").string(), im);
  }
}

// --- process plumbing ---------------------------------------------------------

struct TempDir {
  std::filesystem::path path;

  TempDir() {
    static std::uint64_t counter = 0;
    const auto base = std::filesystem::temp_directory_path();
    path = base / ("covparam-test-" + std::to_string(::getpid()) + "-" +
                   std::to_string(counter++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path / name).string(); }
};

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

struct CliResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

inline std::string cli_binary() {
  const char* env = std::getenv("COVPARAM_CLI");
  if (!env || !*env) throw std::runtime_error("COVPARAM_CLI is not set");
  return env;
}

inline CliResult run_cli(const std::string& args) {
  const TempDir tmp;
  const std::string out_path = tmp.file("stdout.txt");
  const std::string err_path = tmp.file("stderr.txt");
  const std::string cmd =
      cli_binary() + " " + args + " >" + out_path + " 2>" + err_path;
  const int status = std::system(cmd.c_str());
  CliResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_file_bytes(out_path);
  r.err = read_file_bytes(err_path);
  return r;
}

}  // namespace testutil
