#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "covparam/common.hpp"
#include "covparam/metrics.hpp"
#include "covparam/parameterization.hpp"
#include "covparam/rng.hpp"

namespace covparam {

struct BenchRecord {
  std::string metric;
  int d = 0;
  int reps = 0;
  double median_ns = 0.0;
  double mad_ns = 0.0;  // median absolute deviation
};

struct BenchResult {
  std::vector<BenchRecord> records;
  std::map<std::string, double> slopes;  // log-log fit over the upper half of d
};

namespace bench_detail {

inline MatrixXd random_pd(Rng& rng, int d) {
  // orthogonal basis from QR of a Gaussian matrix, log-uniform spectrum
  MatrixXd g(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) g(i, j) = rng.normal();
  Eigen::HouseholderQR<MatrixXd> qr(g);
  MatrixXd q = qr.householderQ();
  VectorXd eig(d);
  for (int i = 0; i < d; ++i) eig(i) = std::exp(rng.uniform(std::log(0.1), std::log(10.0)));
  MatrixXd c = q * eig.asDiagonal() * q.transpose();
  return 0.5 * (c + c.transpose());
}

inline double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

template <typename F>
inline std::pair<double, double> time_op(F&& op, int reps) {
  using clock = std::chrono::steady_clock;
  // warm-up, discarded
  for (int i = 0; i < 3; ++i) op(i);

  // grow the inner batch until one measurement comfortably exceeds timer
  // resolution; this is the auto-increase path for too-fast operations
  std::int64_t inner = 1;
  for (;;) {
    const auto t0 = clock::now();
    for (std::int64_t i = 0; i < inner; ++i) op(i);
    const double ns = std::chrono::duration<double, std::nano>(clock::now() - t0).count();
    if (ns >= 20000.0 || inner >= (1 << 22)) break;
    inner *= 2;
  }

  std::vector<double> samples;
  samples.reserve(static_cast<std::size_t>(reps));
  for (int r = 0; r < reps; ++r) {
    const auto t0 = clock::now();
    for (std::int64_t i = 0; i < inner; ++i) op(i);
    const double ns = std::chrono::duration<double, std::nano>(clock::now() - t0).count();
    samples.push_back(ns / static_cast<double>(inner));
  }
  const double med = median_of(samples);
  std::vector<double> dev;
  dev.reserve(samples.size());
  for (double s : samples) dev.push_back(std::abs(s - med));
  return {med, median_of(dev)};
}

inline double fit_slope(const std::vector<double>& log_d, const std::vector<double>& log_t) {
  const std::size_t n = log_d.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += log_d[i];
    my += log_t[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    num += (log_d[i] - mx) * (log_t[i] - my);
    den += (log_d[i] - mx) * (log_d[i] - mx);
  }
  return num / den;
}

}  // namespace bench_detail

/// Times each similarity measure on seeded random PD pairs across the given
/// dimensions and fits the asymptotic log-log slope over the upper half of
/// the dimension list, where fixed overhead no longer dominates. Runs
/// single-threaded; the matrix pairs are seed-reproducible, only the
/// timings vary. The Euclidean timing covers the distance alone: the
/// parameterization is a one-time offline cost per descriptor.
inline BenchResult bench_metrics(const std::vector<int>& d_list, int reps,
                                 std::uint64_t seed) {
  require(d_list.size() >= 4, "bench: need at least 4 dimension values");
  for (std::size_t i = 1; i < d_list.size(); ++i)
    require(d_list[i] > d_list[i - 1], "bench: dimensions must be ascending");
  require(d_list.front() >= 2, "bench: dimensions must be >= 2");
  require(d_list.back() >= 8 * d_list.front(), "bench: dimensions must span at least 8x");
  require(reps >= 30, "bench: need at least 30 repetitions");

  constexpr int kPairs = 4;
  BenchResult result;
  std::map<std::string, std::vector<double>> medians;
  volatile double sink = 0.0;

  for (int d : d_list) {
    Rng rng(seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(d)));
    std::vector<SpdMatrix> xs, ys;
    std::vector<EuclidRep> rx, ry;
    for (int p = 0; p < kPairs; ++p) {
      xs.push_back(SpdMatrix::from(bench_detail::random_pd(rng, d)));
      ys.push_back(SpdMatrix::from(bench_detail::random_pd(rng, d)));
      CovarianceDescriptor cx{xs.back().m, VectorXd::Zero(d), 2, true, 0.0};
      CovarianceDescriptor cy{ys.back().m, VectorXd::Zero(d), 2, true, 0.0};
      rx.push_back(parameterize(cx, ParamKind::Sphere, 0.0, false));
      ry.push_back(parameterize(cy, ParamKind::Sphere, 0.0, false));
    }

    const auto record = [&](const std::string& name, auto&& op) {
      const auto [med, mad] = bench_detail::time_op(op, reps);
      result.records.push_back({name, d, reps, med, mad});
      medians[name].push_back(med);
    };
    record("euclid", [&](std::int64_t i) { sink = sink + euclid_dist(rx[i % kPairs], ry[i % kPairs]); });
    record("airm", [&](std::int64_t i) { sink = sink + airm(xs[i % kPairs], ys[i % kPairs]); });
    record("lerm", [&](std::int64_t i) { sink = sink + lerm(xs[i % kPairs], ys[i % kPairs]); });
    record("logdet", [&](std::int64_t i) { sink = sink + logdet_div(xs[i % kPairs], ys[i % kPairs]); });
  }

  const std::size_t start = d_list.size() / 2;  // asymptotic regime only
  std::vector<double> log_d;
  for (std::size_t i = start; i < d_list.size(); ++i) log_d.push_back(std::log(d_list[i]));
  for (auto& [name, meds] : medians) {
    std::vector<double> log_t;
    for (std::size_t i = start; i < meds.size(); ++i) log_t.push_back(std::log(meds[i]));
    result.slopes[name] = bench_detail::fit_slope(log_d, log_t);
  }
  return result;
}

}  // namespace covparam
