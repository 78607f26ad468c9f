#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "covparam/common.hpp"
#include "covparam/image.hpp"
#include "covparam/matrix_csv.hpp"

namespace covparam {

inline constexpr double kDefaultEpsScale = 1e-6;
inline constexpr double kEpsFloor = 1e-10;

/// Per-pixel d-dimensional feature maps for an image.
struct FeatureTensor {
  int width = 0;
  int height = 0;
  int d = 0;
  std::vector<double> data;  // ((y * width) + x) * d + c
  std::vector<std::string> feature_names;
  bool scalar_flagged = false;  // d == 1: covariance degenerates to a variance

  double* at(int x, int y) {
    return data.data() + (static_cast<std::size_t>(y) * width + x) * d;
  }
  const double* at(int x, int y) const {
    return data.data() + (static_cast<std::size_t>(y) * width + x) * d;
  }
};

inline FeatureTensor make_feature_tensor(int width, int height, int d,
                                         std::vector<std::string> names = {}) {
  require(width > 0 && height > 0, "feature tensor dimensions must be positive");
  require(d >= 1, "feature count must be >= 1");
  FeatureTensor F;
  F.width = width;
  F.height = height;
  F.d = d;
  F.data.assign(static_cast<std::size_t>(width) * height * d, 0.0);
  if (names.empty()) {
    for (int c = 0; c < d; ++c) names.push_back("f" + std::to_string(c));
  }
  require(static_cast<int>(names.size()) == d, "feature name count must match d");
  F.feature_names = std::move(names);
  F.scalar_flagged = (d == 1);
  return F;
}

/// Inclusive rectangular window in pixel coordinates.
struct Rect {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  int width() const { return x1 - x0 + 1; }
  int height() const { return y1 - y0 + 1; }
  std::int64_t area() const {
    return static_cast<std::int64_t>(width()) * height();
  }
};

inline void check_rect(const Rect& r, int image_w, int image_h) {
  require(r.x0 >= 0 && r.y0 >= 0 && r.x0 <= r.x1 && r.y0 <= r.y1 &&
              r.x1 < image_w && r.y1 < image_h,
          "rect out of image bounds");
  require(r.area() >= 2, "rect must cover at least 2 pixels");
}

/// Region covariance C with the region mean.
struct CovarianceDescriptor {
  MatrixXd C;
  VectorXd mu;
  std::int64_t N = 0;
  bool regularized = false;
  double epsilon = 0.0;

  int d() const { return static_cast<int>(C.rows()); }
};

/// One feature channel: correlation taps applied with replicate padding,
/// optionally followed by a per-pixel absolute value.
struct KernelSpec {
  MatrixXd kernel;  // rows span y, cols span x; anchored at the centre tap
  bool absolute = false;
  std::string name;
};

/// Intensity plus absolute first and second derivatives in x and y.
/// Centered differences for the first derivatives, [1,-2,1] for the second.
inline std::vector<KernelSpec> grad5_kernels() {
  std::vector<KernelSpec> ks;
  MatrixXd ident(1, 1);
  ident << 1.0;
  MatrixXd dx(1, 3);
  dx << -0.5, 0.0, 0.5;
  MatrixXd dxx(1, 3);
  dxx << 1.0, -2.0, 1.0;
  ks.push_back({ident, false, "I"});
  ks.push_back({dx, true, "|Ix|"});
  ks.push_back({dx.transpose(), true, "|Iy|"});
  ks.push_back({dxx, true, "|Ixx|"});
  ks.push_back({dxx.transpose(), true, "|Iyy|"});
  return ks;
}

namespace detail {

inline int clamp_coord(int v, int hi) { return std::clamp(v, 0, hi); }

}  // namespace detail

/// Extracts one feature channel per kernel.
inline FeatureTensor compute_feature_tensor(const Image& image,
                                            const std::vector<KernelSpec>& kernels) {
  require(image.width > 0 && image.height > 0, "empty image");
  require(!kernels.empty(), "feature set must name at least one kernel");
  for (double v : image.pixels) require(std::isfinite(v), "image intensities must be finite");

  const int W = image.width, H = image.height;
  std::vector<std::string> names;
  for (const auto& k : kernels) {
    require(k.kernel.rows() >= 1 && k.kernel.cols() >= 1, "empty kernel");
    require(k.kernel.rows() <= H && k.kernel.cols() <= W,
            "kernel larger than image (" + k.name + ")");
    names.push_back(k.name);
  }

  FeatureTensor F = make_feature_tensor(W, H, static_cast<int>(kernels.size()), names);
  for (std::size_t c = 0; c < kernels.size(); ++c) {
    const MatrixXd& k = kernels[c].kernel;
    const int kh = static_cast<int>(k.rows()), kw = static_cast<int>(k.cols());
    const int cy = (kh - 1) / 2, cx = (kw - 1) / 2;
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        double acc = 0.0;
        for (int i = 0; i < kh; ++i) {
          const int yy = detail::clamp_coord(y + i - cy, H - 1);
          for (int j = 0; j < kw; ++j) {
            const int xx = detail::clamp_coord(x + j - cx, W - 1);
            acc += k(i, j) * image.at(xx, yy);
          }
        }
        F.at(x, y)[c] = kernels[c].absolute ? std::abs(acc) : acc;
      }
    }
  }
  return F;
}

inline FeatureTensor compute_grad5(const Image& image) {
  return compute_feature_tensor(image, grad5_kernels());
}

/// Running sums of features (P) and feature outer products (Q) with a
/// zero guard row/column, so any rectangular region sum is four lookups.
struct IntegralTensors {
  int width = 0;
  int height = 0;
  int d = 0;
  std::vector<double> P;  // (width+1) x (height+1) x d
  std::vector<double> Q;  // (width+1) x (height+1) x d(d+1)/2, packed lower triangle

  int pair_count() const { return d * (d + 1) / 2; }
  std::size_t cell(int x, int y) const {
    return static_cast<std::size_t>(y) * (width + 1) + x;
  }
  const double* p_at(int x, int y) const { return P.data() + cell(x, y) * d; }
  const double* q_at(int x, int y) const { return Q.data() + cell(x, y) * pair_count(); }
};

inline int packed_index(int i, int j) {
  // i >= j, lower triangle row-major
  return i * (i + 1) / 2 + j;
}

/// Builds P and Q in one pass. Accumulation runs in long double; the
/// stored tensors are double.
inline IntegralTensors build_integral_tensors(const FeatureTensor& F) {
  require(F.width > 0 && F.height > 0 && F.d >= 1, "invalid feature tensor");
  const int W = F.width, H = F.height, d = F.d;
  const int dp = d * (d + 1) / 2;
  const std::size_t cells = static_cast<std::size_t>(W + 1) * (H + 1);

  std::vector<long double> Pl(cells * d, 0.0L);
  std::vector<long double> Ql(cells * dp, 0.0L);
  auto cell = [W](int x, int y) { return static_cast<std::size_t>(y) * (W + 1) + x; };

  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const double* z = F.at(x, y);
      long double* p = Pl.data() + cell(x + 1, y + 1) * d;
      const long double* p_up = Pl.data() + cell(x + 1, y) * d;
      const long double* p_left = Pl.data() + cell(x, y + 1) * d;
      const long double* p_diag = Pl.data() + cell(x, y) * d;
      for (int c = 0; c < d; ++c) {
        require(std::isfinite(z[c]), "feature tensor entries must be finite");
        p[c] = p_up[c] + p_left[c] - p_diag[c] + z[c];
      }
      long double* q = Ql.data() + cell(x + 1, y + 1) * dp;
      const long double* q_up = Ql.data() + cell(x + 1, y) * dp;
      const long double* q_left = Ql.data() + cell(x, y + 1) * dp;
      const long double* q_diag = Ql.data() + cell(x, y) * dp;
      for (int i = 0; i < d; ++i) {
        for (int j = 0; j <= i; ++j) {
          const int k = packed_index(i, j);
          q[k] = q_up[k] + q_left[k] - q_diag[k] +
                 static_cast<long double>(z[i]) * z[j];
        }
      }
    }
  }

  IntegralTensors T;
  T.width = W;
  T.height = H;
  T.d = d;
  T.P.resize(Pl.size());
  T.Q.resize(Ql.size());
  for (std::size_t i = 0; i < Pl.size(); ++i) {
    T.P[i] = static_cast<double>(Pl[i]);
    require(std::isfinite(T.P[i]), "integral tensor overflow (P)");
  }
  for (std::size_t i = 0; i < Ql.size(); ++i) {
    T.Q[i] = static_cast<double>(Ql[i]);
    require(std::isfinite(T.Q[i]), "integral tensor overflow (Q)");
  }
  return T;
}

/// Region sums of z and z z^T recovered by 4-corner arithmetic.
inline void region_sums(const IntegralTensors& T, const Rect& r, VectorXd& s1,
                        MatrixXd& s2) {
  require(r.x0 >= 0 && r.y0 >= 0 && r.x0 <= r.x1 && r.y0 <= r.y1 &&
              r.x1 < T.width && r.y1 < T.height,
          "rect out of image bounds");
  const int d = T.d;
  s1.resize(d);
  s2.resize(d, d);
  const double* a = T.p_at(r.x1 + 1, r.y1 + 1);
  const double* b = T.p_at(r.x0, r.y1 + 1);
  const double* c = T.p_at(r.x1 + 1, r.y0);
  const double* e = T.p_at(r.x0, r.y0);
  for (int i = 0; i < d; ++i) s1(i) = a[i] - b[i] - c[i] + e[i];
  const double* qa = T.q_at(r.x1 + 1, r.y1 + 1);
  const double* qb = T.q_at(r.x0, r.y1 + 1);
  const double* qc = T.q_at(r.x1 + 1, r.y0);
  const double* qe = T.q_at(r.x0, r.y0);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j <= i; ++j) {
      const int k = packed_index(i, j);
      const double v = qa[k] - qb[k] - qc[k] + qe[k];
      s2(i, j) = v;
      s2(j, i) = v;
    }
  }
}

/// Sample covariance and mean of a region, direct two-pass evaluation.
inline CovarianceDescriptor region_covariance(const FeatureTensor& F, const Rect& r) {
  check_rect(r, F.width, F.height);
  const int d = F.d;
  const std::int64_t N = r.area();

  VectorXd mu = VectorXd::Zero(d);
  for (int y = r.y0; y <= r.y1; ++y)
    for (int x = r.x0; x <= r.x1; ++x) {
      const double* z = F.at(x, y);
      for (int c = 0; c < d; ++c) mu(c) += z[c];
    }
  mu /= static_cast<double>(N);

  MatrixXd C = MatrixXd::Zero(d, d);
  VectorXd v(d);
  for (int y = r.y0; y <= r.y1; ++y)
    for (int x = r.x0; x <= r.x1; ++x) {
      const double* z = F.at(x, y);
      for (int c = 0; c < d; ++c) v(c) = z[c] - mu(c);
      for (int i = 0; i < d; ++i)
        for (int j = 0; j <= i; ++j) C(i, j) += v(i) * v(j);
    }
  C /= static_cast<double>(N - 1);
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) C(i, j) = C(j, i);
  return {std::move(C), std::move(mu), N, false, 0.0};
}

/// Same covariance through the integral tensors; constant work per region.
inline CovarianceDescriptor region_covariance(const IntegralTensors& T, const Rect& r) {
  require(r.area() >= 2, "rect must cover at least 2 pixels");
  const int d = T.d;
  const std::int64_t N = r.area();
  VectorXd s1;
  MatrixXd s2;
  region_sums(T, r, s1, s2);
  VectorXd mu = s1 / static_cast<double>(N);
  MatrixXd C = (s2 - s1 * mu.transpose()) / static_cast<double>(N - 1);
  C = 0.5 * (C + C.transpose()).eval();
  // cancellation can leave a variance a hair negative
  for (int i = 0; i < d; ++i) C(i, i) = std::max(C(i, i), 0.0);
  return {std::move(C), std::move(mu), N, false, 0.0};
}

/// Shifts the spectrum by eps = max(eps_scale * trace/d, floor) so that a
/// Cholesky factorization is guaranteed to succeed.
inline CovarianceDescriptor regularize_spd(const CovarianceDescriptor& desc,
                                           double eps_scale = kDefaultEpsScale) {
  require(desc.C.allFinite() && desc.mu.allFinite(), "nonfinite covariance descriptor");
  require(desc.C.rows() == desc.C.cols() && desc.C.rows() == desc.mu.size(),
          "malformed covariance descriptor");
  const int d = desc.d();
  const double eps = std::max(eps_scale * desc.C.trace() / d, kEpsFloor);
  CovarianceDescriptor out = desc;
  out.C += eps * MatrixXd::Identity(d, d);
  out.regularized = true;
  out.epsilon = eps;
  Eigen::LLT<MatrixXd> llt(out.C);
  require(llt.info() == Eigen::Success,
          "regularization failed to make the matrix positive definite");
  return out;
}

// --- matrix CSV serialization ---------------------------------------------

inline void write_feature_tensor_csv(const std::string& path, const FeatureTensor& F) {
  MatrixXd m(static_cast<Eigen::Index>(F.width) * F.height, F.d);
  for (int y = 0; y < F.height; ++y)
    for (int x = 0; x < F.width; ++x) {
      const double* z = F.at(x, y);
      for (int c = 0; c < F.d; ++c) m(static_cast<Eigen::Index>(y) * F.width + x, c) = z[c];
    }
  std::string names;
  for (std::size_t i = 0; i < F.feature_names.size(); ++i) {
    if (i) names += '|';
    names += F.feature_names[i];
  }
  write_matrix_csv(path, m,
                   {"covparam-feature-tensor width=" + std::to_string(F.width) +
                        " height=" + std::to_string(F.height) + " d=" + std::to_string(F.d),
                    "names=" + names});
}

inline void write_covariance_csv(const std::string& path, const CovarianceDescriptor& desc) {
  std::string mu;
  for (int i = 0; i < desc.d(); ++i) {
    if (i) mu += ',';
    mu += g17(desc.mu(i));
  }
  write_matrix_csv(path, desc.C,
                   {"covparam-covariance d=" + std::to_string(desc.d()) +
                        " n=" + std::to_string(desc.N) +
                        " regularized=" + std::to_string(desc.regularized ? 1 : 0) +
                        " epsilon=" + g17(desc.epsilon),
                    "mu=" + mu});
}

}  // namespace covparam
