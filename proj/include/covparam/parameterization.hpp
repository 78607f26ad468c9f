#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "covparam/common.hpp"
#include "covparam/descriptor.hpp"

namespace covparam {

/// Lower-triangular Cholesky factor, row-major packed storage with a
/// strictly positive diagonal (which makes the factor unique).
struct LowerTriangular {
  int d = 0;
  std::vector<double> entries;  // L00, L10, L11, L20, L21, L22, ...

  double& at(int i, int j) { return entries[static_cast<std::size_t>(packed_index(i, j))]; }
  double at(int i, int j) const { return entries[static_cast<std::size_t>(packed_index(i, j))]; }

  MatrixXd to_matrix() const {
    MatrixXd L = MatrixXd::Zero(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j <= i; ++j) L(i, j) = at(i, j);
    return L;
  }
};

/// Radius-plus-angles rewrite of each Cholesky row. Radii are strictly
/// positive, angles lie in the open interval (0, pi); together that keeps
/// the map from covariances one-to-one. Row i (0-based) has i angles.
struct SphericalRep {
  int d = 0;
  std::vector<double> radii;   // d values
  std::vector<double> angles;  // d(d-1)/2 values, row-major

  int angle_offset(int row) const { return row * (row - 1) / 2; }
  double angle(int row, int k) const { return angles[static_cast<std::size_t>(angle_offset(row) + k)]; }
};

enum class ParamKind { Chol, Sphere };

inline std::string to_string(ParamKind k) { return k == ParamKind::Chol ? "CHOL" : "SPHERE"; }

inline ParamKind param_kind_from_string(const std::string& s) {
  if (s == "CHOL" || s == "chol") return ParamKind::Chol;
  if (s == "SPHERE" || s == "sphere") return ParamKind::Sphere;
  throw error("unknown parameterization kind: " + s);
}

/// Flat Euclidean representation of a covariance descriptor, optionally
/// with the scaled region mean concatenated in front.
struct EuclidRep {
  ParamKind kind = ParamKind::Chol;
  int d = 0;
  bool mean_fused = false;
  double lambda = 0.0;
  VectorXd vec;
};

inline int rep_length(int d, bool mean_fused) {
  return d * (d + 1) / 2 + (mean_fused ? d : 0);
}

/// Cholesky factor of a strictly positive definite covariance.
inline LowerTriangular cholesky_param(const MatrixXd& C) {
  require(C.rows() == C.cols() && C.rows() >= 1, "covariance must be square");
  require(C.allFinite(), "nonfinite covariance");
  Eigen::LLT<MatrixXd> llt(C);
  require(llt.info() == Eigen::Success,
          "Cholesky failed: matrix not positive definite (regularize first)");
  const MatrixXd L = llt.matrixL();
  const int d = static_cast<int>(C.rows());
  LowerTriangular out;
  out.d = d;
  out.entries.resize(static_cast<std::size_t>(d) * (d + 1) / 2);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j <= i; ++j) out.at(i, j) = L(i, j);
  return out;
}

inline LowerTriangular cholesky_param(const CovarianceDescriptor& desc) {
  return cholesky_param(desc.C);
}

inline MatrixXd reconstruct_spd(const LowerTriangular& L) {
  const MatrixXd M = L.to_matrix();
  return M * M.transpose();
}

namespace detail {

inline constexpr double kCosClamp = 1.0 - 1e-15;
inline constexpr double kSineUnderflow = 1e-300;
inline constexpr double kHalfPi = 1.5707963267948966192313216916398;

}  // namespace detail

/// Rewrites each row of L as (radius, angles). The radius is the row norm;
/// angles are recovered left to right by inverting the rotational map.
/// Once the running sine product underflows the remaining coordinates of
/// that row are unidentifiable and are pinned to pi/2.
inline SphericalRep spherical_param(const LowerTriangular& L) {
  const int d = L.d;
  SphericalRep rep;
  rep.d = d;
  rep.radii.resize(static_cast<std::size_t>(d));
  rep.angles.resize(static_cast<std::size_t>(d) * (d - 1) / 2);

  for (int i = 0; i < d; ++i) {
    double norm2 = 0.0;
    for (int j = 0; j <= i; ++j) norm2 += L.at(i, j) * L.at(i, j);
    const double radius = std::sqrt(norm2);
    require(radius > 0.0, "zero row norm in Cholesky factor");
    rep.radii[static_cast<std::size_t>(i)] = radius;

    double running = radius;
    for (int j = 0; j < i; ++j) {
      double theta;
      if (running < detail::kSineUnderflow) {
        theta = detail::kHalfPi;
      } else {
        double c = L.at(i, j) / running;
        c = std::clamp(c, -detail::kCosClamp, detail::kCosClamp);
        theta = std::acos(c);
        running *= std::sin(theta);
      }
      rep.angles[static_cast<std::size_t>(rep.angle_offset(i) + j)] = theta;
    }
  }
  return rep;
}

/// Forward evaluation of the rotational map, returning the Cholesky factor
/// the representation came from. Validates the uniqueness constraints.
inline LowerTriangular spherical_inverse(const SphericalRep& rep) {
  const int d = rep.d;
  require(static_cast<int>(rep.radii.size()) == d, "malformed spherical rep");
  require(static_cast<int>(rep.angles.size()) == d * (d - 1) / 2, "malformed spherical rep");

  LowerTriangular L;
  L.d = d;
  L.entries.assign(static_cast<std::size_t>(d) * (d + 1) / 2, 0.0);
  constexpr double pi = 3.14159265358979323846264338327950288;

  for (int i = 0; i < d; ++i) {
    const double radius = rep.radii[static_cast<std::size_t>(i)];
    require(radius > 0.0, "spherical radius must be strictly positive");
    double running = radius;
    for (int j = 0; j < i; ++j) {
      const double theta = rep.angle(i, j);
      require(theta > 0.0 && theta < pi, "spherical angle must lie in (0, pi)");
      L.at(i, j) = running * std::cos(theta);
      running *= std::sin(theta);
    }
    L.at(i, i) = running;
  }
  return L;
}

/// Row-major packed lower triangle of L.
inline VectorXd chol_vec(const LowerTriangular& L) {
  return Eigen::Map<const VectorXd>(L.entries.data(),
                                    static_cast<Eigen::Index>(L.entries.size()));
}

/// Row-major spherical coordinates: radius of row i followed by its angles.
inline VectorXd sphere_vec(const SphericalRep& rep) {
  VectorXd v(rep.d * (rep.d + 1) / 2);
  Eigen::Index k = 0;
  for (int i = 0; i < rep.d; ++i) {
    v(k++) = rep.radii[static_cast<std::size_t>(i)];
    for (int j = 0; j < i; ++j) v(k++) = rep.angle(i, j);
  }
  return v;
}

/// Rebuilds the structured representation from a flat (unfused) vector.
inline SphericalRep sphere_from_vec(const VectorXd& v, int d) {
  require(v.size() == d * (d + 1) / 2, "flat vector length does not match d");
  SphericalRep rep;
  rep.d = d;
  rep.radii.resize(static_cast<std::size_t>(d));
  rep.angles.resize(static_cast<std::size_t>(d) * (d - 1) / 2);
  Eigen::Index k = 0;
  for (int i = 0; i < d; ++i) {
    rep.radii[static_cast<std::size_t>(i)] = v(k++);
    for (int j = 0; j < i; ++j) rep.angles[static_cast<std::size_t>(rep.angle_offset(i) + j)] = v(k++);
  }
  return rep;
}

inline LowerTriangular chol_from_vec(const VectorXd& v, int d) {
  require(v.size() == d * (d + 1) / 2, "flat vector length does not match d");
  LowerTriangular L;
  L.d = d;
  L.entries.assign(v.data(), v.data() + v.size());
  return L;
}

/// Concatenates lambda * mu in front of the covariance coordinates.
inline EuclidRep fuse_mean(const EuclidRep& rep, const VectorXd& mu, double lambda) {
  require(!rep.mean_fused, "representation already mean-fused");
  require(lambda >= 0.0, "lambda must be nonnegative");
  require(mu.size() == rep.d, "mean dimension does not match representation d");
  EuclidRep out;
  out.kind = rep.kind;
  out.d = rep.d;
  out.mean_fused = true;
  out.lambda = lambda;
  out.vec.resize(rep.d + rep.vec.size());
  out.vec << lambda * mu, rep.vec;
  return out;
}

/// Full pipeline: Cholesky factor, optional spherical rewrite, optional
/// mean fusion. Deterministic.
inline EuclidRep parameterize(const CovarianceDescriptor& desc, ParamKind kind,
                              double lambda = 1.0, bool fuse = true) {
  const LowerTriangular L = cholesky_param(desc);
  EuclidRep rep;
  rep.kind = kind;
  rep.d = L.d;
  rep.mean_fused = false;
  rep.lambda = 0.0;
  rep.vec = (kind == ParamKind::Chol) ? chol_vec(L) : sphere_vec(spherical_param(L));
  if (fuse) rep = fuse_mean(rep, desc.mu, lambda);
  return rep;
}

}  // namespace covparam
