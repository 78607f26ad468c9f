#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "covparam/common.hpp"
#include "covparam/parameterization.hpp"

namespace covparam {

// Eigenvalues this far below the largest one are treated as zero: the
// matrix is rejected as non-PD instead of silently clamped.
inline constexpr double kEigenFloor = 1e-12;

/// Symmetric positive definite matrix. Symmetry is checked on
/// construction; definiteness is checked lazily by the operations.
struct SpdMatrix {
  MatrixXd m;

  int d() const { return static_cast<int>(m.rows()); }

  static SpdMatrix from(MatrixXd a) {
    require(a.rows() == a.cols() && a.rows() >= 1, "SPD matrix must be square");
    require(a.allFinite(), "SPD matrix must be finite");
    const double scale = a.norm();
    require((a - a.transpose()).norm() <= 1e-12 * std::max(scale, 1e-300),
            "matrix is not symmetric");
    a = 0.5 * (a + a.transpose()).eval();
    return SpdMatrix{std::move(a)};
  }
};

namespace detail {

inline void check_same_dim(const SpdMatrix& x, const SpdMatrix& y) {
  require(x.d() == y.d(), "dimension mismatch between SPD matrices");
}

inline Eigen::LLT<MatrixXd> checked_llt(const SpdMatrix& x, const char* who) {
  Eigen::LLT<MatrixXd> llt(x.m);
  require(llt.info() == Eigen::Success,
          std::string(who) + ": matrix is not positive definite");
  return llt;
}

inline double log_det_from_llt(const Eigen::LLT<MatrixXd>& llt) {
  double s = 0.0;
  const auto& L = llt.matrixLLT();
  for (Eigen::Index i = 0; i < L.rows(); ++i) s += std::log(L(i, i));
  return 2.0 * s;
}

}  // namespace detail

/// Principal matrix logarithm via symmetric eigendecomposition.
inline MatrixXd matrix_log(const SpdMatrix& x) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(x.m);
  require(es.info() == Eigen::Success, "eigendecomposition failed");
  const VectorXd& ev = es.eigenvalues();
  const double floor = kEigenFloor * ev(ev.size() - 1);
  VectorXd logs(ev.size());
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    require(ev(i) > floor && ev(i) > 0.0, "matrix_log: matrix is not positive definite");
    logs(i) = std::log(ev(i));
  }
  return es.eigenvectors() * logs.asDiagonal() * es.eigenvectors().transpose();
}

/// Affine-invariant geodesic distance. Solved as the generalized
/// eigenproblem Y v = t X v, which equals the spectrum of X^{-1/2} Y X^{-1/2}
/// with a single factorization.
inline double airm(const SpdMatrix& x, const SpdMatrix& y) {
  detail::check_same_dim(x, y);
  detail::checked_llt(x, "airm");
  detail::checked_llt(y, "airm");
  Eigen::GeneralizedSelfAdjointEigenSolver<MatrixXd> es(y.m, x.m, Eigen::EigenvaluesOnly | Eigen::Ax_lBx);
  require(es.info() == Eigen::Success, "airm: generalized eigensolve failed");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
    const double t = es.eigenvalues()(i);
    require(t > 0.0, "airm: matrix is not positive definite");
    const double l = std::log(t);
    acc += l * l;
  }
  return std::sqrt(acc);
}

/// Log-Euclidean distance: Frobenius norm between matrix logarithms.
inline double lerm(const SpdMatrix& x, const SpdMatrix& y) {
  detail::check_same_dim(x, y);
  return (matrix_log(x) - matrix_log(y)).norm();
}

/// LogDet divergence Tr(X Y^{-1}) - logdet(X Y^{-1}) - d. Asymmetric.
/// Computed from Cholesky factorizations only; no eigenvalues needed.
inline double logdet_div(const SpdMatrix& x, const SpdMatrix& y) {
  detail::check_same_dim(x, y);
  const auto llt_x = detail::checked_llt(x, "logdet_div");
  const auto llt_y = detail::checked_llt(y, "logdet_div");
  const double tr = llt_y.solve(x.m).trace();
  require(std::isfinite(tr), "logdet_div: numerically singular divisor");
  const double logdet_ratio =
      detail::log_det_from_llt(llt_x) - detail::log_det_from_llt(llt_y);
  return tr - logdet_ratio - x.d();
}

/// Frobenius distance between two parameterized representations.
inline double euclid_dist(const EuclidRep& a, const EuclidRep& b) {
  require(a.kind == b.kind, "representation kind mismatch");
  require(a.d == b.d, "representation dimension mismatch");
  require(a.mean_fused == b.mean_fused, "mean fusion mismatch");
  require(a.lambda == b.lambda, "lambda mismatch");
  require(a.vec.size() == b.vec.size(), "representation length mismatch");
  return (a.vec - b.vec).norm();
}

enum class Metric { Airm, Lerm, Logdet, Euclid };

inline Metric metric_from_string(const std::string& s) {
  if (s == "airm") return Metric::Airm;
  if (s == "lerm") return Metric::Lerm;
  if (s == "logdet") return Metric::Logdet;
  if (s == "euclid") return Metric::Euclid;
  throw error("unknown metric: " + s);
}

inline double spd_distance(Metric metric, const SpdMatrix& x, const SpdMatrix& y) {
  switch (metric) {
    case Metric::Airm:
      return airm(x, y);
    case Metric::Lerm:
      return lerm(x, y);
    case Metric::Logdet:
      return logdet_div(x, y);
    default:
      throw error("euclid metric needs representation vectors, not SPD matrices");
  }
}

/// All-pairs distances between two batches of SPD matrices.
inline MatrixXd pairwise_spd_distances(Metric metric, const std::vector<SpdMatrix>& a,
                                       const std::vector<SpdMatrix>& b) {
  MatrixXd out(static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(b.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j)
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          spd_distance(metric, a[i], b[j]);
  return out;
}

/// All-pairs Euclidean distances between representation rows.
inline MatrixXd pairwise_rep_distances(const MatrixXd& a, const MatrixXd& b) {
  require(a.cols() == b.cols(), "representation length mismatch between batches");
  MatrixXd out(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < b.rows(); ++j)
      out(i, j) = (a.row(i) - b.row(j)).norm();
  return out;
}

}  // namespace covparam
