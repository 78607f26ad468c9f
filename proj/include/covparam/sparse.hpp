#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <vector>

#include "covparam/common.hpp"
#include "covparam/rng.hpp"

namespace covparam {

/// Learned dictionary with the label-consistency transform and the joint
/// linear classifier. Columns of D are unit norm.
struct Dictionary {
  MatrixXd D;                   // d_rep x K
  MatrixXd A;                   // K x K
  MatrixXd W;                   // m x K
  std::vector<int> atom_class;  // K entries

  struct Hyperparams {
    double alpha = 0.0;
    double beta = 0.0;
    int T = 1;
    int K = 0;
    int iterations = 0;
    std::uint64_t seed = 0;
  } hp;

  int d_rep() const { return static_cast<int>(D.rows()); }
  int num_atoms() const { return static_cast<int>(D.cols()); }
  int num_classes() const { return static_cast<int>(W.rows()); }
};

struct SparseCode {
  enum class Mode { Hard, Soft };

  VectorXd coeffs;
  int nnz = 0;
  Mode mode = Mode::Hard;
  int T = 0;          // hard mode
  double t1 = 0.0;    // soft mode
  double t2 = 0.0;    // soft mode
};

struct LabeledBatch {
  MatrixXd S;               // d_rep x N, one sample per column
  std::vector<int> labels;  // N entries in [0, m)

  int n() const { return static_cast<int>(S.cols()); }
};

namespace detail {

inline VectorXd least_squares_on_support(const MatrixXd& D, const VectorXd& y,
                                         const std::vector<int>& support) {
  MatrixXd sub(D.rows(), static_cast<Eigen::Index>(support.size()));
  for (std::size_t i = 0; i < support.size(); ++i)
    sub.col(static_cast<Eigen::Index>(i)) = D.col(support[i]);
  Eigen::ColPivHouseholderQR<MatrixXd> qr(sub);
  return qr.solve(y);
}

inline VectorXd scatter(const VectorXd& values, const std::vector<int>& support, int k) {
  VectorXd x = VectorXd::Zero(k);
  for (std::size_t i = 0; i < support.size(); ++i)
    x(support[i]) = values(static_cast<Eigen::Index>(i));
  return x;
}

}  // namespace detail

/// Greedy orthogonal matching pursuit: selects at most T atoms by maximum
/// absolute correlation (lowest index on ties), refitting least squares on
/// the support after every selection. Stops early once the residual or the
/// best correlation is negligible relative to the input norm, so an input
/// already spanned by the selected atoms does not consume extra atoms.
inline VectorXd omp_core(const MatrixXd& D, const VectorXd& s, int T,
                         std::vector<int>* support_out = nullptr) {
  const int K = static_cast<int>(D.cols());
  require(T >= 1, "omp: T must be >= 1");
  require(T <= K, "omp: T exceeds the number of atoms");
  require(D.rows() == s.size(), "omp: dimension mismatch");

  const double stop_tol = 1e-12 * s.norm();
  VectorXd residual = s;
  std::vector<int> support;
  std::vector<char> selected(static_cast<std::size_t>(K), 0);
  VectorXd coeffs;

  for (int t = 0; t < T; ++t) {
    if (residual.norm() <= stop_tol) break;
    const VectorXd corr = D.transpose() * residual;
    int best = -1;
    double best_abs = 0.0;
    for (int k = 0; k < K; ++k) {
      if (selected[static_cast<std::size_t>(k)]) continue;
      const double a = std::abs(corr(k));
      if (a > best_abs) {
        best_abs = a;
        best = k;
      }
    }
    if (best < 0 || best_abs <= stop_tol) break;
    selected[static_cast<std::size_t>(best)] = 1;
    support.push_back(best);
    coeffs = detail::least_squares_on_support(D, s, support);
    residual = s;
    for (std::size_t i = 0; i < support.size(); ++i)
      residual -= coeffs(static_cast<Eigen::Index>(i)) * D.col(support[i]);
  }

  if (support_out) *support_out = support;
  if (support.empty()) return VectorXd::Zero(K);
  return detail::scatter(coeffs, support, K);
}

inline SparseCode omp(const Dictionary& model, const VectorXd& s, int T) {
  SparseCode code;
  code.mode = SparseCode::Mode::Hard;
  code.T = T;
  code.coeffs = omp_core(model.D, s, T);
  code.nnz = static_cast<int>((code.coeffs.array() != 0.0).count());
  return code;
}

namespace detail {

inline double soft_threshold(double v, double t) {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}

inline double elastic_net_kkt_violation(const MatrixXd& D, const VectorXd& residual,
                                        const VectorXd& x, double t1, double t2) {
  double worst = 0.0;
  for (Eigen::Index j = 0; j < D.cols(); ++j) {
    const double g = -2.0 * D.col(j).dot(residual) + t2 * x(j);
    double v;
    if (x(j) > 0.0)
      v = std::abs(g + t1);
    else if (x(j) < 0.0)
      v = std::abs(g - t1);
    else
      v = std::max(0.0, std::abs(g) - t1);
    worst = std::max(worst, v);
  }
  return worst;
}

}  // namespace detail

/// Soft encoder: minimizes |s - Dx|^2 + t1 |x|_1 + (t2/2) |x|^2 by cyclic
/// coordinate descent from x = 0. Converged when every coordinate satisfies
/// its subgradient condition.
inline VectorXd elastic_net_core(const MatrixXd& D, const VectorXd& s, double t1,
                                 double t2) {
  require(t1 >= 0.0 && t2 >= 0.0, "elastic net: penalties must be nonnegative");
  require(t1 > 0.0 || t2 > 0.0, "elastic net: t1 and t2 cannot both be zero");
  require(D.rows() == s.size(), "elastic net: dimension mismatch");

  const Eigen::Index K = D.cols();
  VectorXd col_sq(K);
  for (Eigen::Index j = 0; j < K; ++j) col_sq(j) = D.col(j).squaredNorm();

  VectorXd x = VectorXd::Zero(K);
  VectorXd residual = s;
  constexpr int kMaxSweeps = 10000;
  constexpr double kTol = 1e-10;

  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    for (Eigen::Index j = 0; j < K; ++j) {
      if (col_sq(j) == 0.0) continue;
      const double c = D.col(j).dot(residual) + col_sq(j) * x(j);
      const double z = detail::soft_threshold(2.0 * c, t1) / (2.0 * col_sq(j) + t2);
      if (z != x(j)) {
        residual += D.col(j) * (x(j) - z);
        x(j) = z;
      }
    }
    residual = s - D * x;  // refresh to kill accumulated drift
    if (detail::elastic_net_kkt_violation(D, residual, x, t1, t2) <= kTol) return x;
  }
  if (detail::elastic_net_kkt_violation(D, residual, x, t1, t2) <= 1e-8) return x;
  throw error("elastic net: no convergence within the iteration cap (ill-conditioned?)");
}

inline SparseCode elastic_net_encode(const Dictionary& model, const VectorXd& s,
                                     double t1, double t2) {
  SparseCode code;
  code.mode = SparseCode::Mode::Soft;
  code.t1 = t1;
  code.t2 = t2;
  code.coeffs = elastic_net_core(model.D, s, t1, t2);
  code.nnz = static_cast<int>((code.coeffs.array() != 0.0).count());
  return code;
}

/// Builds the label-consistency target Q (atom k may fire for sample i iff
/// they share a class) and the one-hot label matrix H.
inline std::pair<MatrixXd, MatrixXd> build_supervision(const LabeledBatch& batch,
                                                       const std::vector<int>& atom_class,
                                                       int num_classes = -1) {
  const int n = batch.n();
  require(static_cast<int>(batch.labels.size()) == n, "labels do not match batch size");
  int m = num_classes;
  if (m < 0) {
    m = 0;
    for (int c : batch.labels) m = std::max(m, c + 1);
    for (int c : atom_class) m = std::max(m, c + 1);
  }
  for (int c : batch.labels) require(c >= 0 && c < m, "label out of range");
  for (int c : atom_class) require(c >= 0 && c < m, "atom class out of range");

  const int k = static_cast<int>(atom_class.size());
  MatrixXd q = MatrixXd::Zero(k, n);
  MatrixXd h = MatrixXd::Zero(m, n);
  for (int i = 0; i < n; ++i) {
    h(batch.labels[static_cast<std::size_t>(i)], i) = 1.0;
    for (int a = 0; a < k; ++a)
      if (atom_class[static_cast<std::size_t>(a)] == batch.labels[static_cast<std::size_t>(i)])
        q(a, i) = 1.0;
  }
  return {std::move(q), std::move(h)};
}

struct LcksvdParams {
  int K = 0;
  double alpha = 25.0;  // weight of the label-consistency term
  double beta = 25.0;   // weight of the classifier term
  int T = 1;
  int iterations = 50;
  std::uint64_t seed = 0;
};

/// Per-iteration objective values and atom-replacement bookkeeping.
struct TrainLog {
  std::vector<double> objective;            // stacked objective after each iteration
  std::vector<int> replacement_iterations;  // 1-based iterations that replaced an atom
  double train_accuracy = 0.0;
};

namespace detail {

// Ridge regression M X^T (X X^T + I)^{-1}, the standard initialization of
// the transform and classifier blocks.
inline MatrixXd ridge_fit(const MatrixXd& targets, const MatrixXd& codes) {
  const Eigen::Index k = codes.rows();
  MatrixXd gram = codes * codes.transpose() + MatrixXd::Identity(k, k);
  return gram.ldlt().solve(codes * targets.transpose()).transpose();
}

// Optimal rank-1 refit of atom k over the samples that use it. E carries
// the residual with atom k's contribution added back.
inline void rank_one_update(MatrixXd& E, VectorXd& atom, Eigen::VectorXd& row) {
  if (E.cols() == 1) {
    const double sigma = E.col(0).norm();
    if (sigma < 1e-300) {
      row.setZero();
      return;
    }
    atom = E.col(0) / sigma;
    row.resize(1);
    row(0) = sigma;
  } else {
    Eigen::BDCSVD<MatrixXd> svd(E, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const double sigma = svd.singularValues()(0);
    if (sigma < 1e-300) {
      row.setZero();
      return;
    }
    atom = svd.matrixU().col(0);
    row = sigma * svd.matrixV().col(0);
  }
  // fix the sign so repeated runs cannot flip u and v together
  Eigen::Index imax = 0;
  atom.cwiseAbs().maxCoeff(&imax);
  if (atom(imax) < 0.0) {
    atom = -atom;
    row = -row;
  }
}

}  // namespace detail

/// Label-consistent K-SVD. The three objective terms are stacked into one
/// K-SVD problem over [S; sqrt(alpha) Q; sqrt(beta) H] with joint column
/// normalization, and D, A, W are de-normalized afterwards. The sparse
/// coding stage keeps the better of a fresh OMP code and a least-squares
/// refit of the previous support, which makes the recorded objective
/// non-increasing by construction.
inline Dictionary lcksvd_train(const LabeledBatch& batch, const LcksvdParams& p,
                               TrainLog* log = nullptr) {
  const int d = static_cast<int>(batch.S.rows());
  const int n = batch.n();
  require(n >= 1, "training batch is empty");
  require(batch.S.allFinite(), "training samples must be finite");
  require(static_cast<int>(batch.labels.size()) == n, "labels do not match batch size");
  require(p.alpha >= 0.0 && p.beta >= 0.0, "alpha and beta must be nonnegative");
  require(p.T >= 1, "T must be >= 1");
  require(p.iterations >= 1, "iterations must be >= 1");

  int m = 0;
  for (int c : batch.labels) {
    require(c >= 0, "labels must be nonnegative");
    m = std::max(m, c + 1);
  }
  std::vector<std::vector<int>> class_members(static_cast<std::size_t>(m));
  for (int i = 0; i < n; ++i)
    class_members[static_cast<std::size_t>(batch.labels[static_cast<std::size_t>(i)])].push_back(i);
  for (int c = 0; c < m; ++c)
    require(!class_members[static_cast<std::size_t>(c)].empty(),
            "class " + std::to_string(c) + " has no training samples");

  require(p.K >= d, "K must be at least the representation dimension");
  require(p.K >= m, "K must allow at least one atom per class");
  require(p.T <= p.K, "T exceeds the number of atoms");
  if (n < p.K) {
    std::cerr << "[covparam] warning: fewer training samples (" << n
              << ") than atoms (" << p.K << ")\n";
  }

  Rng rng(p.seed);

  // contiguous per-class sub-dictionaries, remainder atoms to the first classes
  std::vector<int> atom_class;
  atom_class.reserve(static_cast<std::size_t>(p.K));
  for (int c = 0; c < m; ++c) {
    int count = p.K / m + (c < p.K % m ? 1 : 0);
    for (int a = 0; a < count; ++a) atom_class.push_back(c);
  }

  // initial atoms: training samples drawn per class, cycling when a class
  // has fewer samples than atoms
  MatrixXd init_d(d, p.K);
  {
    int col = 0;
    for (int c = 0; c < m; ++c) {
      std::vector<int> order = class_members[static_cast<std::size_t>(c)];
      rng.shuffle(order);
      int take = 0;
      while (col < p.K && atom_class[static_cast<std::size_t>(col)] == c) {
        const int idx = order[static_cast<std::size_t>(take % static_cast<int>(order.size()))];
        VectorXd atom = batch.S.col(idx);
        const double norm = atom.norm();
        require(norm > 0.0, "zero training sample cannot seed an atom");
        init_d.col(col) = atom / norm;
        ++take;
        ++col;
      }
    }
  }

  auto [q, h] = build_supervision(batch, atom_class, m);

  MatrixXd init_codes(p.K, n);
  for (int i = 0; i < n; ++i) init_codes.col(i) = omp_core(init_d, batch.S.col(i), p.T);
  const MatrixXd init_a = detail::ridge_fit(q, init_codes);
  const MatrixXd init_w = detail::ridge_fit(h, init_codes);

  const double sa = std::sqrt(p.alpha);
  const double sb = std::sqrt(p.beta);
  const int rows = d + p.K + m;
  MatrixXd stacked(rows, n);
  stacked.topRows(d) = batch.S;
  stacked.middleRows(d, p.K) = sa * q;
  stacked.bottomRows(m) = sb * h;

  MatrixXd joint(rows, p.K);
  joint.topRows(d) = init_d;
  joint.middleRows(d, p.K) = sa * init_a;
  joint.bottomRows(m) = sb * init_w;
  for (int k = 0; k < p.K; ++k) {
    const double norm = joint.col(k).norm();
    require(norm > 0.0, "degenerate initial atom");
    joint.col(k) /= norm;
  }

  MatrixXd codes = MatrixXd::Zero(p.K, n);
  bool have_codes = false;
  std::vector<int> support;

  for (int it = 1; it <= p.iterations; ++it) {
    // sparse coding
    for (int i = 0; i < n; ++i) {
      VectorXd fresh = omp_core(joint, stacked.col(i), p.T, &support);
      double fresh_res = (stacked.col(i) - joint * fresh).norm();
      if (have_codes) {
        std::vector<int> prev;
        for (int k = 0; k < p.K; ++k)
          if (codes(k, i) != 0.0) prev.push_back(k);
        if (!prev.empty()) {
          const VectorXd vals = detail::least_squares_on_support(joint, stacked.col(i), prev);
          const VectorXd refit = detail::scatter(vals, prev, p.K);
          const double refit_res = (stacked.col(i) - joint * refit).norm();
          if (refit_res < fresh_res) {
            codes.col(i) = refit;
            continue;
          }
        }
      }
      codes.col(i) = fresh;
    }
    have_codes = true;

    // dictionary update, one atom at a time against the running residual
    MatrixXd residual = stacked - joint * codes;
    bool replaced = false;
    std::vector<char> used(static_cast<std::size_t>(n), 0);
    for (int k = 0; k < p.K; ++k) {
      std::vector<int> omega;
      for (int i = 0; i < n; ++i)
        if (codes(k, i) != 0.0) omega.push_back(i);

      if (omega.empty()) {
        // dead atom: replace with the worst-reconstructed sample
        int worst = -1;
        double worst_err = -1.0;
        for (int i = 0; i < n; ++i) {
          if (used[static_cast<std::size_t>(i)]) continue;
          const double e = residual.col(i).squaredNorm();
          if (e > worst_err) {
            worst_err = e;
            worst = i;
          }
        }
        if (worst < 0) continue;  // every sample already recycled this pass
        const double norm = stacked.col(worst).norm();
        if (norm <= 0.0) continue;
        joint.col(k) = stacked.col(worst) / norm;
        used[static_cast<std::size_t>(worst)] = 1;
        replaced = true;
        continue;
      }

      MatrixXd err(rows, static_cast<Eigen::Index>(omega.size()));
      for (std::size_t jj = 0; jj < omega.size(); ++jj)
        err.col(static_cast<Eigen::Index>(jj)) =
            residual.col(omega[jj]) + joint.col(k) * codes(k, omega[jj]);
      VectorXd atom = joint.col(k);
      VectorXd row;
      detail::rank_one_update(err, atom, row);
      joint.col(k) = atom;
      for (std::size_t jj = 0; jj < omega.size(); ++jj) {
        const double v = row.size() ? row(static_cast<Eigen::Index>(jj)) : 0.0;
        codes(k, omega[jj]) = v;
        residual.col(omega[jj]) = err.col(static_cast<Eigen::Index>(jj)) - joint.col(k) * v;
      }
    }

    if (log) {
      log->objective.push_back(residual.squaredNorm());
      if (replaced) log->replacement_iterations.push_back(it);
    }
  }

  // unstack and de-normalize so D has unit columns again
  Dictionary model;
  model.D = joint.topRows(d);
  model.A = sa > 0.0 ? MatrixXd(joint.middleRows(d, p.K) / sa) : MatrixXd::Zero(p.K, p.K);
  model.W = sb > 0.0 ? MatrixXd(joint.bottomRows(m) / sb) : MatrixXd::Zero(m, p.K);
  for (int k = 0; k < p.K; ++k) {
    double norm = model.D.col(k).norm();
    if (norm < 1e-300) norm = 1.0;  // atom carries no reconstruction mass
    model.D.col(k) /= norm;
    model.A.col(k) /= norm;
    model.W.col(k) /= norm;
  }
  model.atom_class = std::move(atom_class);
  model.hp = {p.alpha, p.beta, p.T, p.K, p.iterations, p.seed};

  if (log) {
    int correct = 0;
    for (int i = 0; i < n; ++i) {
      const VectorXd code = omp_core(model.D, batch.S.col(i), p.T);
      const VectorXd scores = model.W * code;
      Eigen::Index arg = 0;
      for (Eigen::Index r = 1; r < scores.size(); ++r)
        if (scores(r) > scores(arg)) arg = r;
      if (static_cast<int>(arg) == batch.labels[static_cast<std::size_t>(i)]) ++correct;
    }
    log->train_accuracy = static_cast<double>(correct) / n;
  }
  return model;
}

/// Hard-sparsity encode then linear classification; argmax breaks ties
/// toward the lowest class index.
inline std::pair<int, VectorXd> classify(const Dictionary& model, const VectorXd& s,
                                         int T = -1) {
  const int t = T > 0 ? T : model.hp.T;
  const VectorXd code = omp_core(model.D, s, t);
  VectorXd scores = model.W * code;
  Eigen::Index arg = 0;
  for (Eigen::Index r = 1; r < scores.size(); ++r)
    if (scores(r) > scores(arg)) arg = r;
  return {static_cast<int>(arg), std::move(scores)};
}

}  // namespace covparam
