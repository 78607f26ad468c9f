#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"

using namespace covparam;
using testutil::Rng;

namespace {

Dictionary wrap_dict(MatrixXd d) {
  Dictionary model;
  model.hp.K = static_cast<int>(d.cols());
  model.atom_class.assign(static_cast<std::size_t>(d.cols()), 0);
  model.A = MatrixXd::Identity(d.cols(), d.cols());
  model.W = MatrixXd::Zero(1, d.cols());
  model.D = std::move(d);
  return model;
}

LabeledBatch two_gaussians(Rng& rng, int d, int per_class, double separation) {
  LabeledBatch batch;
  batch.S.resize(d, 2 * per_class);
  for (int i = 0; i < 2 * per_class; ++i) {
    const int cls = i < per_class ? 0 : 1;
    for (int r = 0; r < d; ++r)
      batch.S(r, i) = rng.normal() + (cls == 0 ? separation : -separation) * (r == 0 ? 1.0 : 0.2);
    batch.labels.push_back(cls);
  }
  return batch;
}

}  // namespace

TEST_CASE("omp recovers an exact atom multiple in one step") {
  Rng rng(41);
  const MatrixXd dict = testutil::random_unit_dictionary(rng, 20, 30);
  const VectorXd s = 3.0 * dict.col(7);
  for (int t : {1, 3}) {
    const SparseCode code = omp(wrap_dict(dict), s, t);
    CHECK(code.nnz == 1);
    CHECK(code.coeffs(7) == Catch::Approx(3.0).margin(1e-12));
    CHECK((s - dict * code.coeffs).norm() <= 1e-12);
  }
}

TEST_CASE("omp returns the zero code for orthogonal or zero inputs") {
  MatrixXd dict = MatrixXd::Zero(4, 3);
  dict(0, 0) = dict(1, 1) = dict(2, 2) = 1.0;
  VectorXd s = VectorXd::Zero(4);
  s(3) = 5.0;  // orthogonal to every atom
  const SparseCode code = omp(wrap_dict(dict), s, 2);
  CHECK(code.nnz == 0);
  CHECK(code.coeffs.norm() == 0.0);

  const SparseCode zero = omp(wrap_dict(dict), VectorXd::Zero(4), 2);
  CHECK(zero.nnz == 0);
}

TEST_CASE("omp validates its arguments") {
  Rng rng(42);
  const MatrixXd dict = testutil::random_unit_dictionary(rng, 6, 8);
  CHECK_THROWS_AS(omp(wrap_dict(dict), VectorXd::Zero(6), 9), error);   // T > K
  CHECK_THROWS_AS(omp(wrap_dict(dict), VectorXd::Zero(6), 0), error);   // T < 1
  CHECK_THROWS_AS(omp(wrap_dict(dict), VectorXd::Zero(5), 2), error);   // dim mismatch
}

TEST_CASE("omp respects the sparsity budget and leaves an orthogonal residual") {
  Rng rng(43);
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 10 + static_cast<int>(rng.index(10));
    const int k = d + static_cast<int>(rng.index(20));
    const int t = 1 + static_cast<int>(rng.index(5));
    const MatrixXd dict = testutil::random_unit_dictionary(rng, d, k);
    VectorXd s(d);
    for (int i = 0; i < d; ++i) s(i) = rng.normal();
    std::vector<int> support;
    const VectorXd x = omp_core(dict, s, t, &support);
    CHECK(static_cast<int>(support.size()) <= t);
    CHECK(static_cast<int>((x.array() != 0.0).count()) <= t);
    const VectorXd residual = s - dict * x;
    for (int j : support) CHECK(std::abs(dict.col(j).dot(residual)) <= 1e-10);
  }
}

TEST_CASE("omp residual never beats the exhaustive best subset and ties it when recoverable") {
  Rng rng(44);
  for (int trial = 0; trial < 10; ++trial) {
    const auto inst = testutil::planted_sparse_instance(rng, 20, 40, 3);
    std::vector<int> support;
    const VectorXd x = omp_core(inst.dict, inst.signal, 3, &support);
    std::sort(support.begin(), support.end());
    CHECK((inst.signal - inst.dict * x).norm() <= 1e-8);

    const auto best = testutil::brute_force_best_subset(inst.dict, inst.signal, 3);
    CHECK(support == best.support);
    CHECK(support == inst.support);
  }
}

TEST_CASE("omp equals the best subset on near-orthogonal dictionaries") {
  Rng rng(45);
  for (int trial = 0; trial < 10; ++trial) {
    // orthonormal columns plus a small perturbation keeps coherence low
    MatrixXd dict = testutil::random_orthogonal(rng, 12).leftCols(9);
    dict += 0.05 * testutil::random_gaussian(rng, 12, 9);
    for (int j = 0; j < 9; ++j) dict.col(j).normalize();
    double coherence = 0.0;
    for (int a = 0; a < 9; ++a)
      for (int b = a + 1; b < 9; ++b)
        coherence = std::max(coherence, std::abs(dict.col(a).dot(dict.col(b))));
    REQUIRE(coherence < 0.3);

    VectorXd s(12);
    for (int i = 0; i < 12; ++i) s(i) = rng.normal();
    std::vector<int> support;
    const VectorXd x = omp_core(dict, s, 3, &support);
    std::sort(support.begin(), support.end());
    const auto best = testutil::brute_force_best_subset(dict, s, 3);
    const double omp_res = (s - dict * x).norm();
    CHECK(omp_res >= best.residual - 1e-12);
    CHECK(support == best.support);
    CHECK(omp_res <= best.residual + 1e-10);
  }
}

TEST_CASE("elastic net with a large l1 penalty returns zero") {
  Rng rng(46);
  const MatrixXd dict = testutil::random_unit_dictionary(rng, 8, 12);
  VectorXd s(8);
  for (int i = 0; i < 8; ++i) s(i) = rng.normal();
  const double t1 = 2.0 * (dict.transpose() * s).cwiseAbs().maxCoeff() + 0.1;
  const SparseCode code = elastic_net_encode(wrap_dict(dict), s, t1, 0.0);
  CHECK(code.coeffs.norm() == 0.0);
  CHECK(code.nnz == 0);
}

TEST_CASE("elastic net on an orthogonal design is soft thresholding") {
  const MatrixXd dict = MatrixXd::Identity(6, 6);
  Rng rng(47);
  VectorXd s(6);
  for (int i = 0; i < 6; ++i) s(i) = rng.uniform(-2.0, 2.0);
  const double t1 = 0.8;
  const VectorXd x = elastic_net_core(dict, s, t1, 0.0);
  for (int i = 0; i < 6; ++i) {
    const double expect = (std::abs(s(i)) > t1 / 2)
                              ? (s(i) > 0 ? s(i) - t1 / 2 : s(i) + t1 / 2)
                              : 0.0;
    CHECK(x(i) == Catch::Approx(expect).margin(1e-10));
  }
  // with the quadratic term the closed form gains a shrinkage factor
  const double t2 = 0.5;
  const VectorXd x2 = elastic_net_core(dict, s, t1, t2);
  for (int i = 0; i < 6; ++i) {
    double soft = 0.0;
    if (2.0 * s(i) > t1) soft = 2.0 * s(i) - t1;
    if (2.0 * s(i) < -t1) soft = 2.0 * s(i) + t1;
    CHECK(x2(i) == Catch::Approx(soft / (2.0 + t2)).margin(1e-10));
  }
}

TEST_CASE("elastic net matches the sign-pattern quadratic oracle on small instances") {
  Rng rng(48);
  for (int trial = 0; trial < 6; ++trial) {
    const MatrixXd dict = testutil::random_unit_dictionary(rng, 4, 6);
    VectorXd s(4);
    for (int i = 0; i < 4; ++i) s(i) = rng.normal();
    const double t1 = rng.uniform(0.05, 0.5);
    const double t2 = rng.uniform(0.0, 0.3);
    const VectorXd x = elastic_net_core(dict, s, t1, t2);
    const double got = testutil::elastic_net_objective(dict, s, x, t1, t2);
    const double oracle = testutil::elastic_net_oracle_objective(dict, s, t1, t2);
    CHECK(got <= oracle + 1e-6);
    CHECK(got >= oracle - 1e-9);  // oracle is exhaustive, cannot be beaten
    CHECK(got <= testutil::elastic_net_objective(dict, s, VectorXd::Zero(6), t1, t2));
  }
}

TEST_CASE("elastic net satisfies the per-coordinate subgradient conditions") {
  Rng rng(49);
  for (int trial = 0; trial < 10; ++trial) {
    const int d = 6 + static_cast<int>(rng.index(10));
    const int k = d + static_cast<int>(rng.index(10));
    const MatrixXd dict = testutil::random_unit_dictionary(rng, d, k);
    VectorXd s(d);
    for (int i = 0; i < d; ++i) s(i) = rng.normal();
    const double t1 = rng.uniform(0.01, 0.4);
    const double t2 = rng.uniform(0.0, 0.2);
    const VectorXd x = elastic_net_core(dict, s, t1, t2);
    const VectorXd residual = s - dict * x;
    for (int j = 0; j < k; ++j) {
      const double g = -2.0 * dict.col(j).dot(residual) + t2 * x(j);
      if (x(j) > 0.0)
        CHECK(std::abs(g + t1) <= 1e-8);
      else if (x(j) < 0.0)
        CHECK(std::abs(g - t1) <= 1e-8);
      else
        CHECK(std::abs(g) <= t1 + 1e-8);
    }
  }
}

TEST_CASE("elastic net validates penalties") {
  const MatrixXd dict = MatrixXd::Identity(3, 3);
  CHECK_THROWS_AS(elastic_net_core(dict, VectorXd::Ones(3), 0.0, 0.0), error);
  CHECK_THROWS_AS(elastic_net_core(dict, VectorXd::Ones(3), -0.1, 0.1), error);
}

TEST_CASE("supervision matrices follow the construction rule") {
  LabeledBatch batch;
  batch.S = MatrixXd::Zero(2, 2);
  batch.labels = {0, 1};
  const auto [q, h] = build_supervision(batch, {0, 0, 1, 1}, 2);
  MatrixXd q_expect(4, 2);
  q_expect << 1, 0, 1, 0, 0, 1, 0, 1;
  CHECK((q - q_expect).norm() == 0.0);
  for (int i = 0; i < 2; ++i) CHECK(h.col(i).sum() == 1.0);
  CHECK(h(0, 0) == 1.0);
  CHECK(h(1, 1) == 1.0);

  LabeledBatch one_class;
  one_class.S = MatrixXd::Zero(2, 3);
  one_class.labels = {0, 0, 0};
  const auto [q1, h1] = build_supervision(one_class, {0, 0}, 1);
  CHECK(q1.minCoeff() == 1.0);  // all ones

  LabeledBatch bad;
  bad.S = MatrixXd::Zero(2, 1);
  bad.labels = {3};
  CHECK_THROWS_AS(build_supervision(bad, {0, 1}, 2), error);
}

TEST_CASE("plain ksvd: reconstruction error is non-increasing") {
  Rng rng(50);
  LabeledBatch batch;
  const int d = 8, n = 60;
  batch.S = testutil::random_gaussian(rng, d, n);
  for (int i = 0; i < n; ++i) batch.labels.push_back(i % 2);

  LcksvdParams params;
  params.K = 12;
  params.alpha = 0.0;
  params.beta = 0.0;
  params.T = 3;
  params.iterations = 15;
  params.seed = 99;

  TrainLog log;
  lcksvd_train(batch, params, &log);
  REQUIRE(log.objective.size() == 15);
  for (std::size_t i = 1; i < log.objective.size(); ++i) {
    const bool replaced = std::find(log.replacement_iterations.begin(),
                                    log.replacement_iterations.end(),
                                    static_cast<int>(i + 1)) != log.replacement_iterations.end();
    if (!replaced) CHECK(log.objective[i] <= log.objective[i - 1] + 1e-9);
  }
}

TEST_CASE("lcksvd separates two well-separated gaussian classes") {
  Rng rng(51);
  const LabeledBatch batch = two_gaussians(rng, 10, 40, 5.0);

  LcksvdParams params;
  params.K = 20;
  params.alpha = 25.0;
  params.beta = 25.0;
  params.T = 3;
  params.iterations = 30;
  params.seed = 7;

  TrainLog log;
  const Dictionary model = lcksvd_train(batch, params, &log);
  CHECK(log.train_accuracy == 1.0);
  REQUIRE(log.objective.size() == 30);
  CHECK(log.objective.back() <= log.objective.front() + 1e-9);

  // every sample classified correctly through the public path as well
  for (int i = 0; i < batch.n(); ++i) {
    const auto [label, scores] = classify(model, batch.S.col(i));
    CHECK(label == batch.labels[static_cast<std::size_t>(i)]);
    CHECK(scores.size() == 2);
  }
}

TEST_CASE("lcksvd objective trace is monotone on random data") {
  Rng rng(52);
  LabeledBatch batch;
  batch.S = testutil::random_gaussian(rng, 6, 50);
  for (int i = 0; i < 50; ++i) batch.labels.push_back(i % 3);

  LcksvdParams params;
  params.K = 9;
  params.alpha = 4.0;
  params.beta = 2.0;
  params.T = 2;
  params.iterations = 30;
  params.seed = 1;

  TrainLog log;
  lcksvd_train(batch, params, &log);
  CHECK(log.objective[29] <= log.objective[0] + 1e-9);
  for (std::size_t i = 1; i < log.objective.size(); ++i) {
    const bool replaced = std::find(log.replacement_iterations.begin(),
                                    log.replacement_iterations.end(),
                                    static_cast<int>(i + 1)) != log.replacement_iterations.end();
    if (!replaced) CHECK(log.objective[i] <= log.objective[i - 1] + 1e-9);
  }
}

TEST_CASE("lcksvd columns stay unit norm and training is bit-deterministic") {
  Rng rng(53);
  const LabeledBatch batch = two_gaussians(rng, 6, 20, 2.0);

  LcksvdParams params;
  params.K = 10;
  params.alpha = 9.0;
  params.beta = 16.0;
  params.T = 2;
  params.iterations = 12;
  params.seed = 1234;

  const Dictionary a = lcksvd_train(batch, params);
  const Dictionary b = lcksvd_train(batch, params);
  CHECK(a.D == b.D);
  CHECK(a.A == b.A);
  CHECK(a.W == b.W);
  CHECK(a.atom_class == b.atom_class);
  for (int k = 0; k < a.num_atoms(); ++k)
    CHECK(std::abs(a.D.col(k).norm() - 1.0) <= 1e-10);

  LcksvdParams other = params;
  other.seed = 4321;
  const Dictionary c = lcksvd_train(batch, other);
  CHECK(a.D != c.D);
}

TEST_CASE("lcksvd validates its preconditions") {
  Rng rng(54);
  LabeledBatch batch = two_gaussians(rng, 6, 10, 2.0);

  LcksvdParams params;
  params.K = 4;  // below d_rep
  params.T = 1;
  CHECK_THROWS_AS(lcksvd_train(batch, params), error);

  params.K = 10;
  batch.labels.assign(batch.labels.size(), 0);
  batch.labels.back() = 2;  // class 1 is empty
  CHECK_THROWS_AS(lcksvd_train(batch, params), error);

  LabeledBatch tiny;
  tiny.S = testutil::random_gaussian(rng, 2, 3);
  tiny.labels = {0, 1, 2};
  params.K = 2;  // cannot give each class an atom
  CHECK_THROWS_AS(lcksvd_train(tiny, params), error);
}

TEST_CASE("classification tie-breaks and scaling behave") {
  Rng rng(55);
  Dictionary model = wrap_dict(testutil::random_unit_dictionary(rng, 6, 8));
  model.W = testutil::random_gaussian(rng, 3, 8);
  model.hp.T = 2;

  const auto [zero_label, zero_scores] = classify(model, VectorXd::Zero(6));
  CHECK(zero_label == 0);
  CHECK(zero_scores.norm() == 0.0);

  VectorXd s(6);
  for (int i = 0; i < 6; ++i) s(i) = rng.normal();
  // pin row 1 to the code direction so its score is positive and maximal
  const VectorXd code = omp_core(model.D, s, 2);
  model.W.row(1) = 10.0 * code.transpose();
  const auto [label, scores] = classify(model, s);
  REQUIRE(label == 1);
  REQUIRE(scores(1) > 0.0);
  Dictionary scaled = model;
  scaled.W.row(1) *= 3.0;  // scaling an already-maximal positive row keeps the argmax
  const auto [label2, scores2] = classify(scaled, s);
  CHECK(label2 == 1);
  CHECK(scores2(1) == Catch::Approx(3.0 * scores(1)));
}
