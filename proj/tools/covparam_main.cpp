// covparam command line: feature extraction, dictionary training,
// classification, SPD distance matrices, and the similarity benchmark.

#include <CLI11.hpp>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "covparam/covparam.hpp"

namespace {

using covparam::json;

struct GlobalArgs {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out_path;
};

covparam::ExperimentConfig resolve_config(const GlobalArgs& g) {
  covparam::ExperimentConfig cfg;
  if (!g.config_path.empty()) cfg = covparam::load_config(g.config_path);
  if (g.seed_set) cfg.seed = g.seed;
  return cfg;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  covparam::require(bool(f), "cannot open for writing: " + path);
  f << text;
  f.flush();
  covparam::require(bool(f), "write failed: " + path);
}

int cmd_extract(const GlobalArgs& g, const std::vector<std::string>& images,
                const std::string& cov_out) {
  covparam::require(!g.out_path.empty(), "extract: --out is required");
  covparam::require(!images.empty(), "extract: no input images given");
  const auto cfg = resolve_config(g);
  const auto kernels = covparam::grad5_kernels();

  std::vector<covparam::VectorXd> rows;
  std::vector<covparam::VectorXd> cov_rows;
  int d = 0;
  for (const auto& path : images) {
    covparam::Image im = covparam::load_image(path);
    if (cfg.resize > 0) im = covparam::resize_bilinear(im, cfg.resize, cfg.resize);
    const auto f = covparam::compute_feature_tensor(im, kernels);
    const auto integrals = covparam::build_integral_tensors(f);
    for (const auto& rect : covparam::tile_image(im, cfg.block_size, cfg.block_stride)) {
      const auto desc = covparam::regularize_spd(
          covparam::region_covariance(integrals, rect), cfg.eps_scale);
      const auto rep = covparam::parameterize(desc, cfg.param_kind, cfg.lambda, true);
      d = rep.d;
      rows.push_back(rep.vec);
      if (!cov_out.empty()) {
        covparam::VectorXd flat(desc.d() * desc.d());
        for (int i = 0; i < desc.d(); ++i)
          for (int j = 0; j < desc.d(); ++j) flat(i * desc.d() + j) = desc.C(i, j);
        cov_rows.push_back(flat);
      }
    }
  }

  covparam::RepBatch batch;
  batch.kind = cfg.param_kind;
  batch.d = d;
  batch.lambda = cfg.lambda;
  batch.mean_fused = true;
  batch.rows.resize(static_cast<Eigen::Index>(rows.size()), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    batch.rows.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  covparam::write_reps_csv(g.out_path, batch);

  if (!cov_out.empty()) {
    covparam::MatrixXd m(static_cast<Eigen::Index>(cov_rows.size()), cov_rows.front().size());
    for (std::size_t i = 0; i < cov_rows.size(); ++i)
      m.row(static_cast<Eigen::Index>(i)) = cov_rows[i].transpose();
    covparam::write_matrix_csv(cov_out, m,
                               {"covparam-covs d=" + std::to_string(d) + " regularized=1"});
  }
  std::cerr << "[covparam] wrote " << rows.size() << " representations to " << g.out_path
            << "\n";
  return 0;
}

int cmd_train(const GlobalArgs& g, const std::string& data_path,
              const std::string& labels_path) {
  const auto cfg = resolve_config(g);
  const auto batch_csv = covparam::read_reps_csv(data_path);
  const auto labels = covparam::read_labels_csv(labels_path);
  covparam::require(static_cast<Eigen::Index>(labels.size()) == batch_csv.rows.rows(),
                    "train: label count does not match sample count");

  covparam::LabeledBatch batch;
  batch.S = batch_csv.rows.transpose();
  batch.labels = labels;

  int m = 0;
  for (int c : labels) m = std::max(m, c + 1);
  covparam::LcksvdParams params;
  params.K = cfg.K > 0 ? cfg.K
                       : std::max(((static_cast<int>(batch.S.rows()) + m - 1) / m) * m, m);
  params.alpha = cfg.alpha;
  params.beta = cfg.beta;
  params.T = cfg.T;
  params.iterations = cfg.iterations;
  params.seed = cfg.seed;

  covparam::TrainLog log;
  const auto model = covparam::lcksvd_train(batch, params, &log);
  if (!g.out_path.empty()) covparam::save_model(g.out_path, model);

  json summary;
  summary["d_rep"] = model.d_rep();
  summary["K"] = model.num_atoms();
  summary["classes"] = model.num_classes();
  summary["objective_initial"] = log.objective.front();
  summary["objective_final"] = log.objective.back();
  summary["atom_replacements"] = log.replacement_iterations;
  summary["train_accuracy"] = log.train_accuracy;
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int cmd_classify(const GlobalArgs& g, const std::string& model_path,
                 const std::string& data_path, const std::string& labels_path) {
  const auto model = covparam::load_model(model_path);
  const auto batch_csv = covparam::read_reps_csv(data_path);
  const Eigen::Index n = batch_csv.rows.rows();

  std::vector<int> predictions;
  std::ostringstream pred_csv;
  pred_csv << "# covparam-predictions classes=" << model.num_classes() << "\n";
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto [label, scores] = covparam::classify(model, batch_csv.rows.row(i).transpose());
    predictions.push_back(label);
    pred_csv << label;
    for (Eigen::Index k = 0; k < scores.size(); ++k) pred_csv << ',' << covparam::g17(scores(k));
    pred_csv << "\n";
  }
  if (!g.out_path.empty()) write_text(g.out_path, pred_csv.str());

  json summary;
  summary["samples"] = static_cast<int>(n);
  if (!labels_path.empty()) {
    const auto labels = covparam::read_labels_csv(labels_path);
    covparam::require(static_cast<Eigen::Index>(labels.size()) == n,
                      "classify: label count does not match sample count");
    int correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == predictions[i]) ++correct;
    summary["accuracy"] = static_cast<double>(correct) / static_cast<double>(n);
  }
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int cmd_dist(const GlobalArgs& g, const std::string& metric_name, const std::string& in_path,
             const std::string& in2_path) {
  covparam::require(!g.out_path.empty(), "dist: --out is required");
  const auto metric = covparam::metric_from_string(metric_name);
  const std::string second = in2_path.empty() ? in_path : in2_path;

  covparam::MatrixXd result;
  if (metric == covparam::Metric::Euclid) {
    const covparam::MatrixXd a = covparam::read_matrix_csv(in_path);
    const covparam::MatrixXd b = covparam::read_matrix_csv(second);
    result = covparam::pairwise_rep_distances(a, b);
  } else {
    const auto load_spds = [](const std::string& path) {
      const covparam::MatrixXd rows = covparam::read_matrix_csv(path);
      const int d = static_cast<int>(std::lround(std::sqrt(static_cast<double>(rows.cols()))));
      covparam::require(static_cast<Eigen::Index>(d) * d == rows.cols(),
                        "dist: rows of " + path + " are not flattened square matrices");
      std::vector<covparam::SpdMatrix> out;
      for (Eigen::Index i = 0; i < rows.rows(); ++i) {
        covparam::MatrixXd m(d, d);
        for (int r = 0; r < d; ++r)
          for (int c = 0; c < d; ++c) m(r, c) = rows(i, r * d + c);
        out.push_back(covparam::SpdMatrix::from(m));
      }
      return out;
    };
    result = covparam::pairwise_spd_distances(metric, load_spds(in_path), load_spds(second));
  }
  covparam::write_matrix_csv(g.out_path, result,
                             {"covparam-dist metric=" + metric_name});
  return 0;
}

int cmd_bench(const GlobalArgs& g, const std::vector<int>& dims, int reps,
              const std::string& slopes_path) {
  const auto result = covparam::bench_metrics(dims, reps, g.seed_set ? g.seed : 0);

  std::ostringstream csv;
  csv << "# covparam-bench columns=metric,d,reps,median_ns,mad_ns\n";
  for (const auto& r : result.records) {
    csv << r.metric << ',' << r.d << ',' << r.reps << ',' << covparam::g17(r.median_ns)
        << ',' << covparam::g17(r.mad_ns) << "\n";
  }
  if (!g.out_path.empty()) write_text(g.out_path, csv.str());

  json slopes;
  for (const auto& [name, slope] : result.slopes) slopes[name] = slope;
  const std::string text = slopes.dump(2) + "\n";
  if (!slopes_path.empty())
    write_text(slopes_path, text);
  else
    std::cout << text;
  return 0;
}

int cmd_eval(const GlobalArgs& g, const std::string& timings_path) {
  covparam::require(!g.config_path.empty(), "eval: --config is required");
  auto cfg = resolve_config(g);
  const auto report = covparam::run_experiment(cfg);
  const std::string text = covparam::report_to_json(report).dump(2) + "\n";

  std::string out = g.out_path.empty() ? cfg.paths.report : g.out_path;
  if (out.empty())
    std::cout << text;
  else
    write_text(out, text);

  std::cerr << "[covparam] timings: extract " << report.timings.extract_s << " s, train "
            << report.timings.train_s << " s, classify " << report.timings.classify_s
            << " s\n";
  if (!timings_path.empty()) {
    json t;
    t["extract_s"] = report.timings.extract_s;
    t["train_s"] = report.timings.train_s;
    t["classify_s"] = report.timings.classify_s;
    write_text(timings_path, t.dump(2) + "\n");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"covparam: region covariance parameterization toolkit"};
  app.require_subcommand(1);

  GlobalArgs g;
  app.add_option("--config", g.config_path, "JSON experiment config");
  app.add_option("--seed", g.seed, "seed override")->each([&g](const std::string&) {
    g.seed_set = true;
  });
  app.add_option("--out", g.out_path, "primary output path");

  auto* extract = app.add_subcommand("extract", "images to representation CSV");
  std::vector<std::string> images;
  std::string cov_out;
  extract->add_option("images", images, "input images (.pgm/.png)");
  extract->add_option("--cov-out", cov_out, "also write flattened covariance rows");

  auto* train = app.add_subcommand("train", "learn a dictionary from representations");
  std::string data_path, labels_path;
  train->add_option("--data", data_path, "representation CSV")->required();
  train->add_option("--labels", labels_path, "labels CSV (one class id per row)")->required();

  auto* classify = app.add_subcommand("classify", "classify representations with a model");
  std::string model_path, cls_data, cls_labels;
  classify->add_option("--model", model_path, "model file")->required();
  classify->add_option("--data", cls_data, "representation CSV")->required();
  classify->add_option("--labels", cls_labels, "optional labels for accuracy");

  auto* dist = app.add_subcommand("dist", "pairwise distance matrix");
  std::string metric_name = "euclid", in_path, in2_path;
  dist->add_option("--metric", metric_name, "airm|lerm|logdet|euclid");
  dist->add_option("--in", in_path, "input CSV")->required();
  dist->add_option("--in2", in2_path, "second input CSV (defaults to --in)");

  auto* bench = app.add_subcommand("bench", "similarity timing benchmark");
  std::vector<int> dims = {16, 32, 64, 128, 256};
  int reps = 50;
  std::string slopes_path;
  bench->add_option("--dims", dims, "ascending dimension list");
  bench->add_option("--reps", reps, "repetitions per measurement");
  bench->add_option("--slopes", slopes_path, "write fitted slopes JSON here");

  auto* eval = app.add_subcommand("eval", "run the full experiment protocol");
  std::string timings_path;
  eval->add_option("--timings", timings_path, "write stage wall-times JSON here");

  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  CLI11_PARSE(app, argc, argv);

  try {
    if (extract->parsed()) return cmd_extract(g, images, cov_out);
    if (train->parsed()) return cmd_train(g, data_path, labels_path);
    if (classify->parsed()) return cmd_classify(g, model_path, cls_data, cls_labels);
    if (dist->parsed()) return cmd_dist(g, metric_name, in_path, in2_path);
    if (bench->parsed()) return cmd_bench(g, dims, reps, slopes_path);
    if (eval->parsed()) return cmd_eval(g, timings_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
