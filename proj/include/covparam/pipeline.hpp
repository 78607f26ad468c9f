#pragma once

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "covparam/common.hpp"
#include "covparam/descriptor.hpp"
#include "covparam/image.hpp"
#include "covparam/matrix_csv.hpp"
#include "covparam/metrics.hpp"
#include "covparam/parameterization.hpp"
#include "covparam/rng.hpp"
#include "covparam/sparse.hpp"

namespace covparam {

using json = nlohmann::ordered_json;

inline constexpr const char* kModelVersionTag = "covparam-model-v1";

struct ExperimentConfig {
  std::string feature_set = "GRAD5";
  int block_size = 32;
  int block_stride = 32;
  ParamKind param_kind = ParamKind::Sphere;
  double lambda = 1.0;
  double eps_scale = kDefaultEpsScale;
  int K = 0;  // 0: smallest multiple of the class count >= d_rep
  double alpha = 25.0;
  double beta = 25.0;
  int T = 1;
  int iterations = 50;
  int train_per_class = 0;      // exactly one of these two selects the split
  double train_fraction = 0.0;
  int repeats = 10;
  std::uint64_t seed = 0;
  int resize = 0;  // 0: use images at native size

  struct Paths {
    std::string dataset;
    std::string report;
    std::string model;
  } paths;
};

inline json config_to_json(const ExperimentConfig& c) {
  json j;
  j["feature_set"] = c.feature_set;
  j["block_size"] = c.block_size;
  j["block_stride"] = c.block_stride;
  j["param_kind"] = to_string(c.param_kind);
  j["lambda"] = c.lambda;
  j["eps_scale"] = c.eps_scale;
  j["K"] = c.K;
  j["alpha"] = c.alpha;
  j["beta"] = c.beta;
  j["T"] = c.T;
  j["iterations"] = c.iterations;
  if (c.train_fraction > 0.0)
    j["train_fraction"] = c.train_fraction;
  else
    j["train_per_class"] = c.train_per_class;
  j["repeats"] = c.repeats;
  j["seed"] = c.seed;
  j["resize"] = c.resize;
  j["paths"] = {{"dataset", c.paths.dataset},
                {"report", c.paths.report},
                {"model", c.paths.model}};
  return j;
}

inline ExperimentConfig config_from_json(const json& j) {
  static const std::vector<std::string> known = {
      "feature_set", "block_size", "block_stride", "param_kind", "lambda",
      "eps_scale",   "K",          "alpha",        "beta",       "T",
      "iterations",  "train_per_class", "train_fraction", "repeats", "seed",
      "resize",      "paths"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    require(std::find(known.begin(), known.end(), it.key()) != known.end(),
            "unknown config key: " + it.key());
  }
  ExperimentConfig c;
  if (j.contains("feature_set")) c.feature_set = j["feature_set"].get<std::string>();
  require(c.feature_set == "GRAD5", "config feature_set must be GRAD5");
  if (j.contains("block_size")) c.block_size = j["block_size"].get<int>();
  c.block_stride = c.block_size;
  if (j.contains("block_stride")) c.block_stride = j["block_stride"].get<int>();
  if (j.contains("param_kind")) c.param_kind = param_kind_from_string(j["param_kind"].get<std::string>());
  if (j.contains("lambda")) c.lambda = j["lambda"].get<double>();
  if (j.contains("eps_scale")) c.eps_scale = j["eps_scale"].get<double>();
  if (j.contains("K")) c.K = j["K"].get<int>();
  if (j.contains("alpha")) c.alpha = j["alpha"].get<double>();
  if (j.contains("beta")) c.beta = j["beta"].get<double>();
  if (j.contains("T")) c.T = j["T"].get<int>();
  if (j.contains("iterations")) c.iterations = j["iterations"].get<int>();
  if (j.contains("train_per_class")) c.train_per_class = j["train_per_class"].get<int>();
  if (j.contains("train_fraction")) c.train_fraction = j["train_fraction"].get<double>();
  require(!(c.train_per_class > 0 && c.train_fraction > 0.0),
          "config: train_per_class and train_fraction are mutually exclusive");
  if (j.contains("repeats")) c.repeats = j["repeats"].get<int>();
  require(c.repeats >= 1, "config: repeats must be >= 1");
  if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("resize")) c.resize = j["resize"].get<int>();
  if (j.contains("paths")) {
    const json& p = j["paths"];
    if (p.contains("dataset")) c.paths.dataset = p["dataset"].get<std::string>();
    if (p.contains("report")) c.paths.report = p["report"].get<std::string>();
    if (p.contains("model")) c.paths.model = p["model"].get<std::string>();
  }
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  require(bool(f), "cannot open config: " + path);
  json j;
  try {
    f >> j;
  } catch (const std::exception& e) {
    throw error("bad JSON in " + path + ": " + e.what());
  }
  return config_from_json(j);
}

/// Row-major tiling; non-overlapping when stride equals the block size.
inline std::vector<Rect> tile_image(int width, int height, int block, int stride) {
  require(block >= 1 && stride >= 1, "block and stride must be positive");
  require(block <= width && block <= height, "block larger than image");
  std::vector<Rect> rects;
  for (int y = 0; y + block <= height; y += stride)
    for (int x = 0; x + block <= width; x += stride)
      rects.push_back({x, y, x + block - 1, y + block - 1});
  return rects;
}

inline std::vector<Rect> tile_image(const Image& im, int block, int stride) {
  return tile_image(im.width, im.height, block, stride);
}

/// Seeded class-stratified split: per class, a shuffled prefix of size
/// per_class trains and the remainder tests. Disjoint and covering.
inline std::pair<std::vector<int>, std::vector<int>> split_train_test(
    const std::vector<int>& labels, int per_class, std::uint64_t seed) {
  require(per_class >= 1, "per_class must be >= 1");
  int m = 0;
  for (int c : labels) {
    require(c >= 0, "labels must be nonnegative");
    m = std::max(m, c + 1);
  }
  std::vector<std::vector<int>> members(static_cast<std::size_t>(m));
  for (std::size_t i = 0; i < labels.size(); ++i)
    members[static_cast<std::size_t>(labels[i])].push_back(static_cast<int>(i));

  Rng rng(seed);
  std::vector<int> train, test;
  for (int c = 0; c < m; ++c) {
    auto& idx = members[static_cast<std::size_t>(c)];
    require(static_cast<int>(idx.size()) >= per_class,
            "class " + std::to_string(c) + " has fewer than per_class samples");
    if (static_cast<int>(idx.size()) == per_class) {
      std::cerr << "[covparam] warning: class " << c
                << " has no test samples after the split\n";
    }
    rng.shuffle(idx);
    for (std::size_t i = 0; i < idx.size(); ++i)
      (static_cast<int>(i) < per_class ? train : test).push_back(idx[i]);
  }
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {std::move(train), std::move(test)};
}

struct EvaluationReport {
  std::vector<std::string> class_names;
  int representation_length = 0;
  std::vector<int> samples_per_class;
  std::vector<double> per_repeat_accuracy;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;
  double max_accuracy = 0.0;
  MatrixXi confusion;           // aggregated over repeats
  std::vector<int> train_counts;  // aggregated over repeats
  std::vector<int> test_counts;   // aggregated over repeats
  json config_echo;

  struct Timings {
    double extract_s = 0.0;
    double train_s = 0.0;
    double classify_s = 0.0;
  } timings;  // informational; not part of the canonical report
};

/// Canonical report JSON. Deliberately excludes wall-times so the bytes
/// are a pure function of (dataset bytes, config).
inline json report_to_json(const EvaluationReport& r) {
  json j;
  j["config"] = r.config_echo;
  j["classes"] = r.class_names;
  j["representation_length"] = r.representation_length;
  j["samples_per_class"] = r.samples_per_class;
  j["per_repeat_accuracy"] = r.per_repeat_accuracy;
  j["mean_accuracy"] = r.mean_accuracy;
  j["std_accuracy"] = r.std_accuracy;
  j["max_accuracy"] = r.max_accuracy;
  std::vector<std::vector<int>> confusion;
  for (Eigen::Index i = 0; i < r.confusion.rows(); ++i) {
    std::vector<int> row;
    for (Eigen::Index k = 0; k < r.confusion.cols(); ++k) row.push_back(r.confusion(i, k));
    confusion.push_back(std::move(row));
  }
  j["confusion"] = confusion;
  j["train_counts"] = r.train_counts;
  j["test_counts"] = r.test_counts;
  return j;
}

// --- representation CSV ----------------------------------------------------

struct RepBatch {
  MatrixXd rows;  // one representation per row
  ParamKind kind = ParamKind::Sphere;
  int d = 0;
  double lambda = 1.0;
  bool mean_fused = true;
};

inline void write_reps_csv(const std::string& path, const RepBatch& batch) {
  write_matrix_csv(path, batch.rows,
                   {"covparam-reps kind=" + to_string(batch.kind) +
                    " d=" + std::to_string(batch.d) + " lambda=" + g17(batch.lambda) +
                    " fused=" + std::to_string(batch.mean_fused ? 1 : 0)});
}

inline RepBatch read_reps_csv(const std::string& path) {
  std::vector<std::string> comments;
  RepBatch batch;
  batch.rows = read_matrix_csv(path, &comments);
  bool found = false;
  for (const auto& c : comments) {
    std::stringstream ss(c);
    std::string tag;
    ss >> tag;
    if (tag != "covparam-reps") continue;
    found = true;
    std::string kv;
    while (ss >> kv) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = kv.substr(0, eq), val = kv.substr(eq + 1);
      if (key == "kind") batch.kind = param_kind_from_string(val);
      else if (key == "d") batch.d = std::stoi(val);
      else if (key == "lambda") batch.lambda = detail::parse_double(val, path);
      else if (key == "fused") batch.mean_fused = val != "0";
    }
  }
  require(found, "not a covparam representation CSV (missing header comment): " + path);
  require(batch.rows.cols() == rep_length(batch.d, batch.mean_fused),
          "representation length does not match header metadata: " + path);
  return batch;
}

inline EuclidRep rep_from_row(const RepBatch& batch, Eigen::Index row) {
  EuclidRep r;
  r.kind = batch.kind;
  r.d = batch.d;
  r.mean_fused = batch.mean_fused;
  r.lambda = batch.mean_fused ? batch.lambda : 0.0;
  r.vec = batch.rows.row(row).transpose();
  return r;
}

// --- model persistence -------------------------------------------------------

inline void save_model(std::ostream& os, const Dictionary& model) {
  os << kModelVersionTag << "\n";
  os << "d_rep " << model.d_rep() << "\n";
  os << "K " << model.num_atoms() << "\n";
  os << "classes " << model.num_classes() << "\n";
  os << "T " << model.hp.T << "\n";
  os << "alpha " << g17(model.hp.alpha) << "\n";
  os << "beta " << g17(model.hp.beta) << "\n";
  os << "iterations " << model.hp.iterations << "\n";
  os << "seed " << model.hp.seed << "\n";
  os << "atom_class ";
  for (std::size_t i = 0; i < model.atom_class.size(); ++i) {
    if (i) os << ',';
    os << model.atom_class[i];
  }
  os << "\n";
  const auto dump = [&os](const char* name, const MatrixXd& m) {
    os << "matrix " << name << " " << m.rows() << " " << m.cols() << "\n";
    write_matrix_csv(os, m);
  };
  dump("D", model.D);
  dump("A", model.A);
  dump("W", model.W);
  os << "end\n";
}

inline void save_model(const std::string& path, const Dictionary& model) {
  std::ofstream f(path, std::ios::binary);
  require(bool(f), "cannot open for writing: " + path);
  save_model(f, model);
  f.flush();
  require(bool(f), "write failed: " + path);
}

namespace detail {

inline std::string expect_line(std::istream& is, const std::string& path) {
  std::string line;
  require(bool(std::getline(is, line)), "truncated model file: " + path);
  return strip_cr(line);
}

inline std::string expect_field(std::istream& is, const std::string& key,
                                const std::string& path) {
  const std::string line = expect_line(is, path);
  require(line.rfind(key + " ", 0) == 0, "model file: expected '" + key + "' in " + path);
  return line.substr(key.size() + 1);
}

inline MatrixXd expect_matrix(std::istream& is, const std::string& name,
                              const std::string& path) {
  const std::string header = expect_line(is, path);
  std::stringstream ss(header);
  std::string word, got;
  Eigen::Index rows = 0, cols = 0;
  ss >> word >> got >> rows >> cols;
  require(word == "matrix" && got == name && rows > 0 && cols > 0,
          "model file: malformed matrix header for " + name + " in " + path);
  MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const std::string line = expect_line(is, path);
    std::stringstream row(line);
    std::string tok;
    for (Eigen::Index j = 0; j < cols; ++j) {
      require(bool(std::getline(row, tok, ',')), "model file: short row in " + path);
      m(i, j) = parse_double(tok, path);
    }
  }
  return m;
}

}  // namespace detail

inline Dictionary load_model(std::istream& is, const std::string& path = "<stream>") {
  const std::string tag = detail::expect_line(is, path);
  require(tag == kModelVersionTag,
          "model version mismatch in " + path + " (expected " + kModelVersionTag + ")");
  Dictionary model;
  const int d_rep = std::stoi(detail::expect_field(is, "d_rep", path));
  const int k = std::stoi(detail::expect_field(is, "K", path));
  const int m = std::stoi(detail::expect_field(is, "classes", path));
  model.hp.T = std::stoi(detail::expect_field(is, "T", path));
  model.hp.alpha = detail::parse_double(detail::expect_field(is, "alpha", path), path);
  model.hp.beta = detail::parse_double(detail::expect_field(is, "beta", path), path);
  model.hp.iterations = std::stoi(detail::expect_field(is, "iterations", path));
  model.hp.seed = std::stoull(detail::expect_field(is, "seed", path));
  model.hp.K = k;
  {
    std::stringstream ss(detail::expect_field(is, "atom_class", path));
    std::string tok;
    while (std::getline(ss, tok, ',')) model.atom_class.push_back(std::stoi(tok));
    require(static_cast<int>(model.atom_class.size()) == k,
            "model file: atom_class length mismatch in " + path);
  }
  model.D = detail::expect_matrix(is, "D", path);
  model.A = detail::expect_matrix(is, "A", path);
  model.W = detail::expect_matrix(is, "W", path);
  require(model.D.rows() == d_rep && model.D.cols() == k, "model file: D shape mismatch in " + path);
  require(model.A.rows() == k && model.A.cols() == k, "model file: A shape mismatch in " + path);
  require(model.W.rows() == m && model.W.cols() == k, "model file: W shape mismatch in " + path);
  require(detail::expect_line(is, path) == "end", "model file: missing end marker in " + path);
  return model;
}

inline Dictionary load_model(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(bool(f), "cannot open: " + path);
  return load_model(f, path);
}

// --- dataset loading and the end-to-end experiment ---------------------------

struct DatasetReps {
  MatrixXd samples;  // d_rep x N
  std::vector<int> labels;
  std::vector<std::string> class_names;
  int feature_dim = 0;
  int rep_length_value = 0;
};

/// One directory per class; every .pgm/.png inside is tiled into blocks and
/// each block becomes one sample. Deterministic: classes and files sorted.
inline DatasetReps extract_dataset(const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  require(!cfg.paths.dataset.empty(), "config: paths.dataset is required");
  require(fs::is_directory(cfg.paths.dataset), "dataset directory not found: " + cfg.paths.dataset);

  std::vector<fs::path> class_dirs;
  for (const auto& e : fs::directory_iterator(cfg.paths.dataset))
    if (e.is_directory()) class_dirs.push_back(e.path());
  std::sort(class_dirs.begin(), class_dirs.end());
  require(!class_dirs.empty(), "dataset has no class directories: " + cfg.paths.dataset);

  DatasetReps out;
  std::vector<VectorXd> reps;
  const auto kernels = grad5_kernels();
  for (std::size_t c = 0; c < class_dirs.size(); ++c) {
    out.class_names.push_back(class_dirs[c].filename().string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(class_dirs[c])) {
      if (!e.is_regular_file()) continue;
      std::string ext = e.path().extension().string();
      std::transform(ext.begin(), ext.end(), ext.begin(),
                     [](unsigned char ch) { return std::tolower(ch); });
      if (ext == ".pgm" || ext == ".png") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    require(!files.empty(), "class directory has no images: " + class_dirs[c].string());
    for (const auto& file : files) {
      Image im = load_image(file.string());
      if (cfg.resize > 0) im = resize_bilinear(im, cfg.resize, cfg.resize);
      const FeatureTensor f = compute_feature_tensor(im, kernels);
      const IntegralTensors integrals = build_integral_tensors(f);
      for (const Rect& r : tile_image(im, cfg.block_size, cfg.block_stride)) {
        const CovarianceDescriptor desc =
            regularize_spd(region_covariance(integrals, r), cfg.eps_scale);
        const EuclidRep rep = parameterize(desc, cfg.param_kind, cfg.lambda, true);
        if (out.feature_dim == 0) {
          out.feature_dim = rep.d;
          out.rep_length_value = rep_length(rep.d, true);
        }
        require(rep.vec.size() == out.rep_length_value,
                "representation length drifted during extraction");
        reps.push_back(rep.vec);
        out.labels.push_back(static_cast<int>(c));
      }
    }
  }
  require(!reps.empty(), "dataset produced no samples");
  out.samples.resize(out.rep_length_value, static_cast<Eigen::Index>(reps.size()));
  for (std::size_t i = 0; i < reps.size(); ++i) out.samples.col(static_cast<Eigen::Index>(i)) = reps[i];
  return out;
}

namespace detail {

inline int resolve_per_class(const ExperimentConfig& cfg, const std::vector<int>& labels) {
  if (cfg.train_per_class > 0) return cfg.train_per_class;
  require(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0,
          "config: set train_per_class or train_fraction in (0,1)");
  int smallest = INT32_MAX;
  std::map<int, int> counts;
  for (int c : labels) counts[c]++;
  for (const auto& [c, n] : counts) smallest = std::min(smallest, n);
  return std::max(1, static_cast<int>(std::lround(cfg.train_fraction * smallest)));
}

inline int resolve_atoms(const ExperimentConfig& cfg, int d_rep, int m) {
  if (cfg.K > 0) return cfg.K;
  int k = ((d_rep + m - 1) / m) * m;  // smallest multiple of m >= d_rep
  return std::max(k, m);
}

}  // namespace detail

/// Full protocol: repeat (split, train, classify) and aggregate. The report
/// is a pure function of the dataset bytes and the config.
inline EvaluationReport run_experiment(const ExperimentConfig& cfg) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  const DatasetReps data = extract_dataset(cfg);
  const auto t1 = clock::now();

  const int m = static_cast<int>(data.class_names.size());
  const int n = static_cast<int>(data.labels.size());
  const int per_class = detail::resolve_per_class(cfg, data.labels);
  const int atoms = detail::resolve_atoms(cfg, data.rep_length_value, m);

  std::cerr << "[covparam] " << n << " samples, " << m << " classes, representation length "
            << data.rep_length_value << " (d=" << data.feature_dim << ")\n";
  require(data.rep_length_value ==
              data.feature_dim * (data.feature_dim + 1) / 2 + data.feature_dim,
          "representation length violates the dimension law");

  EvaluationReport report;
  report.class_names = data.class_names;
  report.representation_length = data.rep_length_value;
  report.samples_per_class.assign(static_cast<std::size_t>(m), 0);
  for (int c : data.labels) report.samples_per_class[static_cast<std::size_t>(c)]++;
  report.confusion = MatrixXi::Zero(m, m);
  report.train_counts.assign(static_cast<std::size_t>(m), 0);
  report.test_counts.assign(static_cast<std::size_t>(m), 0);
  report.config_echo = config_to_json(cfg);

  double train_s = 0.0, classify_s = 0.0;
  double best_acc = -1.0;
  Dictionary best_model;

  for (int rep = 0; rep < cfg.repeats; ++rep) {
    const std::uint64_t split_seed = cfg.seed + static_cast<std::uint64_t>(rep);
    const auto [train_idx, test_idx] = split_train_test(data.labels, per_class, split_seed);

    // no test-set leakage: the index sets must be disjoint and covering
    {
      std::vector<char> seen(static_cast<std::size_t>(n), 0);
      for (int i : train_idx) seen[static_cast<std::size_t>(i)] += 1;
      for (int i : test_idx) seen[static_cast<std::size_t>(i)] += 1;
      for (int i = 0; i < n; ++i)
        require(seen[static_cast<std::size_t>(i)] == 1, "train/test split leaks or drops samples");
    }

    LabeledBatch train_batch;
    train_batch.S.resize(data.samples.rows(), static_cast<Eigen::Index>(train_idx.size()));
    for (std::size_t i = 0; i < train_idx.size(); ++i) {
      train_batch.S.col(static_cast<Eigen::Index>(i)) = data.samples.col(train_idx[i]);
      train_batch.labels.push_back(data.labels[static_cast<std::size_t>(train_idx[i])]);
      report.train_counts[static_cast<std::size_t>(train_batch.labels.back())]++;
    }

    LcksvdParams params;
    params.K = atoms;
    params.alpha = cfg.alpha;
    params.beta = cfg.beta;
    params.T = cfg.T;
    params.iterations = cfg.iterations;
    params.seed = split_seed;

    const auto tt0 = clock::now();
    const Dictionary model = lcksvd_train(train_batch, params);
    const auto tt1 = clock::now();

    int correct = 0;
    for (int idx : test_idx) {
      const int truth = data.labels[static_cast<std::size_t>(idx)];
      const auto [label, scores] = classify(model, data.samples.col(idx));
      report.confusion(truth, label)++;
      report.test_counts[static_cast<std::size_t>(truth)]++;
      if (label == truth) ++correct;
    }
    const auto tt2 = clock::now();
    train_s += std::chrono::duration<double>(tt1 - tt0).count();
    classify_s += std::chrono::duration<double>(tt2 - tt1).count();

    require(!test_idx.empty(), "split left no test samples");
    const double acc = static_cast<double>(correct) / static_cast<double>(test_idx.size());
    report.per_repeat_accuracy.push_back(acc);
    if (acc > best_acc) {
      best_acc = acc;
      best_model = model;
    }
  }

  double mean = 0.0;
  for (double a : report.per_repeat_accuracy) mean += a;
  mean /= static_cast<double>(report.per_repeat_accuracy.size());
  double var = 0.0;
  for (double a : report.per_repeat_accuracy) var += (a - mean) * (a - mean);
  report.mean_accuracy = mean;
  report.std_accuracy = report.per_repeat_accuracy.size() > 1
                            ? std::sqrt(var / (report.per_repeat_accuracy.size() - 1.0))
                            : 0.0;
  report.max_accuracy =
      *std::max_element(report.per_repeat_accuracy.begin(), report.per_repeat_accuracy.end());

  for (int c = 0; c < m; ++c) {
    require(report.confusion.row(c).sum() == report.test_counts[static_cast<std::size_t>(c)],
            "confusion row does not sum to the class test count");
  }

  report.timings.extract_s = std::chrono::duration<double>(t1 - t0).count();
  report.timings.train_s = train_s;
  report.timings.classify_s = classify_s;

  if (!cfg.paths.model.empty()) save_model(cfg.paths.model, best_model);
  return report;
}

}  // namespace covparam
