#pragma once

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "covparam/common.hpp"

namespace covparam {

// Matrix CSV format: optional leading comment lines starting with '#',
// then one row per line, comma-separated values with 17 significant digits.

inline void write_matrix_csv(std::ostream& os, const MatrixXd& m,
                             const std::vector<std::string>& comments = {}) {
  for (const auto& c : comments) os << "# " << c << "\n";
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) os << ',';
      os << g17(m(i, j));
    }
    os << '\n';
  }
}

inline void write_matrix_csv(const std::string& path, const MatrixXd& m,
                             const std::vector<std::string>& comments = {}) {
  std::ofstream f(path, std::ios::binary);
  require(bool(f), "cannot open for writing: " + path);
  write_matrix_csv(f, m, comments);
  f.flush();
  require(bool(f), "write failed: " + path);
}

namespace detail {

inline std::string strip_cr(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == '\n')) s.pop_back();
  return s;
}

inline double parse_double(const std::string& tok, const std::string& ctx) {
  const char* begin = tok.c_str();
  char* end = nullptr;
  double v = std::strtod(begin, &end);
  while (end && *end == ' ') ++end;
  require(end && *end == '\0' && end != begin, "bad numeric value '" + tok + "' in " + ctx);
  return v;
}

}  // namespace detail

inline MatrixXd read_matrix_csv(std::istream& is,
                                std::vector<std::string>* comments = nullptr,
                                const std::string& ctx = "<stream>") {
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(is, line)) {
    line = detail::strip_cr(line);
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (comments) {
        std::string c = line.substr(1);
        if (!c.empty() && c[0] == ' ') c.erase(0, 1);
        comments->push_back(c);
      }
      continue;
    }
    std::vector<double> row;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) row.push_back(detail::parse_double(tok, ctx));
    require(!row.empty(), "empty data row in " + ctx);
    if (!rows.empty()) {
      require(row.size() == rows.front().size(), "ragged rows in " + ctx);
    }
    rows.push_back(std::move(row));
  }
  require(!rows.empty(), "no data rows in " + ctx);
  MatrixXd m(static_cast<Eigen::Index>(rows.size()),
             static_cast<Eigen::Index>(rows.front().size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  return m;
}

inline MatrixXd read_matrix_csv(const std::string& path,
                                std::vector<std::string>* comments = nullptr) {
  std::ifstream f(path, std::ios::binary);
  require(bool(f), "cannot open: " + path);
  return read_matrix_csv(f, comments, path);
}

/// Labels file: one integer class id per row (single CSV column).
inline std::vector<int> read_labels_csv(const std::string& path) {
  MatrixXd m = read_matrix_csv(path);
  require(m.cols() == 1, "labels file must have one column: " + path);
  std::vector<int> labels(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double v = m(i, 0);
    const int k = static_cast<int>(v);
    require(v == static_cast<double>(k) && k >= 0, "non-integer label in " + path);
    labels[static_cast<std::size_t>(i)] = k;
  }
  return labels;
}

inline void write_labels_csv(const std::string& path, const std::vector<int>& labels) {
  std::ofstream f(path, std::ios::binary);
  require(bool(f), "cannot open for writing: " + path);
  for (int v : labels) f << v << '\n';
  require(bool(f), "write failed: " + path);
}

}  // namespace covparam
