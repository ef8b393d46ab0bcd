// SPDX-License-Identifier: Apache-2.0
#include "deepkd/dataset.hpp"

#include <cmath>
#include <filesystem>
#include <numbers>
#include <stdexcept>

#include "deepkd/csvio.hpp"
#include "deepkd/errors.hpp"

namespace deepkd {

namespace {

// Class mean for the synthetic mixture. Radius shrinks with difficulty.
Vec64 class_mean(std::size_t c, std::size_t num_classes, std::size_t dim,
                 double difficulty) {
  const double radius = 6.0 - 5.0 * difficulty;
  Vec64 mean(dim, 0.0);
  if (dim == 1) {
    // Equally spaced points centred on the origin.
    const double span = num_classes > 1 ? static_cast<double>(num_classes - 1) : 1.0;
    mean[0] = radius * (2.0 * static_cast<double>(c) / span - 1.0);
    return mean;
  }
  const double angle =
      2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(num_classes);
  mean[0] = radius * std::cos(angle);
  mean[1] = radius * std::sin(angle);
  return mean;
}

Dataset collect(const std::vector<Vec64>& rows,
                const std::vector<std::size_t>& labels,
                const std::vector<std::size_t>& order, std::size_t num_classes) {
  Dataset d;
  d.num_classes = num_classes;
  d.features = Mat64(order.size(), rows.empty() ? 0 : rows[0].size());
  d.labels.reserve(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    const Vec64& src = rows[order[i]];
    std::copy(src.begin(), src.end(), d.features.row(i).begin());
    d.labels.push_back(labels[order[i]]);
  }
  return d;
}

}  // namespace

SplitDataset gen_data(std::uint64_t seed, std::size_t n_per_class,
                      std::size_t num_classes, std::size_t feature_dim,
                      double difficulty) {
  if (num_classes < 2) throw std::invalid_argument("gen_data: need >= 2 classes");
  if (n_per_class < 5)
    throw std::invalid_argument(
        "gen_data: n_per_class must be >= 5 so the 20% test split is nonempty");
  if (feature_dim == 0) throw std::invalid_argument("gen_data: feature_dim must be >= 1");
  if (!(difficulty >= 0.0) || !(difficulty <= 1.0))
    throw std::invalid_argument("gen_data: difficulty must be in [0, 1]");

  Rng rng(seed);
  std::vector<Vec64> rows;
  std::vector<std::size_t> labels;
  std::vector<std::size_t> train_idx, test_idx;
  const std::size_t n_test = n_per_class / 5;  // 20% per class, rounded down

  for (std::size_t c = 0; c < num_classes; ++c) {
    const Vec64 mean = class_mean(c, num_classes, feature_dim, difficulty);
    for (std::size_t i = 0; i < n_per_class; ++i) {
      Vec64 x(feature_dim);
      for (std::size_t d = 0; d < feature_dim; ++d)
        x[d] = mean[d] + rng.next_normal();
      const std::size_t idx = rows.size();
      rows.push_back(std::move(x));
      labels.push_back(c);
      (i < n_per_class - n_test ? train_idx : test_idx).push_back(idx);
    }
  }
  shuffle(rng, train_idx);
  shuffle(rng, test_idx);

  SplitDataset s;
  s.train = collect(rows, labels, train_idx, num_classes);
  s.test = collect(rows, labels, test_idx, num_classes);
  return s;
}

void write_dataset_csv(const std::string& path, const Dataset& d) {
  std::string out;
  for (std::size_t c = 0; c < d.dim(); ++c) {
    out += "f" + std::to_string(c) + ",";
  }
  out += "label\n";
  for (std::size_t r = 0; r < d.size(); ++r) {
    for (double v : d.features.row(r)) {
      out += format_double(v);
      out += ',';
    }
    out += std::to_string(d.labels[r]);
    out += '\n';
  }
  write_file(path, out);
}

void write_split(const std::string& dir, const SplitDataset& s) {
  std::filesystem::create_directories(dir);
  write_dataset_csv(dir + "/train.csv", s.train);
  write_dataset_csv(dir + "/test.csv", s.test);
}

namespace {

Dataset load_dataset_csv(const std::string& path) {
  const std::vector<std::string> lines = read_lines(path);
  if (lines.empty()) throw ParseError(path + ":1: missing header");
  const auto header = split_fields(lines[0]);
  if (header.size() < 2 || header.back() != "label")
    throw ParseError(path + ":1: expected feature columns then 'label'");
  const std::size_t dim = header.size() - 1;

  Dataset d;
  std::vector<Vec64> rows;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    if (lines[li].empty()) continue;
    const std::string where = path + ":" + std::to_string(li + 1);
    const auto fields = split_fields(lines[li]);
    if (fields.size() != dim + 1)
      throw ParseError(where + ": expected " + std::to_string(dim + 1) + " fields");
    Vec64 x(dim);
    for (std::size_t c = 0; c < dim; ++c) {
      x[c] = parse_double(fields[c], where);
      if (!std::isfinite(x[c])) throw ParseError(where + ": non-finite feature");
    }
    rows.push_back(std::move(x));
    d.labels.push_back(parse_size(fields[dim], where));
  }
  if (rows.empty()) throw ParseError(path + ": no data rows");
  d.features = Mat64(rows.size(), dim);
  for (std::size_t r = 0; r < rows.size(); ++r)
    std::copy(rows[r].begin(), rows[r].end(), d.features.row(r).begin());
  return d;
}

}  // namespace

SplitDataset load_split(const std::string& dir) {
  SplitDataset s;
  s.train = load_dataset_csv(dir + "/train.csv");
  s.test = load_dataset_csv(dir + "/test.csv");
  if (s.train.dim() != s.test.dim())
    throw ParseError(dir + ": train/test feature width mismatch");
  std::size_t max_label = 0;
  for (std::size_t l : s.train.labels) max_label = std::max(max_label, l);
  for (std::size_t l : s.test.labels) max_label = std::max(max_label, l);
  s.train.num_classes = s.test.num_classes = max_label + 1;
  return s;
}

void write_logits_csv(const std::string& path, const Mat64& logits) {
  std::string out = "index";
  for (std::size_t c = 0; c < logits.cols; ++c)
    out += ",logit" + std::to_string(c);
  out += '\n';
  for (std::size_t r = 0; r < logits.rows; ++r) {
    out += std::to_string(r);
    for (double v : logits.row(r)) {
      out += ',';
      out += format_double(v);
    }
    out += '\n';
  }
  write_file(path, out);
}

Mat64 load_logits_csv(const std::string& path) {
  const std::vector<std::string> lines = read_lines(path);
  if (lines.empty()) throw ParseError(path + ":1: missing header");
  const auto header = split_fields(lines[0]);
  if (header.size() < 3 || header[0] != "index")
    throw ParseError(path + ":1: expected index,logit0,... header");
  const std::size_t classes = header.size() - 1;

  std::vector<Vec64> rows;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    if (lines[li].empty()) continue;
    const std::string where = path + ":" + std::to_string(li + 1);
    const auto fields = split_fields(lines[li]);
    if (fields.size() != classes + 1)
      throw ParseError(where + ": expected " + std::to_string(classes + 1) + " fields");
    if (parse_size(fields[0], where) != rows.size())
      throw ParseError(where + ": row index out of order");
    Vec64 z(classes);
    for (std::size_t c = 0; c < classes; ++c) {
      z[c] = parse_double(fields[c + 1], where);
      if (!std::isfinite(z[c])) throw ParseError(where + ": non-finite logit");
    }
    rows.push_back(std::move(z));
  }
  if (rows.empty()) throw ParseError(path + ": no data rows");
  Mat64 m(rows.size(), classes);
  for (std::size_t r = 0; r < rows.size(); ++r)
    std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
  return m;
}

}  // namespace deepkd
