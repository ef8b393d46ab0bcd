// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "deepkd/numkit.hpp"

namespace deepkd {

// Feature matrix plus integer labels. num_classes is max(label) + 1 across
// the split pair a dataset was loaded with.
struct Dataset {
  Mat64 features;                   // N x D
  std::vector<std::size_t> labels;  // N entries, < num_classes
  std::size_t num_classes = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return features.cols; }
};

struct SplitDataset {
  Dataset train;
  Dataset test;
};

// Gaussian blobs, one unit-variance cluster per class. Class means sit on a
// circle in the first two feature dimensions (a line when D == 1) with
// radius 6 - 5*difficulty, so difficulty 0 is near-separable and 1 is
// heavily overlapped. Per class, n_per_class points are drawn and the last
// 20% (rounded down) become the test split; each split is then shuffled.
SplitDataset gen_data(std::uint64_t seed, std::size_t n_per_class,
                      std::size_t num_classes, std::size_t feature_dim,
                      double difficulty);

// CSV with header f0,...,f{D-1},label; features use 17 significant digits.
void write_dataset_csv(const std::string& path, const Dataset& d);

// Writes train.csv and test.csv under dir.
void write_split(const std::string& dir, const SplitDataset& s);

// Loads dir/train.csv and dir/test.csv and fixes num_classes across both.
SplitDataset load_split(const std::string& dir);

// Raw teacher logits for every training sample: header index,logit0,...,
// one row per sample in training order.
void write_logits_csv(const std::string& path, const Mat64& logits);
Mat64 load_logits_csv(const std::string& path);

}  // namespace deepkd
