// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <ostream>
#include <string>
#include <vector>

#include "deepkd/config.hpp"
#include "deepkd/runner.hpp"

namespace deepkd {

// Writes <dataset>/train.csv and test.csv from the synthetic generator.
void cmd_gen_data(const RunConfig& cfg, std::ostream& log);

// Trains the teacher on cross-entropy only, saves it to cfg.teacher_model
// and writes teacher_metrics.csv / teacher_timing.csv under out_dir.
// Distillation keys present in the config are ignored with a warning.
TrainResult cmd_train_teacher(const RunConfig& cfg, std::ostream& log);

// Forwards the training split through the saved teacher and writes the raw
// logits to cfg.teacher_logits.
void cmd_cache_logits(const RunConfig& cfg, std::ostream& log);

// Runs distillation per cfg and writes metrics.csv, timing.csv, gsnr.csv
// and student.json under out_dir.
TrainResult cmd_distill(const RunConfig& cfg, std::ostream& log);

struct GradcheckReport {
  double max_rel_err = 0.0;
  std::size_t coords_checked = 0;
  double threshold = 1e-4;
  bool pass = false;
};

// Central-difference check (h = 1e-4) of the assembled parameter gradient of
// the combined loss on a synthetic batch, masked non-target KL included.
// n_coords = 0 checks every parameter; otherwise that many coordinates are
// sampled without replacement. Relative error uses an absolute floor of 1e-3
// in the denominator for near-zero coordinates.
GradcheckReport cmd_gradcheck(const RunConfig& cfg, std::size_t n_coords,
                              std::ostream& log);

struct KsearchRow {
  std::size_t k = 0;
  double test_acc = 0.0;
};

struct KsearchResult {
  std::vector<KsearchRow> rows;
  std::size_t recommended_k = 0;
};

// Short fixed-k distillation runs on a seeded subsample of the training
// split (fraction cfg.ksearch_frac, cfg.ksearch_epochs epochs), one per k in
// cfg.k_grid (default: a small spread over [1, C-1]). Reports test accuracy
// per k, recommends the argmax (first on ties) and writes ksearch.csv.
KsearchResult cmd_ksearch(const RunConfig& cfg, std::ostream& log);

// Prints per-stream summary statistics of a gsnr.csv.
void cmd_gsnr_report(const std::string& path, std::ostream& log);

}  // namespace deepkd
