// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "deepkd/config.hpp"
#include "deepkd/dataset.hpp"
#include "deepkd/dtm.hpp"
#include "deepkd/net.hpp"
#include "deepkd/optim.hpp"

namespace deepkd {

// One metrics row per epoch. ce/tckd/nckd are means of the per-sample
// component losses seen during the epoch (nckd after any per-sample
// rescaling, before beta weights). k is the number of non-target classes in
// the non-target KL: the active top-k, C-1 when unmasked, 0 when the mode
// has no non-target term. wall_ms is kept out of metrics.csv so reruns are
// byte-identical; it goes to timing.csv.
struct EpochMetrics {
  std::size_t epoch = 0;
  double ce = 0.0;
  double tckd = 0.0;
  double nckd = 0.0;
  double test_acc = 0.0;
  std::size_t k = 0;
  double wall_ms = 0.0;
};

void write_metrics_csv(const std::string& path,
                       const std::vector<EpochMetrics>& rows);
void write_timing_csv(const std::string& path,
                      const std::vector<EpochMetrics>& rows);
std::vector<EpochMetrics> read_metrics_csv(const std::string& path);

// Everything one training run needs, decoupled from file paths.
struct TrainPlan {
  std::vector<std::size_t> dims;
  Mode mode = Mode::kDeepKd;
  KdWeighting weighting = KdWeighting::kDkd;
  double tau = 4.0;
  double alpha = 1.0;
  double beta1 = 1.0;
  double beta2 = 1.0;
  double mu = 0.9;
  double delta = 0.05;
  double lr = 0.05;
  std::vector<std::size_t> lr_decay_epochs;
  double lr_decay_factor = 0.1;
  std::size_t batch_size = 64;
  std::size_t epochs = 240;
  std::uint64_t seed = 1;
  std::optional<DtmSchedule> dtm;      // per-epoch k from the schedule
  std::optional<std::size_t> static_k; // fixed k (used by the k grid search)
  GsnrTrackerConfig gsnr;
  bool track_gsnr = true;
};

struct TrainResult {
  MlpModel model;
  std::vector<EpochMetrics> metrics;
  std::vector<GsnrReport> gsnr;
  double final_test_acc = 0.0;
};

// Seeded, strictly sequential training loop: He init, per-epoch shuffle,
// mini-batch updates with the mode's optimizer, per-epoch test evaluation.
// teacher_logits must cover the training rows for every mode except
// ce-only, where it may be null. Identical plan and data give bitwise
// identical results.
TrainResult run_training(const TrainPlan& plan, const Dataset& train,
                         const Mat64* teacher_logits, const Dataset& test);

// Schedule with unset k fields defaulted from the class count: k_init is 5%
// of C (at least 1), k_opt 55% of C (rounded), k_max C-1.
DtmSchedule resolve_schedule(const RunConfig& cfg, std::size_t num_classes);

// TrainPlan for a distillation run under cfg with the given class count.
TrainPlan plan_from_config(const RunConfig& cfg, std::size_t num_classes);

// Fraction of test rows whose argmax logit matches the label (ties take the
// lowest class id). max_threads > 1 splits rows into contiguous chunks whose
// integer counts are summed in order, so the result is thread-count
// independent.
double eval_accuracy(const MlpModel& model, const Dataset& data,
                     std::size_t max_threads = 1);

// Value of DEEPKD_THREADS clamped to >= 1; unset or unparsable gives 1.
std::size_t env_eval_threads();

}  // namespace deepkd
