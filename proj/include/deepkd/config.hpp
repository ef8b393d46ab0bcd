// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "deepkd/distill.hpp"

namespace deepkd {

enum class Mode { kCeOnly, kKd, kDkd, kDot, kDeepKd };

std::string to_string(Mode m);
Mode mode_from_string(const std::string& name);

// Flat key=value pairs; '#' starts a comment, blank lines are skipped,
// whitespace around keys and values is trimmed.
using KeyValues = std::map<std::string, std::string>;

KeyValues parse_config_file(const std::string& path);

// Resolved, validated run configuration. Precedence: command-line overrides
// beat config-file entries beat defaults. A handful of defaults depend on
// other settings and are resolved here:
//   weighting    vanilla for mode=kd, otherwise dkd
//   delta        0.075 under vanilla weighting, 0.05 otherwise
//   dtm_enabled  true only for mode=deepkd
// k_init/k_opt/k_max default from the class count at run time (see
// resolve_schedule in runner.hpp).
struct RunConfig {
  Mode mode = Mode::kDeepKd;
  KdWeighting weighting = KdWeighting::kDkd;
  double tau = 4.0;
  double alpha = 1.0;
  double beta1 = 1.0;
  double beta2 = 1.0;

  double mu = 0.9;
  double delta = 0.05;
  double lr = 0.05;
  std::vector<std::size_t> lr_decay_epochs{150, 180, 210};
  double lr_decay_factor = 0.1;
  std::size_t batch_size = 64;
  std::size_t epochs = 240;
  std::uint64_t seed = 1;

  bool dtm_enabled = true;
  std::optional<std::size_t> k_init;
  std::optional<std::size_t> k_opt;
  std::optional<std::size_t> k_max;
  double easy_end_frac = 0.3;
  double hard_start_frac = 0.7;

  std::size_t gsnr_window = 200;
  std::size_t gsnr_sample_every = 1;
  std::size_t gsnr_report_every = 0;  // samples between reports; 0 = window

  std::vector<std::size_t> student_dims{2, 8, 3};
  std::vector<std::size_t> teacher_dims{2, 64, 64, 3};

  std::size_t n_per_class = 500;
  std::size_t num_classes = 3;
  std::size_t feature_dim = 2;
  double difficulty = 0.5;

  std::string dataset_dir = "data";
  std::string teacher_model = "teacher.json";
  std::string teacher_logits = "teacher_logits.csv";
  std::string out_dir = "out";

  std::vector<std::size_t> k_grid;
  std::size_t ksearch_epochs = 30;
  double ksearch_frac = 0.2;

  // Keys that were given explicitly (file or flag), for ignored-key warnings.
  std::set<std::string> explicit_keys;
};

// Merges overrides onto file pairs (override wins) and materializes a
// validated RunConfig. Unknown keys and malformed values raise ConfigError.
RunConfig make_run_config(const KeyValues& file_pairs, const KeyValues& overrides);

}  // namespace deepkd
