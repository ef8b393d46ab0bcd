// SPDX-License-Identifier: Apache-2.0
#include "deepkd/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>

#include "deepkd/csvio.hpp"
#include "deepkd/errors.hpp"

namespace deepkd {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

double to_double(const std::string& key, const std::string& value) {
  double v = 0.0;
  const char* last = value.data() + value.size();
  const auto res = std::from_chars(value.data(), last, v);
  if (res.ec != std::errc() || res.ptr != last || !std::isfinite(v))
    throw ConfigError("key '" + key + "': bad number '" + value + "'");
  return v;
}

std::uint64_t to_u64(const std::string& key, const std::string& value) {
  std::uint64_t v = 0;
  const char* last = value.data() + value.size();
  const auto res = std::from_chars(value.data(), last, v);
  if (res.ec != std::errc() || res.ptr != last)
    throw ConfigError("key '" + key + "': bad integer '" + value + "'");
  return v;
}

std::size_t to_size(const std::string& key, const std::string& value) {
  return static_cast<std::size_t>(to_u64(key, value));
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("key '" + key + "': expected true/false, got '" + value + "'");
}

std::vector<std::size_t> to_size_list(const std::string& key, const std::string& value) {
  std::vector<std::size_t> out;
  if (trim(value).empty()) return out;
  for (std::string_view field : split_fields(value))
    out.push_back(to_size(key, trim(field)));
  return out;
}

}  // namespace

std::string to_string(Mode m) {
  switch (m) {
    case Mode::kCeOnly: return "ce-only";
    case Mode::kKd: return "kd";
    case Mode::kDkd: return "dkd";
    case Mode::kDot: return "dot";
    case Mode::kDeepKd: return "deepkd";
  }
  return "deepkd";
}

Mode mode_from_string(const std::string& name) {
  if (name == "ce-only") return Mode::kCeOnly;
  if (name == "kd") return Mode::kKd;
  if (name == "dkd") return Mode::kDkd;
  if (name == "dot") return Mode::kDot;
  if (name == "deepkd") return Mode::kDeepKd;
  throw ConfigError("unknown mode '" + name +
                    "' (expected ce-only|kd|dkd|dot|deepkd)");
}

KeyValues parse_config_file(const std::string& path) {
  KeyValues pairs;
  const std::vector<std::string> lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::string line = lines[i];
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError(path, i + 1, "expected key=value");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (key.empty()) throw ParseError(path, i + 1, "empty key");
    pairs[key] = value;
  }
  return pairs;
}

RunConfig make_run_config(const KeyValues& file_pairs, const KeyValues& overrides) {
  KeyValues merged = file_pairs;
  for (const auto& [k, v] : overrides) merged[k] = v;

  RunConfig cfg;
  for (const auto& [k, v] : merged) cfg.explicit_keys.insert(k);

  auto take = [&](const char* key) -> std::optional<std::string> {
    auto it = merged.find(key);
    if (it == merged.end()) return std::nullopt;
    std::string v = it->second;
    merged.erase(it);
    return v;
  };

  if (auto v = take("mode")) cfg.mode = mode_from_string(*v);
  // Mode-dependent defaults before explicit overrides.
  cfg.weighting = cfg.mode == Mode::kKd ? KdWeighting::kVanilla : KdWeighting::kDkd;
  if (auto v = take("kd_weighting")) {
    if (*v == "dkd") cfg.weighting = KdWeighting::kDkd;
    else if (*v == "vanilla") cfg.weighting = KdWeighting::kVanilla;
    else throw ConfigError("key 'kd_weighting': expected dkd|vanilla");
  }
  cfg.delta = cfg.weighting == KdWeighting::kVanilla ? 0.075 : 0.05;
  cfg.dtm_enabled = cfg.mode == Mode::kDeepKd;

  if (auto v = take("tau")) cfg.tau = to_double("tau", *v);
  if (auto v = take("alpha")) cfg.alpha = to_double("alpha", *v);
  if (auto v = take("beta1")) cfg.beta1 = to_double("beta1", *v);
  if (auto v = take("beta2")) cfg.beta2 = to_double("beta2", *v);
  if (auto v = take("mu")) cfg.mu = to_double("mu", *v);
  if (auto v = take("delta")) cfg.delta = to_double("delta", *v);
  if (auto v = take("lr")) cfg.lr = to_double("lr", *v);
  if (auto v = take("lr_decay_epochs"))
    cfg.lr_decay_epochs = to_size_list("lr_decay_epochs", *v);
  if (auto v = take("lr_decay_factor"))
    cfg.lr_decay_factor = to_double("lr_decay_factor", *v);
  if (auto v = take("batch_size")) cfg.batch_size = to_size("batch_size", *v);
  if (auto v = take("epochs")) cfg.epochs = to_size("epochs", *v);
  if (auto v = take("seed")) cfg.seed = to_u64("seed", *v);

  if (auto v = take("dtm_enabled")) cfg.dtm_enabled = to_bool("dtm_enabled", *v);
  if (auto v = take("k_init")) cfg.k_init = to_size("k_init", *v);
  if (auto v = take("k_opt")) cfg.k_opt = to_size("k_opt", *v);
  if (auto v = take("k_max")) cfg.k_max = to_size("k_max", *v);
  if (auto v = take("easy_end_frac"))
    cfg.easy_end_frac = to_double("easy_end_frac", *v);
  if (auto v = take("hard_start_frac"))
    cfg.hard_start_frac = to_double("hard_start_frac", *v);
  if (auto v = take("dtm_preset")) {
    // Published 100-class, 240-epoch ablation setting: ramp 5 -> 55 over the
    // first 60 epochs, widen from epoch 170 to 99 at the end.
    if (*v != "cifar240")
      throw ConfigError("key 'dtm_preset': unknown preset '" + *v + "'");
    cfg.k_init = 5;
    cfg.k_opt = 55;
    cfg.k_max = 99;
    cfg.easy_end_frac = 60.0 / 240.0;
    cfg.hard_start_frac = 170.0 / 240.0;
  }

  if (auto v = take("gsnr_window")) cfg.gsnr_window = to_size("gsnr_window", *v);
  if (auto v = take("gsnr_sample_every"))
    cfg.gsnr_sample_every = to_size("gsnr_sample_every", *v);
  if (auto v = take("gsnr_report_every"))
    cfg.gsnr_report_every = to_size("gsnr_report_every", *v);

  if (auto v = take("student_dims"))
    cfg.student_dims = to_size_list("student_dims", *v);
  if (auto v = take("teacher_dims"))
    cfg.teacher_dims = to_size_list("teacher_dims", *v);

  if (auto v = take("n_per_class")) cfg.n_per_class = to_size("n_per_class", *v);
  if (auto v = take("num_classes")) cfg.num_classes = to_size("num_classes", *v);
  if (auto v = take("feature_dim")) cfg.feature_dim = to_size("feature_dim", *v);
  if (auto v = take("difficulty")) cfg.difficulty = to_double("difficulty", *v);

  if (auto v = take("dataset")) cfg.dataset_dir = *v;
  if (auto v = take("teacher_model")) cfg.teacher_model = *v;
  if (auto v = take("teacher_logits")) cfg.teacher_logits = *v;
  if (auto v = take("out_dir")) cfg.out_dir = *v;

  if (auto v = take("k_grid")) cfg.k_grid = to_size_list("k_grid", *v);
  if (auto v = take("ksearch_epochs"))
    cfg.ksearch_epochs = to_size("ksearch_epochs", *v);
  if (auto v = take("ksearch_frac")) cfg.ksearch_frac = to_double("ksearch_frac", *v);

  if (!merged.empty())
    throw ConfigError("unknown config key '" + merged.begin()->first + "'");

  // Range checks shared by every command.
  if (!(cfg.tau > 0.0)) throw ConfigError("tau must be positive");
  if (cfg.delta < 0.0) throw ConfigError("delta must be >= 0");
  if (cfg.mu - cfg.delta < 0.0 || cfg.mu + cfg.delta >= 1.0)
    throw ConfigError("require 0 <= mu - delta and mu + delta < 1");
  if (!(cfg.lr > 0.0)) throw ConfigError("lr must be positive");
  if (!(cfg.lr_decay_factor > 0.0)) throw ConfigError("lr_decay_factor must be positive");
  if (cfg.batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (cfg.epochs == 0) throw ConfigError("epochs must be >= 1");
  if (!(cfg.easy_end_frac > 0.0) || !(cfg.easy_end_frac <= cfg.hard_start_frac) ||
      !(cfg.hard_start_frac < 1.0))
    throw ConfigError("require 0 < easy_end_frac <= hard_start_frac < 1");
  if (cfg.gsnr_window < 2) throw ConfigError("gsnr_window must be >= 2");
  if (cfg.gsnr_sample_every == 0) throw ConfigError("gsnr_sample_every must be >= 1");
  if (cfg.student_dims.size() < 2 || cfg.teacher_dims.size() < 2)
    throw ConfigError("model dims need at least input and output sizes");
  for (std::size_t d : cfg.student_dims)
    if (d == 0) throw ConfigError("student_dims entries must be positive");
  for (std::size_t d : cfg.teacher_dims)
    if (d == 0) throw ConfigError("teacher_dims entries must be positive");
  if (cfg.num_classes < 2) throw ConfigError("num_classes must be >= 2");
  if (cfg.n_per_class < 5)
    throw ConfigError("n_per_class must be >= 5 (the test split takes 20%)");
  if (cfg.feature_dim == 0) throw ConfigError("feature_dim must be >= 1");
  if (!(cfg.difficulty >= 0.0) || !(cfg.difficulty <= 1.0))
    throw ConfigError("difficulty must be in [0, 1]");
  if (!(cfg.ksearch_frac > 0.0) || !(cfg.ksearch_frac <= 1.0))
    throw ConfigError("ksearch_frac must be in (0, 1]");
  if (cfg.ksearch_epochs == 0) throw ConfigError("ksearch_epochs must be >= 1");
  return cfg;
}

}  // namespace deepkd
