// SPDX-License-Identifier: Apache-2.0
#include "deepkd/commands.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "deepkd/csvio.hpp"
#include "deepkd/errors.hpp"

namespace deepkd {

namespace {

void ensure_parent_dir(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
}

Mat64 forward_all(const MlpModel& model, const Dataset& d) {
  return forward(model, d.features, nullptr);
}

// Keys that only affect distillation; flagged when train-teacher sees them.
const std::set<std::string>& distill_only_keys() {
  static const std::set<std::string> keys{
      "tau",        "alpha",         "beta1",           "beta2",
      "delta",      "kd_weighting",  "dtm_enabled",     "k_init",
      "k_opt",      "k_max",         "easy_end_frac",   "hard_start_frac",
      "dtm_preset", "student_dims",  "teacher_logits",  "k_grid",
      "ksearch_epochs", "ksearch_frac"};
  return keys;
}

}  // namespace

void cmd_gen_data(const RunConfig& cfg, std::ostream& log) {
  const SplitDataset s = gen_data(cfg.seed, cfg.n_per_class, cfg.num_classes,
                                  cfg.feature_dim, cfg.difficulty);
  write_split(cfg.dataset_dir, s);
  log << "gen-data: wrote " << s.train.size() << " train / " << s.test.size()
      << " test rows (" << cfg.num_classes << " classes, dim "
      << cfg.feature_dim << ", difficulty " << cfg.difficulty << ") to "
      << cfg.dataset_dir << "\n";
}

TrainResult cmd_train_teacher(const RunConfig& cfg, std::ostream& log) {
  for (const std::string& key : cfg.explicit_keys) {
    if (distill_only_keys().count(key))
      log << "warning: key '" << key << "' is ignored by train-teacher\n";
  }
  const SplitDataset s = load_split(cfg.dataset_dir);

  TrainPlan plan = plan_from_config(cfg, s.train.num_classes);
  plan.dims = cfg.teacher_dims;
  plan.mode = Mode::kCeOnly;
  plan.dtm.reset();
  plan.track_gsnr = false;

  TrainResult res = run_training(plan, s.train, nullptr, s.test);
  ensure_parent_dir(cfg.teacher_model);
  save_model(res.model, cfg.teacher_model);
  std::filesystem::create_directories(cfg.out_dir);
  write_metrics_csv(cfg.out_dir + "/teacher_metrics.csv", res.metrics);
  write_timing_csv(cfg.out_dir + "/teacher_timing.csv", res.metrics);
  log << "train-teacher: " << plan.epochs << " epochs, final test accuracy "
      << format_double(res.final_test_acc) << ", saved " << cfg.teacher_model
      << "\n";
  return res;
}

void cmd_cache_logits(const RunConfig& cfg, std::ostream& log) {
  const SplitDataset s = load_split(cfg.dataset_dir);
  const MlpModel teacher = load_model(cfg.teacher_model);
  if (teacher.in_dim() != s.train.dim())
    throw ConfigError("teacher input width does not match dataset");
  if (teacher.out_dim() != s.train.num_classes)
    throw ConfigError("teacher output width does not match class count");
  const Mat64 logits = forward_all(teacher, s.train);
  ensure_parent_dir(cfg.teacher_logits);
  write_logits_csv(cfg.teacher_logits, logits);
  log << "cache-logits: wrote " << logits.rows << " rows to "
      << cfg.teacher_logits << "\n";
}

TrainResult cmd_distill(const RunConfig& cfg, std::ostream& log) {
  const SplitDataset s = load_split(cfg.dataset_dir);
  Mat64 logits;
  const bool uses_teacher = cfg.mode != Mode::kCeOnly;
  if (uses_teacher) logits = load_logits_csv(cfg.teacher_logits);

  const TrainPlan plan = plan_from_config(cfg, s.train.num_classes);
  TrainResult res =
      run_training(plan, s.train, uses_teacher ? &logits : nullptr, s.test);

  std::filesystem::create_directories(cfg.out_dir);
  write_metrics_csv(cfg.out_dir + "/metrics.csv", res.metrics);
  write_timing_csv(cfg.out_dir + "/timing.csv", res.metrics);
  write_gsnr_csv(cfg.out_dir + "/gsnr.csv", res.gsnr);
  save_model(res.model, cfg.out_dir + "/student.json");
  log << "distill: mode " << to_string(cfg.mode) << ", " << plan.epochs
      << " epochs, final test accuracy " << format_double(res.final_test_acc)
      << ", outputs in " << cfg.out_dir << "\n";
  return res;
}

GradcheckReport cmd_gradcheck(const RunConfig& cfg, std::size_t n_coords,
                              std::ostream& log) {
  MlpModel model = [&] {
    Rng init_rng(cfg.seed);
    return MlpModel::he_init(cfg.student_dims, init_rng);
  }();
  if (model.param_count() > 10000)
    throw ConfigError("gradcheck supports at most 1e4 parameters");
  const std::size_t classes = model.out_dim();
  if (classes < 2) throw ConfigError("gradcheck needs >= 2 classes");

  constexpr std::size_t kBatch = 4;
  constexpr double kKinkClearance = 3e-3;
  Rng rng(cfg.seed + 1);

  // Draw inputs whose hidden pre-activations stay clear of the ReLU kink so
  // the central differences (h below) never cross it.
  Mat64 x(kBatch, model.in_dim());
  std::vector<std::size_t> labels(kBatch);
  Mat64 teacher(kBatch, classes);
  for (std::size_t i = 0; i < kBatch; ++i) {
    for (int attempt = 0; attempt < 100; ++attempt) {
      Mat64 row(1, model.in_dim());
      for (double& v : row.data) v = rng.next_normal();
      ForwardTape tape;
      forward(model, row, &tape);
      double clearance = 1.0;
      for (std::size_t l = 0; l + 1 < model.num_layers(); ++l)
        for (double z : tape.pre[l].data)
          clearance = std::min(clearance, std::abs(z));
      if (clearance >= kKinkClearance || attempt == 99) {
        std::copy(row.data.begin(), row.data.end(), x.row(i).begin());
        break;
      }
    }
    labels[i] = rng.next_below(classes);
    for (double& v : teacher.row(i)) v = 2.0 * rng.next_normal();
  }

  // Masked non-target KL with the schedule's steady-state k when masking is
  // enabled for the mode.
  std::optional<std::size_t> k;
  if (cfg.dtm_enabled && cfg.mode != Mode::kCeOnly && classes > 2)
    k = resolve_schedule(cfg, classes).k_opt;
  std::vector<std::vector<std::size_t>> selections(kBatch);
  for (std::size_t i = 0; i < kBatch; ++i) {
    if (k && *k < classes - 1)
      selections[i] = build_mask(teacher.row(i), labels[i], *k).selected;
  }
  auto selection_of = [&](std::size_t i) -> ClassSelection {
    if (selections[i].empty()) return std::nullopt;
    return std::span<const std::size_t>(selections[i]);
  };

  const KdWeighting weighting = cfg.weighting;
  auto batch_loss = [&](const MlpModel& m) {
    const Mat64 logits = forward(m, x, nullptr);
    double total = 0.0;
    for (std::size_t i = 0; i < kBatch; ++i) {
      total += deepkd_loss(teacher.row(i), logits.row(i), labels[i], cfg.tau,
                           cfg.alpha, cfg.beta1, cfg.beta2, selection_of(i),
                           weighting)
                   .total;
    }
    return total / static_cast<double>(kBatch);
  };

  // Assembled analytic gradient, weighted exactly as the training loop does.
  ForwardTape tape;
  const Mat64 logits = forward(model, x, &tape);
  std::vector<LogitGradTriple> triples(kBatch);
  for (std::size_t i = 0; i < kBatch; ++i) {
    const auto srow = logits.row(i);
    triples[i].tau = cfg.tau;
    triples[i].tog = ce_loss_and_grad(srow, labels[i]).grad;
    triples[i].tcg =
        tckd_loss_and_grad(teacher.row(i), srow, labels[i], cfg.tau).grad;
    triples[i].ncg = nckd_loss_and_grad(teacher.row(i), srow, labels[i], cfg.tau,
                                        selection_of(i))
                         .grad;
    if (weighting == KdWeighting::kVanilla) {
      const ProbVector pt = ProbVector::from_logits(teacher.row(i), cfg.tau);
      const double rest = binary_probs(pt, labels[i]).rest_mass;
      for (double& g : triples[i].ncg) g *= rest;
    }
  }
  const StreamWeights weights{cfg.alpha, cfg.tau * cfg.tau * cfg.beta1,
                              cfg.tau * cfg.tau * cfg.beta2};
  const ParamGradTriple pg = param_grad_triple(model, tape, triples, weights);
  Vec64 analytic(pg.tog.size());
  for (std::size_t i = 0; i < analytic.size(); ++i)
    analytic[i] = pg.tog[i] + pg.tcg[i] + pg.ncg[i];

  std::vector<std::size_t> coords(model.param_count());
  for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
  if (n_coords != 0 && n_coords < coords.size()) {
    shuffle(rng, coords);
    coords.resize(n_coords);
    std::sort(coords.begin(), coords.end());
  }

  constexpr double kH = 1e-4;
  Vec64 params = model.flatten_params();
  GradcheckReport rep;
  rep.coords_checked = coords.size();
  MlpModel probe = model;
  for (std::size_t c : coords) {
    const double keep = params[c];
    params[c] = keep + kH;
    probe.set_params(params);
    const double fplus = batch_loss(probe);
    params[c] = keep - kH;
    probe.set_params(params);
    const double fminus = batch_loss(probe);
    params[c] = keep;
    const double fd = (fplus - fminus) / (2.0 * kH);
    const double denom = std::max({1e-3, std::abs(analytic[c]), std::abs(fd)});
    rep.max_rel_err = std::max(rep.max_rel_err, std::abs(analytic[c] - fd) / denom);
  }
  probe.set_params(params);
  rep.pass = rep.max_rel_err < rep.threshold;
  log << "gradcheck: coords=" << rep.coords_checked
      << " max_rel_err=" << format_double(rep.max_rel_err)
      << " threshold=" << format_double(rep.threshold) << " "
      << (rep.pass ? "PASS" : "FAIL") << "\n";
  return rep;
}

KsearchResult cmd_ksearch(const RunConfig& cfg, std::ostream& log) {
  if (cfg.mode == Mode::kCeOnly)
    throw ConfigError("ksearch needs a mode with a non-target KL term");
  const SplitDataset s = load_split(cfg.dataset_dir);
  const Mat64 logits = load_logits_csv(cfg.teacher_logits);
  if (logits.rows != s.train.size())
    throw ConfigError("teacher logit cache does not match the training split");
  const std::size_t classes = s.train.num_classes;

  std::vector<std::size_t> grid = cfg.k_grid;
  if (grid.empty()) {
    const std::size_t kmax = classes - 1;
    for (double f : {0.0, 0.25, 0.5, 0.75, 1.0}) {
      const double v = 1.0 + f * static_cast<double>(kmax - 1);
      grid.push_back(static_cast<std::size_t>(std::llround(v)));
    }
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  }
  for (std::size_t k : grid)
    if (k < 1 || k > classes - 1)
      throw ConfigError("k_grid entry out of range [1, C-1]");

  // Deterministic subsample of the training split, shared by all runs.
  std::vector<std::size_t> idx(s.train.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng sub_rng(cfg.seed);
  shuffle(sub_rng, idx);
  const std::size_t n_sub = std::max<std::size_t>(
      1, static_cast<std::size_t>(
             std::ceil(cfg.ksearch_frac * static_cast<double>(idx.size()))));
  idx.resize(n_sub);

  Dataset sub;
  sub.num_classes = classes;
  sub.features = Mat64(n_sub, s.train.dim());
  Mat64 sub_logits(n_sub, classes);
  for (std::size_t i = 0; i < n_sub; ++i) {
    const auto fsrc = s.train.features.row(idx[i]);
    std::copy(fsrc.begin(), fsrc.end(), sub.features.row(i).begin());
    sub.labels.push_back(s.train.labels[idx[i]]);
    const auto lsrc = logits.row(idx[i]);
    std::copy(lsrc.begin(), lsrc.end(), sub_logits.row(i).begin());
  }

  KsearchResult res;
  log << "ksearch: " << grid.size() << " candidates, " << n_sub
      << " training rows, " << cfg.ksearch_epochs << " epochs each\n";
  for (std::size_t k : grid) {
    TrainPlan plan = plan_from_config(cfg, classes);
    plan.dtm.reset();
    plan.static_k = k;
    plan.epochs = cfg.ksearch_epochs;
    plan.lr_decay_epochs.clear();
    plan.track_gsnr = false;
    const TrainResult r = run_training(plan, sub, &sub_logits, s.test);
    res.rows.push_back({k, r.final_test_acc});
    log << "  k=" << k << " test_acc=" << format_double(r.final_test_acc) << "\n";
  }
  const auto best = std::max_element(
      res.rows.begin(), res.rows.end(),
      [](const KsearchRow& a, const KsearchRow& b) { return a.test_acc < b.test_acc; });
  res.recommended_k = best->k;
  log << "ksearch: recommended k=" << res.recommended_k << "\n";

  std::filesystem::create_directories(cfg.out_dir);
  std::string csv = "k,test_acc\n";
  for (const KsearchRow& row : res.rows)
    csv += std::to_string(row.k) + ',' + format_double(row.test_acc) + '\n';
  write_file(cfg.out_dir + "/ksearch.csv", csv);
  return res;
}

void cmd_gsnr_report(const std::string& path, std::ostream& log) {
  const std::vector<GsnrReport> reports = read_gsnr_csv(path);
  if (reports.empty()) {
    log << "gsnr-report: no reports in " << path << "\n";
    return;
  }
  static const char* names[3] = {"tog", "tcg", "ncg"};
  log << "gsnr-report: " << reports.size() << " reports from " << path << "\n";
  log << "stream  gsnr_mean      gsnr_last      bsnr_mean      bsnr_last\n";
  for (std::size_t s = 0; s < 3; ++s) {
    double gsum = 0.0, bsum = 0.0;
    for (const GsnrReport& r : reports) {
      gsum += r.gsnr[s];
      bsum += r.bsnr[s];
    }
    const double n = static_cast<double>(reports.size());
    log << names[s] << "     " << format_double(gsum / n) << "  "
        << format_double(reports.back().gsnr[s]) << "  "
        << format_double(bsum / n) << "  " << format_double(reports.back().bsnr[s])
        << "\n";
  }
}

}  // namespace deepkd
