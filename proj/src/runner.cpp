// SPDX-License-Identifier: Apache-2.0
#include "deepkd/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <thread>

#include "deepkd/csvio.hpp"
#include "deepkd/errors.hpp"

namespace deepkd {

namespace {

constexpr const char* kMetricsHeader = "epoch,ce,tckd,nckd,test_acc,k";

std::size_t round_frac(double frac, std::size_t n, std::size_t lo, std::size_t hi) {
  const long long r = std::llround(frac * static_cast<double>(n));
  if (r <= static_cast<long long>(lo)) return lo;
  if (r >= static_cast<long long>(hi)) return hi;
  return static_cast<std::size_t>(r);
}

Vec64 add3(const Vec64& a, const Vec64& b, const Vec64& c) {
  Vec64 out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i] + c[i];
  return out;
}

Vec64 add2(const Vec64& a, const Vec64& b) {
  Vec64 out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

}  // namespace

void write_metrics_csv(const std::string& path,
                       const std::vector<EpochMetrics>& rows) {
  std::string out = std::string(kMetricsHeader) + "\n";
  for (const EpochMetrics& r : rows) {
    out += std::to_string(r.epoch) + ',' + format_double(r.ce) + ',' +
           format_double(r.tckd) + ',' + format_double(r.nckd) + ',' +
           format_double(r.test_acc) + ',' + std::to_string(r.k) + '\n';
  }
  write_file(path, out);
}

void write_timing_csv(const std::string& path,
                      const std::vector<EpochMetrics>& rows) {
  std::string out = "epoch,wall_ms\n";
  for (const EpochMetrics& r : rows)
    out += std::to_string(r.epoch) + ',' + format_double(r.wall_ms) + '\n';
  write_file(path, out);
}

std::vector<EpochMetrics> read_metrics_csv(const std::string& path) {
  const std::vector<std::string> lines = read_lines(path);
  if (lines.empty() || lines[0] != kMetricsHeader)
    throw ParseError(path + ":1: missing metrics header");
  std::vector<EpochMetrics> rows;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    if (lines[li].empty()) continue;
    const std::string where = path + ":" + std::to_string(li + 1);
    const auto f = split_fields(lines[li]);
    if (f.size() != 6) throw ParseError(where + ": expected 6 fields");
    EpochMetrics m;
    m.epoch = parse_size(f[0], where);
    m.ce = parse_double(f[1], where);
    m.tckd = parse_double(f[2], where);
    m.nckd = parse_double(f[3], where);
    m.test_acc = parse_double(f[4], where);
    m.k = parse_size(f[5], where);
    rows.push_back(m);
  }
  return rows;
}

DtmSchedule resolve_schedule(const RunConfig& cfg, std::size_t num_classes) {
  if (num_classes < 2)
    throw ConfigError("masking needs at least 2 classes");
  const std::size_t k_max = cfg.k_max.value_or(num_classes - 1);
  const std::size_t k_init =
      cfg.k_init.value_or(round_frac(0.05, num_classes, 1, k_max));
  const std::size_t k_opt =
      cfg.k_opt.value_or(round_frac(0.55, num_classes, k_init, k_max));
  try {
    return DtmSchedule::make(num_classes, k_init, k_opt, k_max, cfg.epochs,
                             cfg.easy_end_frac, cfg.hard_start_frac);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

TrainPlan plan_from_config(const RunConfig& cfg, std::size_t num_classes) {
  TrainPlan plan;
  plan.dims = cfg.student_dims;
  plan.mode = cfg.mode;
  plan.weighting = cfg.weighting;
  plan.tau = cfg.tau;
  plan.alpha = cfg.alpha;
  plan.beta1 = cfg.beta1;
  plan.beta2 = cfg.beta2;
  plan.mu = cfg.mu;
  plan.delta = cfg.delta;
  plan.lr = cfg.lr;
  plan.lr_decay_epochs = cfg.lr_decay_epochs;
  plan.lr_decay_factor = cfg.lr_decay_factor;
  plan.batch_size = cfg.batch_size;
  plan.epochs = cfg.epochs;
  plan.seed = cfg.seed;
  if (cfg.dtm_enabled && cfg.mode != Mode::kCeOnly)
    plan.dtm = resolve_schedule(cfg, num_classes);
  plan.gsnr.window = cfg.gsnr_window;
  plan.gsnr.sample_every = cfg.gsnr_sample_every;
  plan.gsnr.report_every = cfg.gsnr_report_every;
  return plan;
}

TrainResult run_training(const TrainPlan& plan, const Dataset& train,
                         const Mat64* teacher_logits, const Dataset& test) {
  const std::size_t classes = train.num_classes;
  if (plan.dims.front() != train.dim())
    throw ConfigError("model input width does not match dataset");
  if (plan.dims.back() != classes)
    throw ConfigError("model output width does not match class count");
  const bool uses_teacher = plan.mode != Mode::kCeOnly;
  if (uses_teacher) {
    if (teacher_logits == nullptr)
      throw ConfigError("mode " + to_string(plan.mode) + " requires teacher logits");
    if (teacher_logits->rows != train.size() || teacher_logits->cols != classes)
      throw ConfigError("teacher logit cache does not match the training split");
  }
  if (plan.static_k && plan.dtm)
    throw ConfigError("static k and a masking schedule are mutually exclusive");
  if (plan.static_k && (*plan.static_k < 1 || *plan.static_k > classes - 1))
    throw ConfigError("static k out of range");

  Rng rng(plan.seed);
  TrainResult res;
  res.model = MlpModel::he_init(plan.dims, rng);
  const std::size_t n_params = res.model.param_count();

  // Real optimizer state for the active mode plus, for modes without three
  // buffers, a shadow tri-buffer (coefficient mu across streams) that feeds
  // the buffer-SNR windows only.
  MomentumState tri = MomentumState::zeros(n_params, plan.mu, plan.delta, plan.lr);
  DotState dot = DotState::zeros(n_params, plan.mu, plan.delta, plan.lr);
  SgdMomentum sgd = SgdMomentum::zeros(n_params, plan.mu, plan.lr);
  MomentumState shadow = MomentumState::zeros(n_params, plan.mu, 0.0, plan.lr);
  GsnrTracker tracker(plan.gsnr);

  const StreamWeights weights{plan.alpha, plan.tau * plan.tau * plan.beta1,
                              plan.tau * plan.tau * plan.beta2};
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  const std::size_t eval_threads = env_eval_threads();
  double lr = plan.lr;
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < plan.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    if (std::find(plan.lr_decay_epochs.begin(), plan.lr_decay_epochs.end(), epoch) !=
        plan.lr_decay_epochs.end())
      lr *= plan.lr_decay_factor;
    tri.lr = dot.lr = sgd.lr = lr;

    std::size_t k = 0;  // classes inside the non-target KL this epoch
    bool masked = false;
    if (uses_teacher) {
      k = classes - 1;
      if (plan.dtm) {
        k = k_for_epoch(*plan.dtm, epoch);
        masked = true;
      } else if (plan.static_k) {
        k = *plan.static_k;
        masked = true;
      }
    }

    shuffle(rng, order);
    double sum_ce = 0.0, sum_tckd = 0.0, sum_nckd = 0.0;

    for (std::size_t start = 0; start < order.size(); start += plan.batch_size) {
      const std::size_t bn = std::min(plan.batch_size, order.size() - start);
      Mat64 x(bn, train.dim());
      std::vector<std::size_t> labels(bn);
      for (std::size_t i = 0; i < bn; ++i) {
        const std::size_t row = order[start + i];
        const auto src = train.features.row(row);
        std::copy(src.begin(), src.end(), x.row(i).begin());
        labels[i] = train.labels[row];
      }

      ForwardTape tape;
      const Mat64 logits = forward(res.model, x, &tape);

      std::vector<LogitGradTriple> triples(bn);
      for (std::size_t i = 0; i < bn; ++i) {
        const auto srow = logits.row(i);
        const std::size_t target = labels[i];
        LossGrad ce = ce_loss_and_grad(srow, target);
        sum_ce += ce.loss;
        LogitGradTriple& t = triples[i];
        t.tau = plan.tau;
        t.tog = std::move(ce.grad);
        if (!uses_teacher) {
          t.tcg.assign(classes, 0.0);
          t.ncg.assign(classes, 0.0);
          continue;
        }
        const auto trow = teacher_logits->row(order[start + i]);
        LossGrad tckd = tckd_loss_and_grad(trow, srow, target, plan.tau);
        sum_tckd += tckd.loss;

        ClassSelection sel = std::nullopt;
        TopkMask mask;
        if (masked && k < classes - 1) {
          mask = build_mask(trow, target, k, epoch);
          sel = std::span<const std::size_t>(mask.selected);
        }
        LossGrad nckd = nckd_loss_and_grad(trow, srow, target, plan.tau, sel);
        if (plan.weighting == KdWeighting::kVanilla) {
          const ProbVector pt = ProbVector::from_logits(trow, plan.tau);
          const double rest = binary_probs(pt, target).rest_mass;
          nckd.loss *= rest;
          for (double& g : nckd.grad) g *= rest;
        }
        sum_nckd += nckd.loss;
        t.tcg = std::move(tckd.grad);
        t.ncg = std::move(nckd.grad);
      }

      const ParamGradTriple pg = param_grad_triple(res.model, tape, triples, weights);

      Vec64 delta_w;
      switch (plan.mode) {
        case Mode::kDeepKd:
          delta_w = tri_step(tri, pg.tog, pg.tcg, pg.ncg);
          break;
        case Mode::kDot: {
          const Vec64 g_kd = add2(pg.tcg, pg.ncg);
          delta_w = dot_step(dot, pg.tog, g_kd);
          break;
        }
        default: {
          const Vec64 g = add3(pg.tog, pg.tcg, pg.ncg);
          delta_w = sgd_step(sgd, g);
          break;
        }
      }
      res.model.add_delta(delta_w);
      ++step;

      if (plan.track_gsnr) {
        if (plan.mode == Mode::kDeepKd) {
          tracker.record(step, pg.tog, pg.tcg, pg.ncg, tri.v_tog, tri.v_tcg,
                         tri.v_ncg);
        } else {
          tri_step(shadow, pg.tog, pg.tcg, pg.ncg);
          tracker.record(step, pg.tog, pg.tcg, pg.ncg, shadow.v_tog,
                         shadow.v_tcg, shadow.v_ncg);
        }
      }
    }

    EpochMetrics m;
    m.epoch = epoch;
    const double inv_n = 1.0 / static_cast<double>(train.size());
    m.ce = sum_ce * inv_n;
    m.tckd = sum_tckd * inv_n;
    m.nckd = sum_nckd * inv_n;
    m.test_acc = eval_accuracy(res.model, test, eval_threads);
    m.k = k;
    m.wall_ms = std::chrono::duration<double, std::milli>(
                    std::chrono::steady_clock::now() - t0)
                    .count();
    res.metrics.push_back(m);
  }

  res.gsnr = tracker.reports();
  res.final_test_acc = res.metrics.back().test_acc;
  return res;
}

double eval_accuracy(const MlpModel& model, const Dataset& data,
                     std::size_t max_threads) {
  if (data.size() == 0) throw std::invalid_argument("empty evaluation set");
  const std::size_t threads =
      std::max<std::size_t>(1, std::min(max_threads, data.size()));

  auto count_range = [&](std::size_t lo, std::size_t hi) -> std::size_t {
    Mat64 x(hi - lo, data.dim());
    for (std::size_t r = lo; r < hi; ++r) {
      const auto src = data.features.row(r);
      std::copy(src.begin(), src.end(), x.row(r - lo).begin());
    }
    const Mat64 logits = forward(model, x, nullptr);
    std::size_t correct = 0;
    for (std::size_t r = 0; r < logits.rows; ++r) {
      const auto row = logits.row(r);
      const std::size_t pred = static_cast<std::size_t>(
          std::max_element(row.begin(), row.end()) - row.begin());
      if (pred == data.labels[lo + r]) ++correct;
    }
    return correct;
  };

  if (threads == 1)
    return static_cast<double>(count_range(0, data.size())) /
           static_cast<double>(data.size());

  std::vector<std::size_t> counts(threads, 0);
  std::vector<std::thread> pool;
  const std::size_t chunk = (data.size() + threads - 1) / threads;
  for (std::size_t t = 0; t < threads; ++t) {
    const std::size_t lo = t * chunk;
    const std::size_t hi = std::min(lo + chunk, data.size());
    if (lo >= hi) break;
    pool.emplace_back([&, t, lo, hi] { counts[t] = count_range(lo, hi); });
  }
  for (auto& th : pool) th.join();
  std::size_t correct = 0;
  for (std::size_t c : counts) correct += c;  // fixed summation order
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

std::size_t env_eval_threads() {
  const char* v = std::getenv("DEEPKD_THREADS");
  if (v == nullptr) return 1;
  char* end = nullptr;
  const unsigned long n = std::strtoul(v, &end, 10);
  if (end == v || *end != '\0' || n == 0) return 1;
  return static_cast<std::size_t>(n);
}

}  // namespace deepkd
