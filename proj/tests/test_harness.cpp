// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <initializer_list>
#include <sstream>

#include "deepkd/cli.hpp"
#include "deepkd/commands.hpp"
#include "deepkd/config.hpp"
#include "deepkd/dataset.hpp"
#include "deepkd/errors.hpp"
#include "deepkd/net.hpp"
#include "deepkd/runner.hpp"
#include "support/testutil.hpp"

using namespace deepkd;

namespace {

RunConfig cfg_of(const KeyValues& kv) { return make_run_config({}, kv); }

void write_text(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << body;
}

// Tiny synthetic problem shared by the runner tests: 144 train / 36 test
// rows, three classes, plus teacher logits from a seeded random net.
struct TinyProblem {
  SplitDataset data;
  Mat64 teacher_logits{0, 0};

  TinyProblem() {
    data = gen_data(7, 60, 3, 2, 0.5);
    Rng rng(19);
    const MlpModel teacher = MlpModel::he_init({2, 8, 3}, rng);
    teacher_logits = forward(teacher, data.train.features);
  }
};

const TinyProblem& tiny() {
  static TinyProblem p;
  return p;
}

TrainPlan tiny_plan(Mode mode) {
  TrainPlan plan;
  plan.dims = {2, 6, 3};
  plan.mode = mode;
  plan.weighting = KdWeighting::kDkd;
  plan.tau = 4.0;
  plan.mu = 0.9;
  plan.delta = 0.0;
  plan.lr = 0.05;
  plan.lr_decay_epochs = {};
  plan.batch_size = 16;
  plan.epochs = 3;
  plan.seed = 3;
  plan.dtm = std::nullopt;
  plan.track_gsnr = false;
  return plan;
}

int cli(std::initializer_list<std::string> args, std::string* out_text = nullptr) {
  std::vector<std::string> owned{"deepkd"};
  owned.insert(owned.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& s : owned) argv.push_back(s.c_str());
  std::ostringstream out, err;
  const int rc = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  if (out_text) *out_text = out.str() + err.str();
  return rc;
}

}  // namespace

TEST_CASE("config file parsing") {
  testutil::TempDir tmp("cfg");
  const std::string path = tmp.path() + "/run.cfg";
  write_text(path,
             "# comment\n"
             "\n"
             "mode = kd\n"
             "  tau=2.5  \n"
             "epochs=12 # trailing comment\n");
  const KeyValues kv = parse_config_file(path);
  CHECK(kv.at("mode") == "kd");
  CHECK(kv.at("tau") == "2.5");
  CHECK(kv.at("epochs") == "12");

  write_text(path, "mode kd\n");
  CHECK_THROWS_AS(parse_config_file(path), ParseError);
  try {
    parse_config_file(path);
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find(":1:") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config_file(tmp.path() + "/absent.cfg"), ParseError);
}

TEST_CASE("config defaults and dependent settings") {
  const RunConfig d = cfg_of({});
  CHECK(d.mode == Mode::kDeepKd);
  CHECK(d.weighting == KdWeighting::kDkd);
  CHECK(d.delta == 0.05);
  CHECK(d.dtm_enabled);
  CHECK(d.tau == 4.0);
  CHECK(d.mu == 0.9);
  CHECK(d.epochs == 240);
  CHECK(d.lr_decay_epochs == std::vector<std::size_t>{150, 180, 210});

  const RunConfig kd = cfg_of({{"mode", "kd"}});
  CHECK(kd.weighting == KdWeighting::kVanilla);
  CHECK(kd.delta == 0.075);
  CHECK_FALSE(kd.dtm_enabled);

  const RunConfig kd2 = cfg_of({{"mode", "kd"}, {"kd_weighting", "dkd"}});
  CHECK(kd2.delta == 0.05);
  const RunConfig kd3 = cfg_of({{"mode", "kd"}, {"delta", "0.08"}});
  CHECK(kd3.delta == 0.08);

  const RunConfig dot = cfg_of({{"mode", "dot"}});
  CHECK(dot.weighting == KdWeighting::kDkd);
  CHECK_FALSE(dot.dtm_enabled);

  // Overrides beat file entries.
  const RunConfig o = make_run_config({{"mode", "kd"}, {"tau", "2"}},
                                      {{"mode", "dkd"}});
  CHECK(o.mode == Mode::kDkd);
  CHECK(o.tau == 2.0);

  const RunConfig lists = cfg_of({{"lr_decay_epochs", "60,90"},
                                  {"student_dims", "2,8,3"},
                                  {"k_grid", "1,2"}});
  CHECK(lists.lr_decay_epochs == std::vector<std::size_t>{60, 90});
  CHECK(lists.student_dims == std::vector<std::size_t>{2, 8, 3});
  CHECK(lists.k_grid == std::vector<std::size_t>{1, 2});
}

TEST_CASE("config presets and validation") {
  const RunConfig p = cfg_of({{"dtm_preset", "cifar240"}});
  CHECK(p.k_init == std::size_t{5});
  CHECK(p.k_opt == std::size_t{55});
  CHECK(p.k_max == std::size_t{99});
  CHECK(p.easy_end_frac == doctest::Approx(60.0 / 240.0).epsilon(1e-12));
  CHECK(p.hard_start_frac == doctest::Approx(170.0 / 240.0).epsilon(1e-12));

  CHECK_THROWS_AS(cfg_of({{"banana", "1"}}), ConfigError);
  CHECK_THROWS_AS(cfg_of({{"epochs", "abc"}}), ConfigError);
  CHECK_THROWS_AS(cfg_of({{"epochs", "0"}}), ConfigError);
  CHECK_THROWS_AS(cfg_of({{"tau", "0"}}), ConfigError);
  CHECK_THROWS_AS(cfg_of({{"tau", "-1"}}), ConfigError);
  CHECK_THROWS_AS(cfg_of({{"mu", "1.5"}}), ConfigError);
  CHECK_THROWS_AS(cfg_of({{"mu", "0.9"}, {"delta", "0.15"}}), ConfigError);
  CHECK_THROWS_AS(cfg_of({{"delta", "-0.1"}}), ConfigError);
  CHECK_THROWS_AS(cfg_of({{"mode", "fancy"}}), ConfigError);
  CHECK_THROWS_AS(cfg_of({{"easy_end_frac", "0"}}), ConfigError);
  CHECK_THROWS_AS(cfg_of({{"easy_end_frac", "0.8"}, {"hard_start_frac", "0.5"}}),
                  ConfigError);
  CHECK_THROWS_AS(cfg_of({{"student_dims", "8"}}), ConfigError);
  CHECK_THROWS_AS(cfg_of({{"student_dims", "2,0,3"}}), ConfigError);
  CHECK_THROWS_AS(cfg_of({{"dtm_preset", "unknown"}}), ConfigError);
  CHECK_THROWS_AS(resolve_schedule(cfg_of({{"k_init", "3"}, {"k_opt", "2"}}), 10),
                  ConfigError);
  CHECK_THROWS_AS(resolve_schedule(cfg_of({{"k_max", "12"}}), 10), ConfigError);
  CHECK_THROWS_AS(cfg_of({{"batch_size", "0"}}), ConfigError);
  CHECK_THROWS_AS(cfg_of({{"difficulty", "1.5"}}), ConfigError);
  CHECK_THROWS_AS(cfg_of({{"ksearch_frac", "0"}}), ConfigError);
}

TEST_CASE("synthetic data generator") {
  const SplitDataset s = gen_data(11, 500, 3, 2, 0.5);
  CHECK(s.train.size() == 1200);
  CHECK(s.test.size() == 300);
  CHECK(s.train.dim() == 2);
  CHECK(s.train.num_classes == 3);
  for (std::size_t lab : s.train.labels) CHECK(lab < 3);
  std::array<std::size_t, 3> counts{};
  for (std::size_t lab : s.test.labels) ++counts[lab];
  CHECK(counts == std::array<std::size_t, 3>{100, 100, 100});

  const SplitDataset again = gen_data(11, 500, 3, 2, 0.5);
  CHECK(again.train.features.data == s.train.features.data);
  CHECK(again.train.labels == s.train.labels);
  CHECK(again.test.features.data == s.test.features.data);

  const SplitDataset other = gen_data(12, 500, 3, 2, 0.5);
  CHECK(other.train.features.data != s.train.features.data);

  CHECK_THROWS_AS(gen_data(1, 4, 3, 2, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(gen_data(1, 100, 1, 2, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(gen_data(1, 100, 3, 0, 0.5), std::invalid_argument);
}

TEST_CASE("difficulty zero is nearly linearly separable") {
  const SplitDataset s = gen_data(21, 200, 3, 2, 0.0);
  TrainPlan plan = tiny_plan(Mode::kCeOnly);
  plan.dims = {2, 3};  // bare linear softmax probe
  plan.epochs = 40;
  plan.lr = 0.1;
  plan.batch_size = 32;
  const TrainResult r = run_training(plan, s.train, nullptr, s.test);
  CHECK(r.final_test_acc >= 0.99);
}

TEST_CASE("dataset csv round trip") {
  testutil::TempDir tmp("data");
  const SplitDataset s = gen_data(31, 25, 3, 4, 0.5);
  write_split(tmp.path(), s);
  const SplitDataset back = load_split(tmp.path());
  CHECK(back.train.features.data == s.train.features.data);
  CHECK(back.train.labels == s.train.labels);
  CHECK(back.test.features.data == s.test.features.data);
  CHECK(back.test.labels == s.test.labels);
  CHECK(back.train.num_classes == 3);
  CHECK(back.test.num_classes == 3);

  // Rewriting produces byte-identical files.
  testutil::TempDir tmp2("data2");
  write_split(tmp2.path(), back);
  CHECK(testutil::slurp(tmp.path() + "/train.csv") ==
        testutil::slurp(tmp2.path() + "/train.csv"));
  CHECK(testutil::slurp(tmp.path() + "/test.csv") ==
        testutil::slurp(tmp2.path() + "/test.csv"));

  write_text(tmp.path() + "/train.csv", "f0,f1,label\n1.0,2.0\n");
  CHECK_THROWS_AS(load_split(tmp.path()), ParseError);
}

TEST_CASE("logits csv round trip") {
  testutil::TempDir tmp("logits");
  Rng rng(41);
  Mat64 logits(9, 4);
  for (double& v : logits.data) v = rng.next_normal();
  const std::string path = tmp.path() + "/tl.csv";
  write_logits_csv(path, logits);
  const Mat64 back = load_logits_csv(path);
  CHECK(back.rows == 9);
  CHECK(back.cols == 4);
  CHECK(back.data == logits.data);

  write_text(path, "index,logit0\n1,0.5\n");
  CHECK_THROWS_AS(load_logits_csv(path), ParseError);
  write_text(path, "index,logit0\n0,nan\n");
  CHECK_THROWS(load_logits_csv(path));
}

TEST_CASE("metrics csv round trip") {
  testutil::TempDir tmp("metrics");
  std::vector<EpochMetrics> rows(3);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    rows[i].epoch = i;
    rows[i].ce = 1.0 / (1.0 + static_cast<double>(i));
    rows[i].tckd = 0.25 * static_cast<double>(i);
    rows[i].nckd = 0.125;
    rows[i].test_acc = 0.5 + 0.1 * static_cast<double>(i);
    rows[i].k = i + 1;
    rows[i].wall_ms = 123.0 + static_cast<double>(i);  // excluded from metrics.csv
  }
  const std::string mpath = tmp.path() + "/metrics.csv";
  write_metrics_csv(mpath, rows);
  const std::string text = testutil::slurp(mpath);
  CHECK(text.rfind("epoch,ce,tckd,nckd,test_acc,k\n", 0) == 0);
  CHECK(text.find("wall") == std::string::npos);

  const std::vector<EpochMetrics> back = read_metrics_csv(mpath);
  REQUIRE(back.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(back[i].epoch == rows[i].epoch);
    CHECK(back[i].ce == rows[i].ce);
    CHECK(back[i].tckd == rows[i].tckd);
    CHECK(back[i].nckd == rows[i].nckd);
    CHECK(back[i].test_acc == rows[i].test_acc);
    CHECK(back[i].k == rows[i].k);
  }

  write_timing_csv(tmp.path() + "/timing.csv", rows);
  const std::string timing = testutil::slurp(tmp.path() + "/timing.csv");
  CHECK(timing.rfind("epoch,wall_ms\n", 0) == 0);
}

TEST_CASE("training requires teacher logits except for plain cross-entropy") {
  const TinyProblem& p = tiny();
  TrainPlan plan = tiny_plan(Mode::kKd);
  plan.weighting = KdWeighting::kVanilla;
  CHECK_THROWS_AS(run_training(plan, p.data.train, nullptr, p.data.test),
                  ConfigError);
  Mat64 short_logits(p.data.train.size() - 1, 3);
  CHECK_THROWS_AS(run_training(plan, p.data.train, &short_logits, p.data.test),
                  ConfigError);
  TrainPlan ce = tiny_plan(Mode::kCeOnly);
  CHECK_NOTHROW(run_training(ce, p.data.train, nullptr, p.data.test));
}

TEST_CASE("plain cross-entropy equals the combined mode with distillation off") {
  const TinyProblem& p = tiny();
  TrainPlan ce = tiny_plan(Mode::kCeOnly);
  TrainPlan dk = tiny_plan(Mode::kDeepKd);
  dk.alpha = 1.0;
  dk.beta1 = 0.0;
  dk.beta2 = 0.0;
  dk.delta = 0.0;
  const TrainResult a = run_training(ce, p.data.train, nullptr, p.data.test);
  const TrainResult b = run_training(dk, p.data.train, &p.teacher_logits, p.data.test);
  CHECK(a.model.flatten_params() == b.model.flatten_params());
  REQUIRE(a.metrics.size() == b.metrics.size());
  for (std::size_t i = 0; i < a.metrics.size(); ++i) {
    CHECK(a.metrics[i].ce == b.metrics[i].ce);
    CHECK(a.metrics[i].test_acc == b.metrics[i].test_acc);
  }
}

TEST_CASE("tri-buffer with zero split matches the single-buffer decoupled mode") {
  const TinyProblem& p = tiny();
  TrainPlan dk = tiny_plan(Mode::kDeepKd);  // delta already 0, no masking
  TrainPlan ref = tiny_plan(Mode::kDkd);
  const TrainResult a = run_training(dk, p.data.train, &p.teacher_logits, p.data.test);
  const TrainResult b = run_training(ref, p.data.train, &p.teacher_logits, p.data.test);
  CHECK(testutil::max_abs_diff(a.model.flatten_params(), b.model.flatten_params()) <=
        1e-10);
}

TEST_CASE("dual-buffer with zero split matches single-kl distillation") {
  const TinyProblem& p = tiny();
  TrainPlan dot = tiny_plan(Mode::kDot);
  dot.weighting = KdWeighting::kVanilla;
  TrainPlan kd = tiny_plan(Mode::kKd);
  kd.weighting = KdWeighting::kVanilla;
  const TrainResult a = run_training(dot, p.data.train, &p.teacher_logits, p.data.test);
  const TrainResult b = run_training(kd, p.data.train, &p.teacher_logits, p.data.test);
  CHECK(testutil::max_abs_diff(a.model.flatten_params(), b.model.flatten_params()) <=
        1e-10);
}

TEST_CASE("training is deterministic for a fixed seed") {
  const TinyProblem& p = tiny();
  TrainPlan plan = tiny_plan(Mode::kDeepKd);
  plan.delta = 0.05;
  plan.dtm = resolve_schedule(cfg_of({}), 3);
  const TrainResult a = run_training(plan, p.data.train, &p.teacher_logits, p.data.test);
  const TrainResult b = run_training(plan, p.data.train, &p.teacher_logits, p.data.test);
  CHECK(a.model.flatten_params() == b.model.flatten_params());
  REQUIRE(a.metrics.size() == b.metrics.size());
  for (std::size_t i = 0; i < a.metrics.size(); ++i) {
    CHECK(a.metrics[i].ce == b.metrics[i].ce);
    CHECK(a.metrics[i].nckd == b.metrics[i].nckd);
  }

  TrainPlan other = plan;
  other.seed = 4;
  const TrainResult c =
      run_training(other, p.data.train, &p.teacher_logits, p.data.test);
  CHECK(a.model.flatten_params() != c.model.flatten_params());
}

TEST_CASE("per-epoch k column follows the schedule") {
  const TinyProblem& p = tiny();
  RunConfig cfg = cfg_of({});
  TrainPlan plan = tiny_plan(Mode::kDeepKd);
  plan.epochs = 6;
  plan.dtm = resolve_schedule(cfg, 3);
  plan.dtm->total_epochs = 6;
  const TrainResult r = run_training(plan, p.data.train, &p.teacher_logits, p.data.test);
  REQUIRE(r.metrics.size() == 6);
  for (std::size_t e = 0; e < 6; ++e) {
    CHECK(r.metrics[e].k == k_for_epoch(*plan.dtm, e));
    if (e > 0) CHECK(r.metrics[e].k >= r.metrics[e - 1].k);
  }
  CHECK(r.metrics.back().k == 2);  // full width at the final epoch

  TrainPlan ce = tiny_plan(Mode::kCeOnly);
  const TrainResult rce = run_training(ce, p.data.train, nullptr, p.data.test);
  for (const auto& row : rce.metrics) CHECK(row.k == 0);

  TrainPlan kd = tiny_plan(Mode::kKd);
  kd.weighting = KdWeighting::kVanilla;
  const TrainResult rkd = run_training(kd, p.data.train, &p.teacher_logits, p.data.test);
  for (const auto& row : rkd.metrics) CHECK(row.k == 2);
}

TEST_CASE("static k overrides the schedule and excludes it") {
  const TinyProblem& p = tiny();
  TrainPlan plan = tiny_plan(Mode::kDeepKd);
  plan.static_k = 1;
  const TrainResult r = run_training(plan, p.data.train, &p.teacher_logits, p.data.test);
  for (const auto& row : r.metrics) CHECK(row.k == 1);

  plan.dtm = resolve_schedule(cfg_of({}), 3);
  CHECK_THROWS_AS(run_training(plan, p.data.train, &p.teacher_logits, p.data.test),
                  ConfigError);
}

TEST_CASE("evaluation accuracy is thread-count independent") {
  const TinyProblem& p = tiny();
  Rng rng(55);
  const MlpModel m = MlpModel::he_init({2, 6, 3}, rng);
  const double acc1 = eval_accuracy(m, p.data.test, 1);
  for (std::size_t t : {2, 3, 8, 64}) CHECK(eval_accuracy(m, p.data.test, t) == acc1);

  ::setenv("DEEPKD_THREADS", "4", 1);
  CHECK(env_eval_threads() == 4);
  ::setenv("DEEPKD_THREADS", "0", 1);
  CHECK(env_eval_threads() == 1);
  ::setenv("DEEPKD_THREADS", "junk", 1);
  CHECK(env_eval_threads() == 1);
  ::unsetenv("DEEPKD_THREADS");
  CHECK(env_eval_threads() == 1);
}

TEST_CASE("gsnr reports appear in training output when the window fills") {
  const TinyProblem& p = tiny();
  TrainPlan plan = tiny_plan(Mode::kDeepKd);
  plan.track_gsnr = true;
  plan.gsnr.window = 10;
  plan.epochs = 4;  // 9 batches per epoch -> 36 steps -> reports at 10,20,30
  const TrainResult r = run_training(plan, p.data.train, &p.teacher_logits, p.data.test);
  REQUIRE(r.gsnr.size() == 3);
  CHECK(r.gsnr[0].step == 10);
  CHECK(r.gsnr[1].step == 20);
  CHECK(r.gsnr[2].step == 30);
  for (const auto& rep : r.gsnr)
    for (int s = 0; s < 3; ++s) {
      CHECK(std::isfinite(rep.gsnr[s]));
      CHECK(rep.gsnr[s] >= 0.0);
      CHECK(std::isfinite(rep.bsnr[s]));
    }
}

// ---------------------------------------------------------------------------
// Command layer, exercised on one shared temp pipeline.

namespace {

struct PipelineFixture {
  testutil::TempDir dir{"pipeline"};
  KeyValues base;

  PipelineFixture() {
    base = {{"dataset", dir.path() + "/data"},
            {"out_dir", dir.path() + "/out"},
            {"teacher_model", dir.path() + "/teacher.json"},
            {"teacher_logits", dir.path() + "/teacher_logits.csv"},
            {"n_per_class", "60"},
            {"num_classes", "3"},
            {"feature_dim", "2"},
            {"difficulty", "0.3"},
            {"teacher_dims", "2,16,3"},
            {"student_dims", "2,6,3"},
            {"epochs", "12"},
            {"lr", "0.1"},
            {"lr_decay_epochs", ""},
            {"batch_size", "32"},
            {"seed", "11"}};
    std::ostringstream log;
    cmd_gen_data(cfg_of(base), log);
    cmd_train_teacher(cfg_of(base), log);
    cmd_cache_logits(cfg_of(base), log);
  }

  KeyValues with(const KeyValues& extra) const {
    KeyValues kv = base;
    for (const auto& [k, v] : extra) kv[k] = v;
    return kv;
  }
};

const PipelineFixture& pipeline() {
  static PipelineFixture f;
  return f;
}

}  // namespace

TEST_CASE("gen-data and teacher commands produce the expected artifacts") {
  const PipelineFixture& f = pipeline();
  const SplitDataset s = load_split(f.dir.path() + "/data");
  CHECK(s.train.size() == 144);
  CHECK(s.test.size() == 36);

  const MlpModel teacher = load_model(f.dir.path() + "/teacher.json");
  CHECK(teacher.dims == std::vector<std::size_t>{2, 16, 3});
  CHECK(eval_accuracy(teacher, s.test) > 1.0 / 3.0);
  CHECK(testutil::slurp(f.dir.path() + "/out/teacher_metrics.csv").size() > 0);
  CHECK(testutil::slurp(f.dir.path() + "/out/teacher_timing.csv").size() > 0);

  const Mat64 logits = load_logits_csv(f.dir.path() + "/teacher_logits.csv");
  CHECK(logits.rows == 144);
  CHECK(logits.cols == 3);
  const Mat64 fresh = forward(teacher, s.train.features);
  CHECK(logits.data == fresh.data);

  // Distillation-only keys are warned about, not applied, by teacher training.
  std::ostringstream log;
  cmd_train_teacher(cfg_of(f.with({{"tau", "2"}})), log);
  CHECK(log.str().find("ignor") != std::string::npos);
}

TEST_CASE("distill command writes a complete, reproducible run") {
  const PipelineFixture& f = pipeline();
  const KeyValues kv = f.with({{"mode", "deepkd"},
                               {"epochs", "4"},
                               {"lr", "0.02"},
                               {"gsnr_window", "10"},
                               {"out_dir", f.dir.path() + "/run1"}});
  std::ostringstream log;
  const TrainResult r = cmd_distill(cfg_of(kv), log);
  CHECK(r.metrics.size() == 4);

  const std::string run1 = f.dir.path() + "/run1";
  const std::vector<EpochMetrics> rows = read_metrics_csv(run1 + "/metrics.csv");
  CHECK(rows.size() == 4);
  CHECK(testutil::slurp(run1 + "/timing.csv").rfind("epoch,wall_ms\n", 0) == 0);
  const std::vector<GsnrReport> reps = read_gsnr_csv(run1 + "/gsnr.csv");
  CHECK(reps.size() == r.gsnr.size());
  const MlpModel student = load_model(run1 + "/student.json");
  CHECK(student.flatten_params() == r.model.flatten_params());

  // A second identical run is byte-identical on every persisted artifact
  // except timing.
  KeyValues kv2 = kv;
  kv2["out_dir"] = f.dir.path() + "/run2";
  cmd_distill(cfg_of(kv2), log);
  const std::string run2 = f.dir.path() + "/run2";
  CHECK(testutil::slurp(run1 + "/metrics.csv") ==
        testutil::slurp(run2 + "/metrics.csv"));
  CHECK(testutil::slurp(run1 + "/gsnr.csv") == testutil::slurp(run2 + "/gsnr.csv"));
  CHECK(testutil::slurp(run1 + "/student.json") ==
        testutil::slurp(run2 + "/student.json"));
  CHECK(testutil::slurp(run1 + "/metrics.csv").size() > 0);
}

TEST_CASE("gradient check command validates the assembled gradient") {
  const KeyValues kv = {{"student_dims", "4,10,5"}, {"seed", "5"}};
  std::ostringstream log;
  const GradcheckReport full = cmd_gradcheck(cfg_of(kv), 0, log);
  CHECK(full.pass);
  CHECK(full.max_rel_err < 1e-4);
  CHECK(full.coords_checked == 4 * 10 + 10 + 10 * 5 + 5);

  const GradcheckReport sampled = cmd_gradcheck(cfg_of(kv), 20, log);
  CHECK(sampled.pass);
  CHECK(sampled.coords_checked == 20);

  // Every mode's assembled gradient passes, not just the default.
  for (const char* mode : {"ce-only", "kd", "dkd", "dot"}) {
    const GradcheckReport r = cmd_gradcheck(cfg_of({{"student_dims", "3,6,4"},
                                                    {"mode", mode}}),
                                            0, log);
    CHECK(r.pass);
  }
}

TEST_CASE("k grid search runs fixed-k trials and recommends a winner") {
  const PipelineFixture& f = pipeline();
  const KeyValues kv = f.with({{"mode", "deepkd"},
                               {"k_grid", "1,2"},
                               {"ksearch_epochs", "2"},
                               {"lr", "0.02"},
                               {"out_dir", f.dir.path() + "/ks"}});
  std::ostringstream log;
  const KsearchResult r = cmd_ksearch(cfg_of(kv), log);
  REQUIRE(r.rows.size() == 2);
  CHECK(r.rows[0].k == 1);
  CHECK(r.rows[1].k == 2);
  CHECK((r.recommended_k == 1 || r.recommended_k == 2));
  CHECK(testutil::slurp(f.dir.path() + "/ks/ksearch.csv").rfind("k,test_acc\n", 0) == 0);

  const KsearchResult again = cmd_ksearch(cfg_of(kv), log);
  REQUIRE(again.rows.size() == 2);
  CHECK(again.rows[0].test_acc == r.rows[0].test_acc);
  CHECK(again.rows[1].test_acc == r.rows[1].test_acc);
  CHECK(again.recommended_k == r.recommended_k);

  CHECK_THROWS_AS(cmd_ksearch(cfg_of(f.with({{"mode", "ce-only"}})), log),
                  ConfigError);
}

TEST_CASE("gsnr report command summarizes a csv") {
  testutil::TempDir tmp("gsnrrep");
  std::vector<GsnrReport> reps(2);
  reps[0].step = 10;
  reps[0].gsnr = {1.0, 2.0, 3.0};
  reps[0].bsnr = {4.0, 5.0, 6.0};
  reps[1].step = 20;
  reps[1].gsnr = {2.0, 3.0, 4.0};
  reps[1].bsnr = {5.0, 6.0, 7.0};
  const std::string path = tmp.path() + "/gsnr.csv";
  write_gsnr_csv(path, reps);
  std::ostringstream log;
  cmd_gsnr_report(path, log);
  const std::string text = log.str();
  CHECK(text.find("tog") != std::string::npos);
  CHECK(text.find("tcg") != std::string::npos);
  CHECK(text.find("ncg") != std::string::npos);
}

// ---------------------------------------------------------------------------
// CLI surface.

TEST_CASE("cli pipeline end to end") {
  testutil::TempDir tmp("cli");
  const std::string data = tmp.path() + "/data";
  const std::string teacher = tmp.path() + "/teacher.json";
  const std::string logits = tmp.path() + "/tl.csv";
  const std::string out = tmp.path() + "/out";

  CHECK(cli({"gen-data", "--data", data, "--n-per-class", "40", "--classes", "3",
             "--dim", "2", "--difficulty", "0.3", "--seed", "9"}) == 0);
  CHECK(cli({"train-teacher", "--data", data, "--teacher-model", teacher,
             "--teacher-dims", "2,8,3", "--epochs", "6", "--lr", "0.1",
             "--set", "lr_decay_epochs=", "--out", out, "--seed", "9"}) == 0);
  CHECK(cli({"cache-logits", "--data", data, "--teacher-model", teacher,
             "--set", "teacher_logits=" + logits}) == 0);
  CHECK(cli({"distill", "--data", data, "--teacher-logits", logits, "--mode",
             "deepkd", "--student-dims", "2,6,3", "--set", "epochs=2",
             "--lr", "0.02", "--set", "lr_decay_epochs=", "--out", out,
             "--seed", "9"}) == 0);
  CHECK(testutil::slurp(out + "/metrics.csv").size() > 0);
  CHECK(testutil::slurp(out + "/student.json").size() > 0);

  std::string text;
  CHECK(cli({"gsnr-report", "--in", out + "/gsnr.csv"}, &text) == 0);
  CHECK(cli({"gradcheck", "--student-dims", "3,6,4", "--samples", "15"}, &text) == 0);
  CHECK(text.find("PASS") != std::string::npos);
}

TEST_CASE("cli exit codes distinguish config errors from runtime errors") {
  testutil::TempDir tmp("clierr");
  std::string text;
  CHECK(cli({"--help"}, &text) == 0);
  CHECK(cli({"distill", "--bogus-flag"}, &text) == 2);
  CHECK(cli({"distill", "--set", "epochs=abc"}, &text) == 2);
  CHECK(cli({"distill", "--set", "banana=1"}, &text) == 2);
  CHECK(cli({"nonsense-command"}, &text) == 2);
  CHECK(cli({"distill", "--data", tmp.path() + "/absent"}, &text) == 2);

  // Config file entries are honored and flag overrides win.
  const std::string cfgpath = tmp.path() + "/run.cfg";
  write_text(cfgpath, "epochs=0\n");
  CHECK(cli({"distill", "--config", cfgpath}, &text) == 2);
  CHECK(cli({"gradcheck", "--config", cfgpath, "--set", "epochs=3",
             "--student-dims", "3,6,4", "--samples", "10"},
            &text) == 0);
}
