// SPDX-License-Identifier: Apache-2.0
#include "deepkd/cli.hpp"

#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "deepkd/commands.hpp"
#include "deepkd/config.hpp"
#include "deepkd/errors.hpp"

namespace deepkd {

namespace {

// Binds string-valued flags to config keys; values flow through the same
// validation as config-file entries, and flags win over the file.
struct FlagBinder {
  std::map<std::string, std::string> values;
  std::vector<std::pair<CLI::Option*, std::string>> bound;

  void bind(CLI::App* cmd, const std::string& flag, const std::string& key,
            const std::string& help) {
    CLI::Option* opt = cmd->add_option(flag, values[key], help);
    bound.emplace_back(opt, key);
  }

  void collect(KeyValues& overrides) const {
    for (const auto& [opt, key] : bound)
      if (opt->count() > 0) overrides[key] = values.at(key);
  }
};

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"teacher-student distillation with decoupled gradient streams"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand name

  std::string config_path;
  std::vector<std::string> sets;
  FlagBinder flags;
  app.add_option("--config", config_path, "key=value config file");
  app.add_option("--set", sets, "extra key=value override (repeatable)");
  flags.bind(&app, "--seed", "seed", "rng seed");
  flags.bind(&app, "--out", "out_dir", "output directory");
  flags.bind(&app, "--mode", "mode", "ce-only|kd|dkd|dot|deepkd");

  CLI::App* gen = app.add_subcommand("gen-data", "write a synthetic dataset");
  flags.bind(gen, "--data", "dataset", "dataset directory");
  flags.bind(gen, "--n-per-class", "n_per_class", "samples per class");
  flags.bind(gen, "--classes", "num_classes", "number of classes");
  flags.bind(gen, "--dim", "feature_dim", "feature dimension");
  flags.bind(gen, "--difficulty", "difficulty", "overlap in [0,1]");

  CLI::App* teach = app.add_subcommand("train-teacher", "train the teacher on CE");
  flags.bind(teach, "--data", "dataset", "dataset directory");
  flags.bind(teach, "--teacher-model", "teacher_model", "output model path");
  flags.bind(teach, "--teacher-dims", "teacher_dims", "layer sizes, comma separated");
  flags.bind(teach, "--epochs", "epochs", "training epochs");
  flags.bind(teach, "--lr", "lr", "learning rate");
  flags.bind(teach, "--batch-size", "batch_size", "minibatch size");

  CLI::App* cache = app.add_subcommand("cache-logits", "cache teacher logits");
  flags.bind(cache, "--data", "dataset", "dataset directory");
  flags.bind(cache, "--teacher-model", "teacher_model", "teacher model path");
  flags.bind(cache, "--teacher-logits", "teacher_logits", "output CSV path");

  CLI::App* dist = app.add_subcommand("distill", "train a student");
  flags.bind(dist, "--data", "dataset", "dataset directory");
  flags.bind(dist, "--teacher-logits", "teacher_logits", "teacher logit CSV");
  flags.bind(dist, "--student-dims", "student_dims", "layer sizes, comma separated");
  flags.bind(dist, "--epochs", "epochs", "training epochs");
  flags.bind(dist, "--lr", "lr", "learning rate");
  flags.bind(dist, "--batch-size", "batch_size", "minibatch size");
  flags.bind(dist, "--tau", "tau", "distillation temperature");
  flags.bind(dist, "--alpha", "alpha", "task loss weight");
  flags.bind(dist, "--beta1", "beta1", "target-class KL weight");
  flags.bind(dist, "--beta2", "beta2", "non-target KL weight");
  flags.bind(dist, "--delta", "delta", "momentum coefficient split");
  flags.bind(dist, "--dtm", "dtm_enabled", "true|false dynamic masking");

  CLI::App* gcheck = app.add_subcommand("gradcheck", "finite-difference gradient check");
  flags.bind(gcheck, "--student-dims", "student_dims", "layer sizes, comma separated");
  flags.bind(gcheck, "--tau", "tau", "distillation temperature");
  std::size_t gradcheck_samples = 0;
  gcheck->add_option("--samples", gradcheck_samples,
                     "parameter coordinates to sample (0 = all)");

  CLI::App* greport = app.add_subcommand("gsnr-report", "summarize a gsnr.csv");
  std::string gsnr_in;
  greport->add_option("--in", gsnr_in, "gsnr csv path (default <out_dir>/gsnr.csv)");

  CLI::App* ks = app.add_subcommand("ksearch", "grid search the mask width");
  flags.bind(ks, "--data", "dataset", "dataset directory");
  flags.bind(ks, "--teacher-logits", "teacher_logits", "teacher logit CSV");
  flags.bind(ks, "--student-dims", "student_dims", "layer sizes, comma separated");
  flags.bind(ks, "--k-grid", "k_grid", "candidate k values, comma separated");
  flags.bind(ks, "--epochs", "ksearch_epochs", "epochs per candidate");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // --help and friends exit 0; genuine argument errors are validation
    // failures.
    std::stringstream ss;
    const int code = app.exit(e, out, ss);
    if (code == 0) return 0;
    err << ss.str();
    return 2;
  }

  try {
    KeyValues file_pairs;
    if (!config_path.empty()) file_pairs = parse_config_file(config_path);
    KeyValues overrides;
    flags.collect(overrides);
    for (const std::string& kv : sets) {
      const std::size_t eq = kv.find('=');
      if (eq == std::string::npos || eq == 0)
        throw ConfigError("--set expects key=value, got '" + kv + "'");
      overrides[kv.substr(0, eq)] = kv.substr(eq + 1);
    }
    const RunConfig cfg = make_run_config(file_pairs, overrides);

    if (gen->parsed()) {
      cmd_gen_data(cfg, out);
    } else if (teach->parsed()) {
      cmd_train_teacher(cfg, out);
    } else if (cache->parsed()) {
      cmd_cache_logits(cfg, out);
    } else if (dist->parsed()) {
      cmd_distill(cfg, out);
    } else if (gcheck->parsed()) {
      const GradcheckReport rep = cmd_gradcheck(cfg, gradcheck_samples, out);
      if (!rep.pass) return 1;
    } else if (greport->parsed()) {
      const std::string path = gsnr_in.empty() ? cfg.out_dir + "/gsnr.csv" : gsnr_in;
      cmd_gsnr_report(path, out);
    } else if (ks->parsed()) {
      cmd_ksearch(cfg, out);
    }
    return 0;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace deepkd
