// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "deepkd/numkit.hpp"

namespace deepkd {

// Three momentum buffers, one per gradient stream. The task and non-target
// streams accumulate with coefficient mu + delta, the target-class stream
// with mu - delta. Requires 0 <= mu - delta and mu + delta < 1.
struct MomentumState {
  Vec64 v_tog;
  Vec64 v_tcg;
  Vec64 v_ncg;
  double mu = 0.9;
  double delta = 0.0;
  double lr = 0.01;

  static MomentumState zeros(std::size_t n, double mu, double delta, double lr);
};

// v_tog <- g_tog + (mu+delta) v_tog, v_tcg <- g_tcg + (mu-delta) v_tcg,
// v_ncg <- g_ncg + (mu+delta) v_ncg. Returns the parameter delta
// -lr * (v_tog + v_tcg + v_ncg).
Vec64 tri_step(MomentumState& st, std::span<const double> g_tog,
               std::span<const double> g_tcg, std::span<const double> g_ncg);

// Two-buffer variant: the task gradient decays with mu - delta, the combined
// distillation gradient with mu + delta.
struct DotState {
  Vec64 v_task;
  Vec64 v_kd;
  double mu = 0.9;
  double delta = 0.0;
  double lr = 0.01;

  static DotState zeros(std::size_t n, double mu, double delta, double lr);
};

Vec64 dot_step(DotState& st, std::span<const double> g_task,
               std::span<const double> g_kd);

// Plain momentum on a single buffer: v <- g + mu v, delta = -lr v.
struct SgdMomentum {
  Vec64 v;
  double mu = 0.9;
  double lr = 0.01;

  static SgdMomentum zeros(std::size_t n, double mu, double lr);
};

Vec64 sgd_step(SgdMomentum& st, std::span<const double> g);

// Fixed-capacity ring of gradient snapshots. gsnr() returns
// ||mean||^2 / (mean squared deviation + 1e-12); the epsilon keeps the
// value finite when all samples coincide.
class GsnrWindow {
 public:
  explicit GsnrWindow(std::size_t capacity);

  void add(std::span<const double> sample);
  std::size_t size() const { return count_ < capacity_ ? count_ : capacity_; }
  bool full() const { return count_ >= capacity_; }
  std::size_t capacity() const { return capacity_; }
  // Throws NotReadyError with fewer than 2 recorded samples.
  double gsnr() const;

 private:
  std::size_t capacity_;
  std::size_t count_ = 0;
  std::size_t next_ = 0;
  std::size_t dim_ = 0;
  std::vector<Vec64> samples_;
};

// Signal-to-noise of the raw streams (gsnr) and of the momentum buffer
// contents sampled after each update (bsnr), in stream order tog, tcg, ncg.
struct GsnrReport {
  std::size_t step = 0;
  std::array<double, 3> gsnr{};
  std::array<double, 3> bsnr{};
};

struct GsnrTrackerConfig {
  std::size_t window = 200;       // samples per window
  std::size_t sample_every = 1;   // record every Nth step
  std::size_t report_every = 0;   // in samples; 0 means once per full window
};

// Records per-step stream gradients plus the post-update buffer contents and
// emits a report once the windows are full, then on the configured cadence.
class GsnrTracker {
 public:
  explicit GsnrTracker(const GsnrTrackerConfig& cfg);

  std::optional<GsnrReport> record(std::size_t step,
                                   std::span<const double> g_tog,
                                   std::span<const double> g_tcg,
                                   std::span<const double> g_ncg,
                                   std::span<const double> v_tog,
                                   std::span<const double> v_tcg,
                                   std::span<const double> v_ncg);

  const std::vector<GsnrReport>& reports() const { return reports_; }

 private:
  GsnrTrackerConfig cfg_;
  std::vector<GsnrWindow> raw_;     // tog, tcg, ncg
  std::vector<GsnrWindow> buffer_;  // tog, tcg, ncg
  std::size_t samples_ = 0;
  std::vector<GsnrReport> reports_;
};

// CSV with header step,stream,gsnr,bsnr; three rows per report in stream
// order tog, tcg, ncg. Values use 17 significant digits.
void write_gsnr_csv(const std::string& path, std::span<const GsnrReport> reports);

std::vector<GsnrReport> read_gsnr_csv(const std::string& path);

}  // namespace deepkd
