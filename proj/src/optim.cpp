// SPDX-License-Identifier: Apache-2.0
#include "deepkd/optim.hpp"

#include <cmath>
#include <stdexcept>

#include "deepkd/csvio.hpp"
#include "deepkd/errors.hpp"

namespace deepkd {

namespace {

constexpr double kGsnrEpsilon = 1e-12;

void check_coeffs(double mu, double delta, double lr) {
  if (!std::isfinite(mu) || !std::isfinite(delta) || !std::isfinite(lr))
    throw std::invalid_argument("optimizer coefficients must be finite");
  if (mu - delta < 0.0 || mu + delta >= 1.0)
    throw std::invalid_argument("require 0 <= mu - delta and mu + delta < 1");
  if (!(lr > 0.0)) throw std::invalid_argument("lr must be positive");
}

void check_len(std::size_t expect, std::span<const double> g, const char* name) {
  if (g.size() != expect)
    throw std::invalid_argument(std::string("gradient length mismatch for ") + name);
}

// v <- g + coeff * v
void accumulate(Vec64& v, std::span<const double> g, double coeff) {
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = g[i] + coeff * v[i];
}

}  // namespace

MomentumState MomentumState::zeros(std::size_t n, double mu, double delta, double lr) {
  check_coeffs(mu, delta, lr);
  MomentumState st;
  st.v_tog.assign(n, 0.0);
  st.v_tcg.assign(n, 0.0);
  st.v_ncg.assign(n, 0.0);
  st.mu = mu;
  st.delta = delta;
  st.lr = lr;
  return st;
}

Vec64 tri_step(MomentumState& st, std::span<const double> g_tog,
               std::span<const double> g_tcg, std::span<const double> g_ncg) {
  const std::size_t n = st.v_tog.size();
  check_len(n, g_tog, "tog");
  check_len(n, g_tcg, "tcg");
  check_len(n, g_ncg, "ncg");
  accumulate(st.v_tog, g_tog, st.mu + st.delta);
  accumulate(st.v_tcg, g_tcg, st.mu - st.delta);
  accumulate(st.v_ncg, g_ncg, st.mu + st.delta);
  Vec64 delta_w(n);
  for (std::size_t i = 0; i < n; ++i)
    delta_w[i] = -st.lr * (st.v_tog[i] + st.v_tcg[i] + st.v_ncg[i]);
  return delta_w;
}

DotState DotState::zeros(std::size_t n, double mu, double delta, double lr) {
  check_coeffs(mu, delta, lr);
  DotState st;
  st.v_task.assign(n, 0.0);
  st.v_kd.assign(n, 0.0);
  st.mu = mu;
  st.delta = delta;
  st.lr = lr;
  return st;
}

Vec64 dot_step(DotState& st, std::span<const double> g_task,
               std::span<const double> g_kd) {
  const std::size_t n = st.v_task.size();
  check_len(n, g_task, "task");
  check_len(n, g_kd, "kd");
  accumulate(st.v_task, g_task, st.mu - st.delta);
  accumulate(st.v_kd, g_kd, st.mu + st.delta);
  Vec64 delta_w(n);
  for (std::size_t i = 0; i < n; ++i)
    delta_w[i] = -st.lr * (st.v_task[i] + st.v_kd[i]);
  return delta_w;
}

SgdMomentum SgdMomentum::zeros(std::size_t n, double mu, double lr) {
  check_coeffs(mu, 0.0, lr);
  SgdMomentum st;
  st.v.assign(n, 0.0);
  st.mu = mu;
  st.lr = lr;
  return st;
}

Vec64 sgd_step(SgdMomentum& st, std::span<const double> g) {
  check_len(st.v.size(), g, "g");
  accumulate(st.v, g, st.mu);
  Vec64 delta_w(st.v.size());
  for (std::size_t i = 0; i < st.v.size(); ++i) delta_w[i] = -st.lr * st.v[i];
  return delta_w;
}

GsnrWindow::GsnrWindow(std::size_t capacity) : capacity_(capacity) {
  if (capacity < 2) throw std::invalid_argument("window capacity must be >= 2");
  samples_.reserve(capacity);
}

void GsnrWindow::add(std::span<const double> sample) {
  if (sample.empty()) throw std::invalid_argument("empty gradient sample");
  if (count_ == 0) dim_ = sample.size();
  if (sample.size() != dim_)
    throw std::invalid_argument("gradient sample dimension changed");
  if (samples_.size() < capacity_) {
    samples_.emplace_back(sample.begin(), sample.end());
  } else {
    samples_[next_].assign(sample.begin(), sample.end());
  }
  next_ = (next_ + 1) % capacity_;
  ++count_;
}

double GsnrWindow::gsnr() const {
  const std::size_t n = size();
  if (n < 2) throw NotReadyError("gsnr needs at least 2 samples");
  Vec64 mean(dim_, 0.0);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t i = 0; i < dim_; ++i) mean[i] += samples_[s][i];
  for (double& m : mean) m /= static_cast<double>(n);

  double signal = 0.0;
  for (double m : mean) signal += m * m;
  double noise = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t i = 0; i < dim_; ++i) {
      const double d = samples_[s][i] - mean[i];
      noise += d * d;
    }
  }
  noise /= static_cast<double>(n);
  return signal / (noise + kGsnrEpsilon);
}

GsnrTracker::GsnrTracker(const GsnrTrackerConfig& cfg) : cfg_(cfg) {
  if (cfg_.sample_every == 0)
    throw std::invalid_argument("sample_every must be >= 1");
  for (int i = 0; i < 3; ++i) {
    raw_.emplace_back(cfg_.window);
    buffer_.emplace_back(cfg_.window);
  }
}

std::optional<GsnrReport> GsnrTracker::record(
    std::size_t step, std::span<const double> g_tog,
    std::span<const double> g_tcg, std::span<const double> g_ncg,
    std::span<const double> v_tog, std::span<const double> v_tcg,
    std::span<const double> v_ncg) {
  if (step % cfg_.sample_every != 0) return std::nullopt;
  raw_[0].add(g_tog);
  raw_[1].add(g_tcg);
  raw_[2].add(g_ncg);
  buffer_[0].add(v_tog);
  buffer_[1].add(v_tcg);
  buffer_[2].add(v_ncg);
  ++samples_;

  const std::size_t stride = cfg_.report_every == 0 ? cfg_.window : cfg_.report_every;
  if (samples_ < cfg_.window || (samples_ - cfg_.window) % stride != 0)
    return std::nullopt;

  GsnrReport rep;
  rep.step = step;
  for (int i = 0; i < 3; ++i) {
    rep.gsnr[static_cast<std::size_t>(i)] = raw_[static_cast<std::size_t>(i)].gsnr();
    rep.bsnr[static_cast<std::size_t>(i)] = buffer_[static_cast<std::size_t>(i)].gsnr();
  }
  reports_.push_back(rep);
  return rep;
}

namespace {
constexpr const char* kStreamNames[3] = {"tog", "tcg", "ncg"};
}

void write_gsnr_csv(const std::string& path, std::span<const GsnrReport> reports) {
  std::string out = "step,stream,gsnr,bsnr\n";
  for (const GsnrReport& r : reports) {
    for (std::size_t i = 0; i < 3; ++i) {
      out += std::to_string(r.step);
      out += ',';
      out += kStreamNames[i];
      out += ',';
      out += format_double(r.gsnr[i]);
      out += ',';
      out += format_double(r.bsnr[i]);
      out += '\n';
    }
  }
  write_file(path, out);
}

std::vector<GsnrReport> read_gsnr_csv(const std::string& path) {
  const std::vector<std::string> lines = read_lines(path);
  if (lines.empty() || lines[0] != "step,stream,gsnr,bsnr")
    throw ParseError(path + ":1: missing gsnr header");
  std::vector<GsnrReport> reports;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    if (lines[li].empty()) continue;
    const std::string where = path + ":" + std::to_string(li + 1);
    const auto fields = split_fields(lines[li]);
    if (fields.size() != 4) throw ParseError(where + ": expected 4 fields");
    std::size_t stream = 3;
    for (std::size_t i = 0; i < 3; ++i)
      if (fields[1] == kStreamNames[i]) stream = i;
    if (stream == 3) throw ParseError(where + ": unknown stream name");
    const std::size_t step = parse_size(fields[0], where);
    if (stream == 0 || reports.empty() || reports.back().step != step) {
      reports.emplace_back();
      reports.back().step = step;
    }
    reports.back().gsnr[stream] = parse_double(fields[2], where);
    reports.back().bsnr[stream] = parse_double(fields[3], where);
  }
  return reports;
}

}  // namespace deepkd
