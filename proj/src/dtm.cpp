// SPDX-License-Identifier: Apache-2.0
#include "deepkd/dtm.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace deepkd {

namespace {

std::size_t lerp_round_clamped(std::size_t lo, std::size_t hi, double t) {
  const double v = static_cast<double>(lo) +
                   (static_cast<double>(hi) - static_cast<double>(lo)) * t;
  const long long r = std::llround(v);
  if (r <= static_cast<long long>(lo)) return lo;
  if (r >= static_cast<long long>(hi)) return hi;
  return static_cast<std::size_t>(r);
}

}  // namespace

DtmSchedule DtmSchedule::make(std::size_t num_classes, std::size_t k_init,
                              std::size_t k_opt, std::size_t k_max,
                              std::size_t total_epochs, double easy_end_frac,
                              double hard_start_frac) {
  if (num_classes < 2) throw std::invalid_argument("schedule needs >= 2 classes");
  if (k_init < 1 || k_init > k_opt || k_opt > k_max || k_max > num_classes - 1)
    throw std::invalid_argument("require 1 <= k_init <= k_opt <= k_max <= C-1");
  if (total_epochs < 1) throw std::invalid_argument("total_epochs must be >= 1");
  if (!(easy_end_frac > 0.0) || !(easy_end_frac <= hard_start_frac) ||
      !(hard_start_frac < 1.0))
    throw std::invalid_argument("require 0 < easy_end_frac <= hard_start_frac < 1");
  return DtmSchedule{num_classes, k_init,       k_opt,
                     k_max,       total_epochs, easy_end_frac,
                     hard_start_frac};
}

std::size_t k_for_epoch(const DtmSchedule& s, std::size_t epoch) {
  if (epoch >= s.total_epochs)
    throw std::invalid_argument("epoch out of range for schedule");
  // The last epoch always uses the full k_max, even when the hard phase
  // would round short of it.
  if (epoch + 1 == s.total_epochs) return s.k_max;
  const double total = static_cast<double>(s.total_epochs);
  const double easy_end = s.easy_end_frac * total;
  const double hard_start = s.hard_start_frac * total;
  const double e = static_cast<double>(epoch);

  if (e < easy_end) return lerp_round_clamped(s.k_init, s.k_opt, e / easy_end);
  if (e < hard_start) return s.k_opt;

  // Hard phase ends on the last epoch index, where k must equal k_max.
  const double last = total - 1.0;
  const double denom = last - hard_start;
  if (denom <= 0.0) return s.k_max;
  return lerp_round_clamped(s.k_opt, s.k_max, (e - hard_start) / denom);
}

TopkMask build_mask(std::span<const double> teacher_logits, std::size_t target,
                    std::size_t k, std::size_t epoch) {
  const std::size_t n = teacher_logits.size();
  if (n < 2) throw std::invalid_argument("build_mask: need >= 2 classes");
  if (target >= n) throw std::invalid_argument("build_mask: target out of range");
  if (k < 1 || k > n - 1)
    throw std::invalid_argument("build_mask: require 1 <= k <= C-1");

  std::vector<std::size_t> ids;
  ids.reserve(n - 1);
  for (std::size_t c = 0; c < n; ++c)
    if (c != target) ids.push_back(c);
  // Largest logit first; equal logits keep the lower class id first.
  std::sort(ids.begin(), ids.end(), [&](std::size_t a, std::size_t b) {
    if (teacher_logits[a] != teacher_logits[b])
      return teacher_logits[a] > teacher_logits[b];
    return a < b;
  });
  ids.resize(k);
  std::sort(ids.begin(), ids.end());
  return TopkMask{std::move(ids), k, epoch};
}

}  // namespace deepkd
