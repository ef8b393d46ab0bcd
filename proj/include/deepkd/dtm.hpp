// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace deepkd {

// Curriculum schedule for the number of non-target classes kept in the
// non-target KL. Three phases over total_epochs:
//   easy       epoch <  easy_end_frac * total   : k ramps k_init -> k_opt
//   transition                                   : k stays at k_opt
//   hard       epoch >= hard_start_frac * total : k ramps k_opt -> k_max,
//                                                 hitting k_max at the final
//                                                 epoch.
// Ramps are linear with nearest-integer rounding; k is non-decreasing in
// epoch. Requires 1 <= k_init <= k_opt <= k_max <= num_classes - 1 and
// 0 < easy_end_frac <= hard_start_frac < 1.
struct DtmSchedule {
  std::size_t num_classes = 0;
  std::size_t k_init = 1;
  std::size_t k_opt = 1;
  std::size_t k_max = 1;
  std::size_t total_epochs = 1;
  double easy_end_frac = 0.3;
  double hard_start_frac = 0.7;

  static DtmSchedule make(std::size_t num_classes, std::size_t k_init,
                          std::size_t k_opt, std::size_t k_max,
                          std::size_t total_epochs, double easy_end_frac = 0.3,
                          double hard_start_frac = 0.7);
};

std::size_t k_for_epoch(const DtmSchedule& s, std::size_t epoch);

// The k non-target classes with the largest teacher logits, ties broken
// toward the lower class id. selected is sorted ascending, never contains
// the target, and has exactly k entries.
struct TopkMask {
  std::vector<std::size_t> selected;
  std::size_t k = 0;
  std::size_t epoch = 0;
};

TopkMask build_mask(std::span<const double> teacher_logits, std::size_t target,
                    std::size_t k, std::size_t epoch = 0);

}  // namespace deepkd
