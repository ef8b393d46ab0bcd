// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <utility>

#include "deepkd/numkit.hpp"

namespace deepkd {

// Categorical distribution over classes (entries positive, sum 1).
struct ProbVector {
  Vec64 p;

  std::size_t num_classes() const { return p.size(); }
  // softmax(z / tau); tau = 1 gives the plain distribution.
  static ProbVector from_logits(std::span<const double> logits, double tau = 1.0);
};

// Two-bucket view of a distribution: mass on the target class vs the rest.
// rest_mass is computed as 1 - target_mass in one float subtraction.
struct BinaryProb {
  double target_mass = 0.0;
  double rest_mass = 0.0;
};

// Distribution over the non-target classes, renormalized to sum 1.
// class_ids[i] is the original class index of entry phat[i].
struct NonTargetDist {
  Vec64 phat;
  std::vector<std::size_t> class_ids;
  std::size_t target = 0;
};

// The three decoupled gradient streams with respect to the raw student
// logits: task stream (cross-entropy), target-class stream (binary KL) and
// non-target-class stream (renormalized KL). Each sums to zero within 1e-10;
// the non-target stream is exactly zero at the target entry. Streams are
// unweighted; loss weights are applied by the caller.
struct LogitGradTriple {
  Vec64 tog;  // task-oriented: untempered softmax minus one-hot
  Vec64 tcg;  // target-class: binary KL pulled back through the softmax
  Vec64 ncg;  // non-target-class: renormalized KL, zero at the target
  double tau = 1.0;
};

// Component losses plus the weights that combined them.
// total == alpha*ce + tau^2*(beta1*tckd + beta2*nckd) within 1e-12, where the
// stored nckd already includes any per-sample rescaling of that stream.
struct LossBreakdown {
  double ce = 0.0;
  double tckd = 0.0;
  double nckd = 0.0;
  double total = 0.0;
  double alpha = 1.0;
  double beta1 = 1.0;
  double beta2 = 1.0;
  double tau = 1.0;
};

struct LossGrad {
  double loss = 0.0;
  Vec64 grad;  // with respect to the raw student logits
};

// How the non-target stream is weighted when losses are combined:
//   kDkd     - independent beta2 weight on the non-target KL;
//   kVanilla - beta2 additionally scaled by the teacher's non-target mass,
//              which reproduces the single-KL objective exactly when no
//              class masking is active.
enum class KdWeighting { kDkd, kVanilla };

// Optional subset of non-target class ids to keep in the non-target KL.
// Empty selections and selections containing the target are rejected.
using ClassSelection = std::optional<std::span<const std::size_t>>;

// Cross-entropy of the untempered student distribution against the label.
// grad = softmax(student_logits) - onehot(target).
LossGrad ce_loss_and_grad(std::span<const double> student_logits, std::size_t target);

BinaryProb binary_probs(const ProbVector& p, std::size_t target);

// Renormalizes the non-target entries by their summed mass. Equals the
// softmax of the non-target logit subvector up to rounding.
NonTargetDist nontarget_dist(const ProbVector& p, std::size_t target);

// Binary KL between teacher and student target/rest splits at temperature
// tau. The gradient carries the 1/tau chain factor for raw student logits;
// the tau^2 loss weight is applied by the caller.
LossGrad tckd_loss_and_grad(std::span<const double> teacher_logits,
                            std::span<const double> student_logits,
                            std::size_t target, double tau);

// KL between teacher and student non-target distributions at temperature
// tau, optionally restricted to a selected subset of classes (both sides
// renormalized over the selection). Gradient entries outside the selection
// and at the target are exactly zero.
LossGrad nckd_loss_and_grad(std::span<const double> teacher_logits,
                            std::span<const double> student_logits,
                            std::size_t target, double tau,
                            ClassSelection selection = std::nullopt);

// |KL(pT || pS) - (binary KL + teacher rest mass * non-target KL)| on the
// tempered distributions. Zero in exact arithmetic.
double kd_decomposition_residual(std::span<const double> teacher_logits,
                                 std::span<const double> student_logits,
                                 std::size_t target, double tau);

// The three unweighted gradient streams for one sample.
LogitGradTriple logit_grad_triple(std::span<const double> teacher_logits,
                                  std::span<const double> student_logits,
                                  std::size_t target, double tau,
                                  ClassSelection selection = std::nullopt);

// Full combined loss: alpha*ce + tau^2*(beta1*tckd + beta2*nckd), with the
// non-target term weighted per `weighting` and masked per `selection`.
LossBreakdown deepkd_loss(std::span<const double> teacher_logits,
                          std::span<const double> student_logits,
                          std::size_t target, double tau, double alpha,
                          double beta1, double beta2,
                          ClassSelection selection = std::nullopt,
                          KdWeighting weighting = KdWeighting::kDkd);

}  // namespace deepkd
