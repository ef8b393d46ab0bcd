// SPDX-License-Identifier: Apache-2.0
#include "deepkd/distill.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace deepkd {

namespace {

// Probabilities are clamped away from zero only inside log() calls; the
// probabilities themselves are never modified.
inline double safe_log(double x) { return std::log(x < 1e-300 ? 1e-300 : x); }

void check_pair(std::span<const double> teacher, std::span<const double> student,
                std::size_t target, double tau) {
  if (teacher.size() != student.size())
    throw std::invalid_argument("logit vectors differ in length");
  if (student.size() < 2) throw std::invalid_argument("need at least 2 classes");
  if (target >= student.size()) throw std::invalid_argument("target out of range");
  if (!(tau > 0.0) || !std::isfinite(tau))
    throw std::invalid_argument("temperature must be finite and positive");
}

Vec64 tempered_softmax(std::span<const double> z, double tau) {
  if (tau == 1.0) return softmax(z);
  Vec64 scaled(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) scaled[i] = z[i] / tau;
  return softmax(scaled);
}

// Validated ascending list of selected non-target class ids. nullopt means
// the full non-target set.
std::vector<std::size_t> resolve_selection(ClassSelection selection,
                                           std::size_t num_classes,
                                           std::size_t target) {
  std::vector<std::size_t> ids;
  if (!selection.has_value()) {
    ids.reserve(num_classes - 1);
    for (std::size_t c = 0; c < num_classes; ++c)
      if (c != target) ids.push_back(c);
    return ids;
  }
  ids.assign(selection->begin(), selection->end());
  if (ids.empty()) throw std::invalid_argument("class selection must be nonempty");
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
    throw std::invalid_argument("class selection contains duplicates");
  for (std::size_t c : ids) {
    if (c >= num_classes) throw std::invalid_argument("selected class out of range");
    if (c == target) throw std::invalid_argument("class selection contains the target");
  }
  return ids;
}

}  // namespace

ProbVector ProbVector::from_logits(std::span<const double> logits, double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau))
    throw std::invalid_argument("temperature must be finite and positive");
  return ProbVector{tempered_softmax(logits, tau)};
}

LossGrad ce_loss_and_grad(std::span<const double> student_logits, std::size_t target) {
  if (student_logits.empty()) throw std::invalid_argument("empty logit vector");
  if (target >= student_logits.size())
    throw std::invalid_argument("target out of range");
  LossGrad out;
  out.loss = log_sum_exp(student_logits) - student_logits[target];
  out.grad = softmax(student_logits);
  out.grad[target] -= 1.0;
  return out;
}

BinaryProb binary_probs(const ProbVector& p, std::size_t target) {
  if (target >= p.p.size()) throw std::invalid_argument("target out of range");
  BinaryProb b;
  b.target_mass = p.p[target];
  b.rest_mass = 1.0 - b.target_mass;
  return b;
}

NonTargetDist nontarget_dist(const ProbVector& p, std::size_t target) {
  const std::size_t n = p.p.size();
  if (n < 2) throw std::invalid_argument("need at least 2 classes");
  if (target >= n) throw std::invalid_argument("target out of range");
  NonTargetDist d;
  d.target = target;
  d.phat.reserve(n - 1);
  d.class_ids.reserve(n - 1);
  double mass = 0.0;
  for (std::size_t c = 0; c < n; ++c) {
    if (c == target) continue;
    d.class_ids.push_back(c);
    d.phat.push_back(p.p[c]);
    mass += p.p[c];
  }
  for (double& v : d.phat) v /= mass;
  return d;
}

LossGrad tckd_loss_and_grad(std::span<const double> teacher_logits,
                            std::span<const double> student_logits,
                            std::size_t target, double tau) {
  check_pair(teacher_logits, student_logits, target, tau);
  const Vec64 pt = tempered_softmax(teacher_logits, tau);
  const Vec64 ps = tempered_softmax(student_logits, tau);
  const double pt_t = pt[target];
  const double ps_t = ps[target];

  LossGrad out;
  out.loss = pt_t * (safe_log(pt_t) - safe_log(ps_t)) +
             (1.0 - pt_t) * (safe_log(1.0 - pt_t) - safe_log(1.0 - ps_t));

  // d/dz_t = (ps_t - pt_t)/tau; the non-target entries share the opposite
  // mass in proportion to the student's renormalized non-target weights.
  const double diff = (ps_t - pt_t) / tau;
  double rest = 0.0;
  for (std::size_t c = 0; c < ps.size(); ++c)
    if (c != target) rest += ps[c];
  out.grad.assign(ps.size(), 0.0);
  out.grad[target] = diff;
  for (std::size_t c = 0; c < ps.size(); ++c)
    if (c != target) out.grad[c] = -(ps[c] / rest) * diff;
  return out;
}

LossGrad nckd_loss_and_grad(std::span<const double> teacher_logits,
                            std::span<const double> student_logits,
                            std::size_t target, double tau,
                            ClassSelection selection) {
  check_pair(teacher_logits, student_logits, target, tau);
  const std::vector<std::size_t> ids =
      resolve_selection(selection, student_logits.size(), target);
  const Vec64 pt = tempered_softmax(teacher_logits, tau);
  const Vec64 ps = tempered_softmax(student_logits, tau);

  double sum_t = 0.0, sum_s = 0.0;
  for (std::size_t c : ids) {
    sum_t += pt[c];
    sum_s += ps[c];
  }

  LossGrad out;
  out.grad.assign(student_logits.size(), 0.0);
  for (std::size_t c : ids) {
    const double qt = pt[c] / sum_t;
    const double qs = ps[c] / sum_s;
    out.loss += qt * (safe_log(qt) - safe_log(qs));
    out.grad[c] = (qs - qt) / tau;
  }
  return out;
}

double kd_decomposition_residual(std::span<const double> teacher_logits,
                                 std::span<const double> student_logits,
                                 std::size_t target, double tau) {
  check_pair(teacher_logits, student_logits, target, tau);
  const Vec64 pt = tempered_softmax(teacher_logits, tau);
  const Vec64 ps = tempered_softmax(student_logits, tau);
  double kl_full = 0.0;
  for (std::size_t c = 0; c < pt.size(); ++c)
    kl_full += pt[c] * (safe_log(pt[c]) - safe_log(ps[c]));

  const BinaryProb bt = binary_probs(ProbVector{pt}, target);
  const double tckd = tckd_loss_and_grad(teacher_logits, student_logits, target, tau).loss;
  const double nckd = nckd_loss_and_grad(teacher_logits, student_logits, target, tau).loss;
  return std::abs(kl_full - (tckd + bt.rest_mass * nckd));
}

LogitGradTriple logit_grad_triple(std::span<const double> teacher_logits,
                                  std::span<const double> student_logits,
                                  std::size_t target, double tau,
                                  ClassSelection selection) {
  LogitGradTriple g;
  g.tau = tau;
  g.tog = ce_loss_and_grad(student_logits, target).grad;
  g.tcg = tckd_loss_and_grad(teacher_logits, student_logits, target, tau).grad;
  g.ncg = nckd_loss_and_grad(teacher_logits, student_logits, target, tau, selection).grad;
  return g;
}

LossBreakdown deepkd_loss(std::span<const double> teacher_logits,
                          std::span<const double> student_logits,
                          std::size_t target, double tau, double alpha,
                          double beta1, double beta2,
                          ClassSelection selection, KdWeighting weighting) {
  if (!std::isfinite(alpha) || !std::isfinite(beta1) || !std::isfinite(beta2))
    throw std::invalid_argument("loss weights must be finite");
  LossBreakdown out;
  out.alpha = alpha;
  out.beta1 = beta1;
  out.beta2 = beta2;
  out.tau = tau;
  out.ce = ce_loss_and_grad(student_logits, target).loss;
  out.tckd = tckd_loss_and_grad(teacher_logits, student_logits, target, tau).loss;
  out.nckd = nckd_loss_and_grad(teacher_logits, student_logits, target, tau, selection).loss;
  if (weighting == KdWeighting::kVanilla) {
    const ProbVector pt = ProbVector::from_logits(teacher_logits, tau);
    out.nckd *= binary_probs(pt, target).rest_mass;
  }
  out.total = alpha * out.ce + tau * tau * (beta1 * out.tckd + beta2 * out.nckd);
  return out;
}

}  // namespace deepkd
