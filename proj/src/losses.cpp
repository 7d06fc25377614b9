#include "scsam/losses.hpp"

#include <cmath>

#include "scsam/error.hpp"

namespace scsam {

namespace {

void check_pair(const torch::Tensor& logits, const torch::Tensor& target) {
  if (logits.dim() != 4 || logits.size(1) != 2) throw DataError("logits must have shape (N, 2, H, W)");
  if (target.dim() != 3 || target.size(0) != logits.size(0) || target.size(1) != logits.size(2) ||
      target.size(2) != logits.size(3))
    throw DataError("target shape does not match logits");
}

}  // namespace

SegLossTerms seg_loss_terms(const torch::Tensor& logits, const torch::Tensor& target) {
  check_pair(logits, target);
  auto labels = target.detach().to(torch::kInt64);
  auto log_probs = torch::log_softmax(logits, 1);
  auto ce = -log_probs.gather(1, labels.unsqueeze(1)).mean();

  auto fg = log_probs.select(1, 1).exp();
  auto t = labels.to(logits.scalar_type());
  auto inter = (fg * t).sum({1, 2});
  auto denom = fg.sum({1, 2}) + t.sum({1, 2});
  auto dice = (1.0 - (2.0 * inter + kDiceEpsilon) / (denom + kDiceEpsilon)).mean();
  return {dice, ce, 0.5 * (dice + ce)};
}

torch::Tensor seg_loss(const torch::Tensor& logits, const torch::Tensor& target) {
  return seg_loss_terms(logits, target).total;
}

torch::Tensor kd_loss(const torch::Tensor& student_logits, const torch::Tensor& teacher_logits, KdTarget target) {
  if (student_logits.sizes() != teacher_logits.sizes()) throw DataError("kd_loss inputs must have identical shapes");
  if (student_logits.dim() != 4 || student_logits.size(1) != 2) throw DataError("kd_loss expects (N, 2, H, W) logits");
  auto log_p = torch::log_softmax(student_logits, 1);
  if (target == KdTarget::hard) {
    auto labels = pseudo_label(teacher_logits);
    return -log_p.gather(1, labels.unsqueeze(1)).mean();
  }
  auto log_q = torch::log_softmax(teacher_logits.detach(), 1);
  return (log_q.exp() * (log_q - log_p)).sum(1).mean();
}

torch::Tensor pseudo_label(const torch::Tensor& logits) {
  torch::NoGradGuard no_grad;
  const int64_t class_dim = logits.dim() == 4 ? 1 : 0;
  if ((logits.dim() != 4 && logits.dim() != 3) || logits.size(class_dim) != 2)
    throw DataError("pseudo_label expects (N, 2, H, W) or (2, H, W) logits");
  auto d = logits.detach();
  return (d.select(class_dim, 1) > d.select(class_dim, 0)).to(torch::kInt64);
}

double RampUpSchedule::weight(int64_t t) const {
  if (t_max < 1) throw ConfigError("t_max must be >= 1");
  if (t < 0) throw ConfigError("ramp-up step must be non-negative");
  if (t > t_max) return 1.0;
  const double phase = 1.0 - static_cast<double>(t) / static_cast<double>(t_max);
  return std::exp(-exponent_scale * phase * phase);
}

double ramp_weight(const RampUpSchedule& schedule, int64_t t) { return schedule.weight(t); }

}  // namespace scsam
