#pragma once

#include <cstdint>

#include <torch/torch.h>

namespace scsam {

inline constexpr double kDiceEpsilon = 1e-5;

struct SegLossTerms {
  torch::Tensor dice;
  torch::Tensor cross_entropy;
  torch::Tensor total;  // 0.5 * (dice + cross_entropy)
};

// logits: (N, 2, H, W); target: (N, H, W) integer labels in {0, 1}.
// Dice uses the soft foreground probability and is averaged over images;
// cross-entropy is averaged over all pixels. Gradients flow to logits only.
SegLossTerms seg_loss_terms(const torch::Tensor& logits, const torch::Tensor& target);
torch::Tensor seg_loss(const torch::Tensor& logits, const torch::Tensor& target);

enum class KdTarget { soft, hard };

// Mean over pixels of KL(softmax(teacher) || softmax(student)). The teacher is
// detached. With KdTarget::hard the teacher distribution is the one-hot argmax.
torch::Tensor kd_loss(const torch::Tensor& student_logits, const torch::Tensor& teacher_logits,
                      KdTarget target = KdTarget::soft);

// Per-pixel argmax over the class axis of (N, 2, H, W) or (2, H, W) logits.
// Exact ties go to background. The result never carries gradient.
torch::Tensor pseudo_label(const torch::Tensor& logits);

/// Ramp-up weight w(t) = exp(-k (1 - t / t_max)^2) for t <= t_max, 1 after.
/// k = exponent_scale, 1 by default.
struct RampUpSchedule {
  int64_t t_max = 600;
  double exponent_scale = 1.0;

  double weight(int64_t t) const;
};

double ramp_weight(const RampUpSchedule& schedule, int64_t t);

}  // namespace scsam
