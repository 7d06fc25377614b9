#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "scsam/data.hpp"
#include "scsam/metrics.hpp"
#include "scsam/strategies.hpp"

namespace scsam {

// How the generalist is prompted at test time.
//   gt_points            points sampled from the ground truth (oracle prompts)
//   specialist_points    points sampled from the specialist's argmax (SC-SAM inference)
//   learned_box_only     no points, only the learned default box tokens
//   fused_mask           mask prompt from fusing both specialists (SP-SAM inference)
//   cross_decoder_points decoder 1 prompted by decoder 2's unprompted argmax (Dual-SAM inference)
//   specialist_output    the specialist's own prediction, no generalist involved
enum class PromptSource {
  gt_points,
  specialist_points,
  learned_box_only,
  fused_mask,
  cross_decoder_points,
  specialist_output
};

std::string to_string(PromptSource source);
PromptSource prompt_source_from_string(const std::string& name);
PromptSource default_prompt_source(StrategyKind kind);

// (N, C, H, W) images and (N, H, W) masks -> (N, 2, H, W) logits.
using Predictor = std::function<torch::Tensor(const torch::Tensor& images, const torch::Tensor& masks)>;

// Binarizes each prediction at argmax and scores it against its mask.
MetricReport evaluate_predictor(const std::vector<LabeledSample>& dataset, const Predictor& predictor,
                                std::string prompt_source, int batch_size = 8);

// Runs the models in eval mode without gradients. `seed` fixes the point
// sampling used by the point-based prompt sources.
torch::Tensor predict_logits(ModelSet& models, const torch::Tensor& images, const torch::Tensor& masks,
                             PromptSource source, Rng& rng);

MetricReport evaluate_model(ModelSet& models, const std::vector<LabeledSample>& dataset, PromptSource source,
                            std::uint64_t seed = 0, int batch_size = 8);

}  // namespace scsam
