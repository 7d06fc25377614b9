#pragma once

#include <vector>

#include <torch/torch.h>

#include "scsam/generalist.hpp"
#include "scsam/rng.hpp"

namespace scsam {

inline constexpr int kDefaultForegroundPoints = 5;
inline constexpr int kDefaultBackgroundPoints = 5;

// Draws up to n_fg foreground and n_bg background pixels uniformly without
// replacement from a binary (H, W) mask. A class with fewer pixels than
// requested contributes all of them. Foreground points come first.
PromptSet sample_points(const torch::Tensor& mask, int n_fg, int n_bg, Rng& rng);

inline PromptSet sample_points(const torch::Tensor& mask, Rng& rng) {
  return sample_points(mask, kDefaultForegroundPoints, kDefaultBackgroundPoints, rng);
}

// One PromptSet per image of an (N, H, W) label tensor, drawn in index order.
std::vector<PromptSet> sample_points_batch(const torch::Tensor& masks, int n_fg, int n_bg, Rng& rng);

// `count` empty prompt sets (learned default box only, when enabled).
std::vector<PromptSet> empty_prompts(int64_t count);

}  // namespace scsam
