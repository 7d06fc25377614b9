#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "scsam/data.hpp"
#include "scsam/rng.hpp"

namespace scsam {

enum class AugmentStrength { weak, strong };

// Probabilities are per transform; a transform with probability 0 is off.
// Geometric transforms act on image and mask alike; photometric ones and
// dropout touch the image only.
struct AugmentationConfig {
  AugmentStrength strength = AugmentStrength::weak;
  double hflip_prob = 0.5;
  double vflip_prob = 0.5;
  double brightness_contrast_prob = 0.5;
  double brightness_limit = 0.1;
  double contrast_limit = 0.1;
  double shift_scale_rotate_prob = 0.5;
  double shift_limit = 0.0625;
  double scale_limit = 0.1;
  double rotate_limit_deg = 15.0;
  double dropout_prob = 0.3;
  int dropout_holes = 4;
  double dropout_size = 0.08;  // hole side as a fraction of the image side
  double grid_distortion_prob = 0.0;
  int grid_steps = 5;
  double grid_distort_limit = 0.3;
  std::uint64_t seed = 0;

  static AugmentationConfig weak();
  static AugmentationConfig strong();
  static AugmentationConfig disabled();

  // Names of transforms with non-zero probability, in application order.
  std::vector<std::string> transform_list() const;
};

struct AugmentedSample {
  ImageTensor image;
  std::optional<MaskTensor> mask;
};

AugmentedSample augment(const ImageTensor& image, const std::optional<MaskTensor>& mask,
                        const AugmentationConfig& config, Rng& rng);

// Deterministic building blocks, exposed for tests.
torch::Tensor hflip(const torch::Tensor& chw_or_hw);

}  // namespace scsam
