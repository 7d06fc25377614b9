#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "scsam/data.hpp"

namespace scsam {

enum class ShapeFamily { blob, ring, polyp_like };

std::string to_string(ShapeFamily family);
ShapeFamily shape_family_from_string(const std::string& name);

// Appearance knobs of the generator. With contrast_jitter == 0 and
// distractors == 0 the noiseless image thresholded at the fg/bg midpoint
// reproduces the mask exactly (texture must stay below half the contrast).
struct SyntheticAppearance {
  int channels = 1;
  double foreground_mean = 0.68;
  double background_mean = 0.32;
  double texture = 0.08;
  // Per-image offset added to every pixel, uniform in [-jitter, jitter].
  double intensity_jitter = 0.0;
  // Per-image multiplicative shrink of the fg/bg gap, uniform in [1 - j, 1].
  double contrast_jitter = 0.0;
  // Foreground-intensity decoys with striped texture that are not in the mask.
  int distractors = 0;
  double distractor_stripe = 0.15;
  double size_min = 0.15;  // radius as a fraction of min(H, W)
  double size_max = 0.30;
};

struct SyntheticSpec {
  int count = 1;
  int height = 64;
  int width = 64;
  ShapeFamily family = ShapeFamily::blob;
  double noise_level = 0.0;
  std::uint64_t seed = 0;
  SyntheticAppearance appearance;
  std::string name_prefix = "synth";
};

// One smooth random foreground shape per image on a textured background plus
// Gaussian noise. Sample i depends only on (seed, i), so prefixes are stable.
std::vector<LabeledSample> generate_synthetic_dataset(const SyntheticSpec& spec);

}  // namespace scsam
