#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "scsam/data.hpp"

namespace scsam {

struct SpecialistConfig {
  std::string backbone = "unet";
  int in_channels = 1;
  int base_width = 16;
  int depth = 4;
  static constexpr int num_classes = 2;

  void validate() const;
};

/// A from-scratch segmentation network mapping (N, C, H, W) images to
/// (N, 2, H, W) background/foreground logits.
class SpecialistImpl : public torch::nn::Module {
 public:
  explicit SpecialistImpl(SpecialistConfig config) : config_(std::move(config)) {}
  virtual torch::Tensor forward(const torch::Tensor& images) = 0;
  const SpecialistConfig& config() const { return config_; }

 protected:
  SpecialistConfig config_;
};

using SpecialistPtr = std::shared_ptr<SpecialistImpl>;
using BackboneFactory = std::function<SpecialistPtr(const SpecialistConfig&)>;

// Backbones are looked up by SpecialistConfig::backbone. "unet" is built in.
void register_backbone(const std::string& name, BackboneFactory factory);
std::vector<std::string> registered_backbones();

// Builds the configured backbone and initializes it from `seed` without
// touching libtorch's global generator.
SpecialistPtr build_specialist(const SpecialistConfig& config, std::uint64_t seed);

/// Single-image convenience wrapper: (C, H, W) -> (2, H, W) logits.
torch::Tensor specialist_forward(SpecialistImpl& model, const ImageTensor& image);

int64_t count_parameters(const torch::nn::Module& module, bool trainable_only = false);

// Re-initializes conv/linear weights (Kaiming normal, fan-in) and zeroes
// biases, drawing from a private generator seeded with `seed`.
void initialize_parameters(torch::nn::Module& module, std::uint64_t seed);

/// U-Net: `depth` down/up levels of double 3x3 conv + GroupNorm + ReLU, with
/// transposed-conv upsampling and skip concatenation. Inputs whose sides are
/// not multiples of 2^depth are zero-padded and cropped back.
class UNetImpl : public SpecialistImpl {
 public:
  explicit UNetImpl(SpecialistConfig config);
  torch::Tensor forward(const torch::Tensor& images) override;

 private:
  std::vector<torch::nn::Sequential> down_;
  std::vector<torch::nn::ConvTranspose2d> up_;
  std::vector<torch::nn::Sequential> up_conv_;
  torch::nn::Conv2d head_{nullptr};
};

// GroupNorm group count used by the U-Net: largest divisor of `channels` <= 8.
int group_count(int channels);

}  // namespace scsam
