#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <vector>

#include <torch/torch.h>

namespace scsam {

struct GeneralistConfig {
  int in_channels = 1;
  int image_size = 128;
  int patch_size = 16;
  int embed_dim = 128;
  int encoder_depth = 4;
  int num_heads = 4;
  int mlp_ratio = 2;
  int adapter_dim = 8;
  int decoder_depth = 2;
  bool freeze_encoder_base = true;
  bool trainable_pos_embed = false;
  int num_decoders = 1;
  bool learnable_box_prompt = true;

  int grid() const { return image_size / patch_size; }
  int mask_prompt_size() const { return 4 * grid(); }
  void validate() const;
};

enum class PointLabel : int { background = 0, foreground = 1 };

struct PointPrompt {
  int y = 0;
  int x = 0;
  PointLabel label = PointLabel::foreground;
};

struct BoxPrompt {
  int y0 = 0, x0 = 0, y1 = 0, x1 = 0;
};

/// Prompts for one image. An entirely empty set is a legal "unprompted" call.
struct PromptSet {
  std::vector<PointPrompt> points;
  std::optional<BoxPrompt> box;
  torch::Tensor mask_prompt;  // undefined, or (S, S) with S = mask_prompt_size()

  int count(PointLabel label) const;
};

struct PromptEmbedding {
  torch::Tensor sparse;  // (B, T, D) prompt tokens, padded to the longest set
  torch::Tensor valid;   // (B, T) bool, false on padding
  torch::Tensor dense;   // (B, D, g, g) added to the image embedding
};

class AttentionImpl : public torch::nn::Module {
 public:
  AttentionImpl(int dim, int heads);
  // key_valid: optional (B, Nk) bool; invalid keys receive zero weight.
  torch::Tensor forward(const torch::Tensor& q, const torch::Tensor& k, const torch::Tensor& v,
                        const torch::Tensor& key_valid = {});

 private:
  int heads_;
  torch::nn::Linear q_proj_{nullptr}, k_proj_{nullptr}, v_proj_{nullptr}, out_proj_{nullptr};
};
TORCH_MODULE(Attention);

/// Bottleneck adapter with residual: x + up(gelu(down(x))). `up` starts at
/// zero so a fresh adapter is the identity.
class AdapterImpl : public torch::nn::Module {
 public:
  AdapterImpl(int dim, int bottleneck);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Linear down_{nullptr}, up_{nullptr};
};
TORCH_MODULE(Adapter);

class EncoderBlockImpl : public torch::nn::Module {
 public:
  EncoderBlockImpl(int dim, int heads, int mlp_ratio, int adapter_dim);
  torch::Tensor forward(const torch::Tensor& x);

  std::vector<torch::Tensor> base_parameters() const;
  std::vector<torch::Tensor> adapter_parameters() const;

 private:
  torch::nn::LayerNorm norm1_{nullptr}, norm2_{nullptr};
  Attention attn_{nullptr};
  torch::nn::Sequential mlp_{nullptr};
  Adapter adapter_attn_{nullptr}, adapter_mlp_{nullptr};
};
TORCH_MODULE(EncoderBlock);

class PromptEncoderImpl : public torch::nn::Module {
 public:
  explicit PromptEncoderImpl(const GeneralistConfig& config);
  PromptEmbedding forward(const std::vector<PromptSet>& prompts);
  // Positional encoding of the image token grid, (D, g, g).
  torch::Tensor dense_positional_encoding();
  // Random-Fourier encoding of normalized (x, y) coordinates: (..., 2) -> (..., D).
  torch::Tensor encode_coords(const torch::Tensor& xy);

 private:
  GeneralistConfig config_;
  torch::Tensor gaussian_;       // (2, D/2) buffer
  torch::Tensor point_labels_;   // (2, D): background, foreground
  torch::Tensor box_corners_;    // (2, D)
  torch::Tensor default_box_;    // (2, D) learned box used when none is given
  torch::Tensor no_mask_;        // (D)
  torch::nn::Sequential mask_downscale_{nullptr};
};
TORCH_MODULE(PromptEncoder);

class TwoWayBlockImpl : public torch::nn::Module {
 public:
  TwoWayBlockImpl(int dim, int heads);
  // Updates (tokens, image) in place of the returned pair.
  std::pair<torch::Tensor, torch::Tensor> forward(const torch::Tensor& tokens, const torch::Tensor& token_pe,
                                                  const torch::Tensor& valid, const torch::Tensor& image,
                                                  const torch::Tensor& image_pe);

 private:
  Attention self_attn_{nullptr}, token_to_image_{nullptr}, image_to_token_{nullptr};
  torch::nn::LayerNorm norm1_{nullptr}, norm2_{nullptr}, norm3_{nullptr}, norm4_{nullptr};
  torch::nn::Sequential mlp_{nullptr};
};
TORCH_MODULE(TwoWayBlock);

class MaskDecoderImpl : public torch::nn::Module {
 public:
  explicit MaskDecoderImpl(const GeneralistConfig& config);
  torch::Tensor forward(const torch::Tensor& image_embedding, const torch::Tensor& image_pe,
                        const PromptEmbedding& prompts);

 private:
  GeneralistConfig config_;
  torch::Tensor class_tokens_;  // (2, D): background, foreground
  std::vector<TwoWayBlock> blocks_;
  Attention final_attn_{nullptr};
  torch::nn::LayerNorm final_norm_{nullptr};
  torch::nn::Sequential upscale_{nullptr};
  std::vector<torch::nn::Sequential> hyper_;
};
TORCH_MODULE(MaskDecoder);

/// Promptable segmenter with the image-encoder / prompt-encoder / mask-decoder
/// split. With freeze_encoder_base only adapters (and, if configured, the
/// positional embedding) train inside the encoder.
class GeneralistImpl : public torch::nn::Module {
 public:
  GeneralistImpl(GeneralistConfig config, std::uint64_t seed);

  torch::Tensor encode_image(const torch::Tensor& images);
  PromptEmbedding encode_prompts(const std::vector<PromptSet>& prompts);
  torch::Tensor decode_mask(const torch::Tensor& image_embedding, const PromptEmbedding& prompts,
                            int decoder_index = 1);
  torch::Tensor predict(const torch::Tensor& images, const std::vector<PromptSet>& prompts,
                        int decoder_index = 1);

  const GeneralistConfig& config() const { return config_; }

  std::vector<torch::Tensor> base_encoder_parameters() const;
  std::vector<torch::Tensor> adapter_parameters() const;
  std::vector<torch::Tensor> prompt_encoder_parameters() const;
  std::vector<torch::Tensor> decoder_parameters(int decoder_index) const;
  std::vector<torch::Tensor> encoder_parameters() const;
  std::vector<torch::Tensor> trainable_parameters() const;

  // Toggles training of the base encoder (warm-start) vs. PEFT freezing.
  void set_base_trainable(bool trainable);

  // Number of images passed through encode_image since construction/reset.
  int64_t encode_count() const { return encode_count_.load(); }
  void reset_encode_count() { encode_count_ = 0; }

 private:
  GeneralistConfig config_;
  torch::nn::Conv2d patch_embed_{nullptr};
  torch::Tensor pos_embed_;
  std::vector<EncoderBlock> blocks_;
  torch::nn::LayerNorm neck_{nullptr};
  PromptEncoder prompt_encoder_{nullptr};
  std::vector<MaskDecoder> decoders_;
  std::atomic<int64_t> encode_count_{0};
};
TORCH_MODULE(Generalist);

/// Learnable fusion of two specialist predictions into one mask prompt of
/// shape (N, 1, S, S).
class FusionModuleImpl : public torch::nn::Module {
 public:
  explicit FusionModuleImpl(int mask_prompt_size, std::uint64_t seed = 0);
  torch::Tensor forward(const torch::Tensor& p1, const torch::Tensor& p2);
  int mask_prompt_size() const { return size_; }

 private:
  int size_;
  torch::nn::Sequential net_{nullptr};
};
TORCH_MODULE(FusionModule);

torch::Tensor fuse_predictions(FusionModuleImpl& fusion, const torch::Tensor& p1, const torch::Tensor& p2);

}  // namespace scsam
