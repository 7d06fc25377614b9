#include "scsam/generalist.hpp"

#include <cmath>
#include <numbers>

#include "scsam/error.hpp"
#include "scsam/specialist.hpp"

namespace F = torch::nn::functional;

namespace scsam {

void GeneralistConfig::validate() const {
  if (in_channels != 1 && in_channels != 3) throw ConfigError("generalist in_channels must be 1 or 3");
  if (patch_size < 1 || image_size % patch_size != 0)
    throw ConfigError("generalist image_size must be a multiple of patch_size");
  if (embed_dim < 16 || embed_dim % 16 != 0) throw ConfigError("generalist embed_dim must be a multiple of 16");
  if (num_heads < 1 || embed_dim % num_heads != 0) throw ConfigError("embed_dim must be divisible by num_heads");
  if (adapter_dim < 1 || adapter_dim >= embed_dim) throw ConfigError("adapter_dim must be in [1, embed_dim)");
  if (encoder_depth < 1 || decoder_depth < 1) throw ConfigError("encoder/decoder depth must be >= 1");
  if (num_decoders != 1 && num_decoders != 2) throw ConfigError("num_decoders must be 1 or 2");
  if (mlp_ratio < 1) throw ConfigError("mlp_ratio must be >= 1");
}

int PromptSet::count(PointLabel label) const {
  int n = 0;
  for (const auto& p : points) n += p.label == label;
  return n;
}

// ---------------------------------------------------------------------------

AttentionImpl::AttentionImpl(int dim, int heads) : heads_(heads) {
  q_proj_ = register_module("q_proj", torch::nn::Linear(dim, dim));
  k_proj_ = register_module("k_proj", torch::nn::Linear(dim, dim));
  v_proj_ = register_module("v_proj", torch::nn::Linear(dim, dim));
  out_proj_ = register_module("out_proj", torch::nn::Linear(dim, dim));
}

torch::Tensor AttentionImpl::forward(const torch::Tensor& q, const torch::Tensor& k, const torch::Tensor& v,
                                     const torch::Tensor& key_valid) {
  const int64_t b = q.size(0), nq = q.size(1), nk = k.size(1), d = q.size(2);
  const int64_t dh = d / heads_;
  auto split = [&](const torch::Tensor& t, int64_t n) { return t.view({b, n, heads_, dh}).transpose(1, 2); };
  auto qh = split(q_proj_->forward(q), nq);
  auto kh = split(k_proj_->forward(k), nk);
  auto vh = split(v_proj_->forward(v), nk);
  auto scores = torch::matmul(qh, kh.transpose(-2, -1)) / std::sqrt(static_cast<double>(dh));
  if (key_valid.defined())
    scores = scores.masked_fill(key_valid.logical_not().view({b, 1, 1, nk}), -std::numeric_limits<float>::infinity());
  auto out = torch::matmul(torch::softmax(scores, -1), vh);
  return out_proj_->forward(out.transpose(1, 2).reshape({b, nq, d}));
}

AdapterImpl::AdapterImpl(int dim, int bottleneck) {
  down_ = register_module("down", torch::nn::Linear(dim, bottleneck));
  up_ = register_module("up", torch::nn::Linear(bottleneck, dim));
}

torch::Tensor AdapterImpl::forward(const torch::Tensor& x) {
  return x + up_->forward(torch::gelu(down_->forward(x)));
}

EncoderBlockImpl::EncoderBlockImpl(int dim, int heads, int mlp_ratio, int adapter_dim) {
  norm1_ = register_module("norm1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
  attn_ = register_module("attn", Attention(dim, heads));
  norm2_ = register_module("norm2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
  mlp_ = register_module("mlp", torch::nn::Sequential(torch::nn::Linear(dim, dim * mlp_ratio), torch::nn::GELU(),
                                                      torch::nn::Linear(dim * mlp_ratio, dim)));
  adapter_attn_ = register_module("adapter_attn", Adapter(dim, adapter_dim));
  adapter_mlp_ = register_module("adapter_mlp", Adapter(dim, adapter_dim));
}

torch::Tensor EncoderBlockImpl::forward(const torch::Tensor& x) {
  auto n = norm1_->forward(x);
  auto h = adapter_attn_->forward(x + attn_->forward(n, n, n));
  return adapter_mlp_->forward(h + mlp_->forward(norm2_->forward(h)));
}

std::vector<torch::Tensor> EncoderBlockImpl::base_parameters() const {
  std::vector<torch::Tensor> out;
  for (const auto* m : std::initializer_list<const torch::nn::Module*>{norm1_.get(), attn_.get(), norm2_.get(), mlp_.get()})
    for (const auto& p : m->parameters()) out.push_back(p);
  return out;
}

std::vector<torch::Tensor> EncoderBlockImpl::adapter_parameters() const {
  auto out = adapter_attn_->parameters();
  for (const auto& p : adapter_mlp_->parameters()) out.push_back(p);
  return out;
}

// ---------------------------------------------------------------------------

PromptEncoderImpl::PromptEncoderImpl(const GeneralistConfig& config) : config_(config) {
  const int d = config.embed_dim;
  gaussian_ = register_buffer("gaussian", torch::zeros({2, d / 2}));
  point_labels_ = register_parameter("point_labels", torch::zeros({2, d}));
  box_corners_ = register_parameter("box_corners", torch::zeros({2, d}));
  default_box_ = register_parameter("default_box", torch::zeros({2, d}));
  no_mask_ = register_parameter("no_mask", torch::zeros({d}));
  mask_downscale_ = register_module(
      "mask_downscale",
      torch::nn::Sequential(torch::nn::Conv2d(torch::nn::Conv2dOptions(1, d / 4, 2).stride(2)),
                            torch::nn::GroupNorm(1, d / 4), torch::nn::GELU(),
                            torch::nn::Conv2d(torch::nn::Conv2dOptions(d / 4, d, 2).stride(2))));
}

torch::Tensor PromptEncoderImpl::encode_coords(const torch::Tensor& xy) {
  auto proj = torch::matmul(2.0 * xy - 1.0, gaussian_) * (2.0 * std::numbers::pi);
  return torch::cat({torch::sin(proj), torch::cos(proj)}, -1);
}

torch::Tensor PromptEncoderImpl::dense_positional_encoding() {
  const int g = config_.grid();
  auto centers = (torch::arange(g, torch::kFloat32) + 0.5) / g;
  auto grid = torch::meshgrid({centers, centers}, "ij");  // (y, x)
  auto xy = torch::stack({grid[1], grid[0]}, -1);         // (g, g, 2) as (x, y)
  return encode_coords(xy).permute({2, 0, 1});
}

PromptEmbedding PromptEncoderImpl::forward(const std::vector<PromptSet>& prompts) {
  const int64_t b = static_cast<int64_t>(prompts.size());
  const int d = config_.embed_dim, g = config_.grid(), size = config_.image_size, ms = config_.mask_prompt_size();
  std::vector<torch::Tensor> per_sample;
  int64_t longest = 0;
  for (const auto& ps : prompts) {
    std::vector<torch::Tensor> tokens;
    if (!ps.points.empty()) {
      std::vector<float> xy;
      std::vector<int64_t> labels;
      for (const auto& p : ps.points) {
        if (p.y < 0 || p.y >= size || p.x < 0 || p.x >= size)
          throw DataError("point prompt (" + std::to_string(p.y) + ", " + std::to_string(p.x) + ") out of bounds");
        xy.push_back((static_cast<float>(p.x) + 0.5f) / static_cast<float>(size));
        xy.push_back((static_cast<float>(p.y) + 0.5f) / static_cast<float>(size));
        labels.push_back(static_cast<int64_t>(p.label));
      }
      auto coords = torch::tensor(xy).view({-1, 2});
      tokens.push_back(encode_coords(coords) + point_labels_.index_select(0, torch::tensor(labels)));
    }
    if (ps.box) {
      const auto& bx = *ps.box;
      if (bx.y0 < 0 || bx.x0 < 0 || bx.y1 >= size || bx.x1 >= size || bx.y0 > bx.y1 || bx.x0 > bx.x1)
        throw DataError("box prompt out of bounds");
      auto corners = torch::tensor({(bx.x0 + 0.5f) / size, (bx.y0 + 0.5f) / size, (bx.x1 + 0.5f) / size,
                                    (bx.y1 + 0.5f) / size})
                         .view({2, 2});
      tokens.push_back(encode_coords(corners) + box_corners_);
    } else if (config_.learnable_box_prompt) {
      tokens.push_back(default_box_);
    }
    auto seq = tokens.empty() ? torch::zeros({0, d}) : torch::cat(tokens, 0);
    longest = std::max(longest, seq.size(0));
    per_sample.push_back(seq);
  }

  PromptEmbedding out;
  std::vector<torch::Tensor> padded, valid, dense;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    const auto& seq = per_sample[i];
    const int64_t n = seq.size(0);
    padded.push_back(n < longest ? torch::cat({seq, torch::zeros({longest - n, d})}, 0) : seq);
    auto v = torch::zeros({longest}, torch::kBool);
    if (n > 0) v.slice(0, 0, n).fill_(true);
    valid.push_back(v);

    const auto& mp = prompts[i].mask_prompt;
    if (mp.defined()) {
      if (mp.dim() != 2 || mp.size(0) != ms || mp.size(1) != ms)
        throw DataError("mask prompt must be " + std::to_string(ms) + "x" + std::to_string(ms));
      dense.push_back(mask_downscale_->forward(mp.view({1, 1, ms, ms})));
    } else {
      dense.push_back(no_mask_.view({1, d, 1, 1}).expand({1, d, g, g}));
    }
  }
  out.sparse = b > 0 ? torch::stack(padded) : torch::zeros({0, longest, d});
  out.valid = b > 0 ? torch::stack(valid) : torch::zeros({0, longest}, torch::kBool);
  out.dense = b > 0 ? torch::cat(dense, 0) : torch::zeros({0, d, g, g});
  return out;
}

// ---------------------------------------------------------------------------

TwoWayBlockImpl::TwoWayBlockImpl(int dim, int heads) {
  self_attn_ = register_module("self_attn", Attention(dim, heads));
  token_to_image_ = register_module("token_to_image", Attention(dim, heads));
  image_to_token_ = register_module("image_to_token", Attention(dim, heads));
  auto ln = [dim] { return torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})); };
  norm1_ = register_module("norm1", ln());
  norm2_ = register_module("norm2", ln());
  norm3_ = register_module("norm3", ln());
  norm4_ = register_module("norm4", ln());
  mlp_ = register_module("mlp", torch::nn::Sequential(torch::nn::Linear(dim, 2 * dim), torch::nn::ReLU(),
                                                      torch::nn::Linear(2 * dim, dim)));
}

std::pair<torch::Tensor, torch::Tensor> TwoWayBlockImpl::forward(const torch::Tensor& tokens,
                                                                 const torch::Tensor& token_pe,
                                                                 const torch::Tensor& valid,
                                                                 const torch::Tensor& image,
                                                                 const torch::Tensor& image_pe) {
  auto q = tokens + token_pe;
  auto t = norm1_->forward(tokens + self_attn_->forward(q, q, tokens, valid));
  q = t + token_pe;
  auto k = image + image_pe;
  t = norm2_->forward(t + token_to_image_->forward(q, k, image));
  t = norm3_->forward(t + mlp_->forward(t));
  q = t + token_pe;
  auto img = norm4_->forward(image + image_to_token_->forward(k, q, t, valid));
  return {t, img};
}

MaskDecoderImpl::MaskDecoderImpl(const GeneralistConfig& config) : config_(config) {
  const int d = config.embed_dim;
  class_tokens_ = register_parameter("class_tokens", torch::zeros({2, d}));
  for (int i = 0; i < config.decoder_depth; ++i)
    blocks_.push_back(register_module("block" + std::to_string(i), TwoWayBlock(d, config.num_heads)));
  final_attn_ = register_module("final_attn", Attention(d, config.num_heads));
  final_norm_ = register_module("final_norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({d})));
  upscale_ = register_module(
      "upscale",
      torch::nn::Sequential(torch::nn::ConvTranspose2d(torch::nn::ConvTranspose2dOptions(d, d / 4, 2).stride(2)),
                            torch::nn::GroupNorm(1, d / 4), torch::nn::GELU(),
                            torch::nn::ConvTranspose2d(torch::nn::ConvTranspose2dOptions(d / 4, d / 8, 2).stride(2)),
                            torch::nn::GELU()));
  for (int c = 0; c < 2; ++c)
    hyper_.push_back(register_module("hyper" + std::to_string(c),
                                     torch::nn::Sequential(torch::nn::Linear(d, d), torch::nn::ReLU(),
                                                           torch::nn::Linear(d, d / 8))));
}

torch::Tensor MaskDecoderImpl::forward(const torch::Tensor& image_embedding, const torch::Tensor& image_pe,
                                       const PromptEmbedding& prompts) {
  const int64_t b = image_embedding.size(0);
  const int64_t d = image_embedding.size(1), g = image_embedding.size(2);
  auto tokens = torch::cat({class_tokens_.unsqueeze(0).expand({b, 2, d}), prompts.sparse}, 1);
  auto valid = torch::cat({torch::ones({b, 2}, torch::kBool), prompts.valid}, 1);
  const auto token_pe = tokens;
  auto image = image_embedding.flatten(2).transpose(1, 2);
  auto pe = image_pe.flatten(1).t().unsqueeze(0).expand({b, g * g, d});
  for (auto& block : blocks_) std::tie(tokens, image) = block->forward(tokens, token_pe, valid, image, pe);
  tokens = final_norm_->forward(tokens + final_attn_->forward(tokens + token_pe, image + pe, image));

  auto up = upscale_->forward(image.transpose(1, 2).reshape({b, d, g, g}));
  const int64_t s = up.size(2);
  auto hyper = torch::stack({hyper_[0]->forward(tokens.select(1, 0)), hyper_[1]->forward(tokens.select(1, 1))}, 1);
  auto low = torch::bmm(hyper, up.flatten(2)).view({b, 2, s, s});
  return F::interpolate(low, F::InterpolateFuncOptions()
                                 .size(std::vector<int64_t>{config_.image_size, config_.image_size})
                                 .mode(torch::kBilinear)
                                 .align_corners(false));
}

// ---------------------------------------------------------------------------

GeneralistImpl::GeneralistImpl(GeneralistConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  const int d = config_.embed_dim, g = config_.grid();
  patch_embed_ = register_module("patch_embed", torch::nn::Conv2d(torch::nn::Conv2dOptions(
                                                    config_.in_channels, d, config_.patch_size).stride(config_.patch_size)));
  pos_embed_ = register_parameter("pos_embed", torch::zeros({1, g * g, d}));
  for (int i = 0; i < config_.encoder_depth; ++i)
    blocks_.push_back(register_module("block" + std::to_string(i),
                                      EncoderBlock(d, config_.num_heads, config_.mlp_ratio, config_.adapter_dim)));
  neck_ = register_module("neck", torch::nn::LayerNorm(torch::nn::LayerNormOptions({d})));
  prompt_encoder_ = register_module("prompt_encoder", PromptEncoder(config_));
  for (int i = 0; i < config_.num_decoders; ++i)
    decoders_.push_back(register_module("decoder" + std::to_string(i + 1), MaskDecoder(config_)));

  initialize_parameters(*this, seed);
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed ^ 0x9e3779b97f4a7c15ULL);
  torch::NoGradGuard no_grad;
  for (auto& item : named_parameters(/*recurse=*/true)) {
    const auto& name = item.key();
    auto& p = item.value();
    if (name == "pos_embed") p.normal_(0.0, 0.02, gen);
    else if (name.ends_with("point_labels") || name.ends_with("box_corners") || name.ends_with("default_box") ||
             name.ends_with("no_mask") || name.ends_with("class_tokens"))
      p.normal_(0.0, 1.0, gen);
    else if (name.find("adapter") != std::string::npos && name.find(".up.") != std::string::npos)
      p.zero_();
  }
  for (auto& item : named_buffers(true))
    if (item.key().ends_with("gaussian")) item.value().normal_(0.0, 1.0, gen);

  set_base_trainable(!config_.freeze_encoder_base);
}

torch::Tensor GeneralistImpl::encode_image(const torch::Tensor& images) {
  if (images.dim() != 4 || images.size(1) != config_.in_channels || images.size(2) != config_.image_size ||
      images.size(3) != config_.image_size)
    throw DataError("generalist expects (N, " + std::to_string(config_.in_channels) + ", " +
                    std::to_string(config_.image_size) + ", " + std::to_string(config_.image_size) + ") input");
  encode_count_ += images.size(0);
  const int64_t b = images.size(0), d = config_.embed_dim, g = config_.grid();
  auto x = patch_embed_->forward(images).flatten(2).transpose(1, 2) + pos_embed_;
  for (auto& block : blocks_) x = block->forward(x);
  return neck_->forward(x).transpose(1, 2).reshape({b, d, g, g});
}

PromptEmbedding GeneralistImpl::encode_prompts(const std::vector<PromptSet>& prompts) {
  return prompt_encoder_->forward(prompts);
}

torch::Tensor GeneralistImpl::decode_mask(const torch::Tensor& image_embedding, const PromptEmbedding& prompts,
                                          int decoder_index) {
  if (decoder_index < 1 || decoder_index > config_.num_decoders)
    throw ConfigError("decoder_index " + std::to_string(decoder_index) + " out of range [1, " +
                      std::to_string(config_.num_decoders) + "]");
  if (prompts.sparse.size(0) != image_embedding.size(0))
    throw DataError("prompt batch does not match image batch");
  return decoders_[static_cast<std::size_t>(decoder_index - 1)]->forward(
      image_embedding + prompts.dense, prompt_encoder_->dense_positional_encoding(), prompts);
}

torch::Tensor GeneralistImpl::predict(const torch::Tensor& images, const std::vector<PromptSet>& prompts,
                                      int decoder_index) {
  return decode_mask(encode_image(images), encode_prompts(prompts), decoder_index);
}

std::vector<torch::Tensor> GeneralistImpl::base_encoder_parameters() const {
  auto out = patch_embed_->parameters();
  if (!config_.trainable_pos_embed) out.push_back(pos_embed_);
  for (const auto& b : blocks_)
    for (const auto& p : b->base_parameters()) out.push_back(p);
  for (const auto& p : neck_->parameters()) out.push_back(p);
  return out;
}

std::vector<torch::Tensor> GeneralistImpl::adapter_parameters() const {
  std::vector<torch::Tensor> out;
  for (const auto& b : blocks_)
    for (const auto& p : b->adapter_parameters()) out.push_back(p);
  return out;
}

std::vector<torch::Tensor> GeneralistImpl::encoder_parameters() const {
  auto out = patch_embed_->parameters();
  out.push_back(pos_embed_);
  for (const auto& b : blocks_)
    for (const auto& p : b->parameters()) out.push_back(p);
  for (const auto& p : neck_->parameters()) out.push_back(p);
  return out;
}

std::vector<torch::Tensor> GeneralistImpl::prompt_encoder_parameters() const { return prompt_encoder_->parameters(); }

std::vector<torch::Tensor> GeneralistImpl::decoder_parameters(int decoder_index) const {
  if (decoder_index < 1 || decoder_index > config_.num_decoders) throw ConfigError("decoder_index out of range");
  return decoders_[static_cast<std::size_t>(decoder_index - 1)]->parameters();
}

std::vector<torch::Tensor> GeneralistImpl::trainable_parameters() const {
  std::vector<torch::Tensor> out;
  for (const auto& p : parameters())
    if (p.requires_grad()) out.push_back(p);
  return out;
}

void GeneralistImpl::set_base_trainable(bool trainable) {
  for (auto& p : base_encoder_parameters()) p.requires_grad_(trainable);
}

// ---------------------------------------------------------------------------

FusionModuleImpl::FusionModuleImpl(int mask_prompt_size, std::uint64_t seed) : size_(mask_prompt_size) {
  net_ = register_module("net", torch::nn::Sequential(
                                    torch::nn::Conv2d(torch::nn::Conv2dOptions(4, 8, 3).padding(1)), torch::nn::GELU(),
                                    torch::nn::Conv2d(torch::nn::Conv2dOptions(8, 8, 3).padding(1)), torch::nn::GELU(),
                                    torch::nn::Conv2d(torch::nn::Conv2dOptions(8, 1, 1))));
  initialize_parameters(*this, seed);
}

torch::Tensor FusionModuleImpl::forward(const torch::Tensor& p1, const torch::Tensor& p2) {
  if (p1.sizes() != p2.sizes()) throw DataError("fusion inputs must have identical shapes");
  if (p1.dim() != 4 || p1.size(1) != 2) throw DataError("fusion inputs must be (N, 2, H, W) logits");
  auto x = torch::cat({torch::softmax(p1, 1), torch::softmax(p2, 1)}, 1);
  return torch::adaptive_avg_pool2d(net_->forward(x), {size_, size_});
}

torch::Tensor fuse_predictions(FusionModuleImpl& fusion, const torch::Tensor& p1, const torch::Tensor& p2) {
  return fusion.forward(p1, p2);
}

}  // namespace scsam
