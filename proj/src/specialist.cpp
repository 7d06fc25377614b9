#include "scsam/specialist.hpp"

#include <cmath>
#include <map>
#include <mutex>

#include "scsam/error.hpp"

namespace scsam {

void SpecialistConfig::validate() const {
  if (depth < 2) throw ConfigError("specialist depth must be >= 2");
  if (base_width < 4) throw ConfigError("specialist base_width must be >= 4");
  if (in_channels != 1 && in_channels != 3) throw ConfigError("specialist in_channels must be 1 or 3");
}

int group_count(int channels) {
  for (int g = std::min(8, channels); g > 1; --g)
    if (channels % g == 0) return g;
  return 1;
}

namespace {

torch::nn::Sequential double_conv(int in, int out) {
  auto conv = [](int i, int o) { return torch::nn::Conv2d(torch::nn::Conv2dOptions(i, o, 3).padding(1).bias(false)); };
  return torch::nn::Sequential(conv(in, out), torch::nn::GroupNorm(group_count(out), out), torch::nn::ReLU(),
                               conv(out, out), torch::nn::GroupNorm(group_count(out), out), torch::nn::ReLU());
}

struct Registry {
  std::mutex mutex;
  std::map<std::string, BackboneFactory> factories;
};

Registry& registry() {
  static Registry r;
  static std::once_flag once;
  std::call_once(once, [] {
    r.factories["unet"] = [](const SpecialistConfig& c) -> SpecialistPtr { return std::make_shared<UNetImpl>(c); };
  });
  return r;
}

}  // namespace

UNetImpl::UNetImpl(SpecialistConfig config) : SpecialistImpl(std::move(config)) {
  config_.validate();
  const int w = config_.base_width;
  for (int level = 0; level <= config_.depth; ++level) {
    const int in = level == 0 ? config_.in_channels : w << (level - 1);
    down_.push_back(register_module("down" + std::to_string(level), double_conv(in, w << level)));
  }
  for (int level = config_.depth; level >= 1; --level) {
    const int in = w << level, out = w << (level - 1);
    up_.push_back(register_module("up" + std::to_string(level),
                                  torch::nn::ConvTranspose2d(torch::nn::ConvTranspose2dOptions(in, out, 2).stride(2))));
    up_conv_.push_back(register_module("upconv" + std::to_string(level), double_conv(2 * out, out)));
  }
  head_ = register_module("head", torch::nn::Conv2d(torch::nn::Conv2dOptions(w, SpecialistConfig::num_classes, 1)));
}

torch::Tensor UNetImpl::forward(const torch::Tensor& images) {
  if (images.dim() != 4) throw DataError("specialist input must be (N, C, H, W)");
  if (images.size(1) != config_.in_channels)
    throw DataError("specialist expects " + std::to_string(config_.in_channels) + " channels, got " +
                    std::to_string(images.size(1)));
  const int64_t h = images.size(2), w = images.size(3);
  const int64_t mult = int64_t{1} << config_.depth;
  const int64_t ph = (mult - h % mult) % mult, pw = (mult - w % mult) % mult;
  auto x = images;
  if (ph != 0 || pw != 0) x = torch::constant_pad_nd(images, {0, pw, 0, ph}, 0.0);

  std::vector<torch::Tensor> skips;
  for (std::size_t level = 0; level < down_.size(); ++level) {
    if (level > 0) x = torch::max_pool2d(x, 2);
    x = down_[level]->forward(x);
    skips.push_back(x);
  }
  for (std::size_t i = 0; i < up_.size(); ++i) {
    x = up_[i]->forward(x);
    x = up_conv_[i]->forward(torch::cat({skips[skips.size() - 2 - i], x}, 1));
  }
  auto logits = head_->forward(x);
  if (ph != 0 || pw != 0) logits = logits.slice(2, 0, h).slice(3, 0, w);
  return logits;
}

void register_backbone(const std::string& name, BackboneFactory factory) {
  auto& r = registry();
  std::lock_guard lock(r.mutex);
  r.factories[name] = std::move(factory);
}

std::vector<std::string> registered_backbones() {
  auto& r = registry();
  std::lock_guard lock(r.mutex);
  std::vector<std::string> names;
  for (const auto& [name, _] : r.factories) names.push_back(name);
  return names;
}

void initialize_parameters(torch::nn::Module& module, std::uint64_t seed) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  torch::NoGradGuard no_grad;
  for (auto& m : module.modules(/*include_self=*/false)) {
    torch::Tensor weight, bias;
    int64_t fan_in = 0;
    if (auto* conv = m->as<torch::nn::Conv2dImpl>()) {
      weight = conv->weight;
      bias = conv->bias;
      fan_in = weight.size(1) * weight.size(2) * weight.size(3);
    } else if (auto* convt = m->as<torch::nn::ConvTranspose2dImpl>()) {
      weight = convt->weight;
      bias = convt->bias;
      fan_in = weight.size(0) * weight.size(2) * weight.size(3);
    } else if (auto* lin = m->as<torch::nn::LinearImpl>()) {
      weight = lin->weight;
      bias = lin->bias;
      fan_in = weight.size(1);
    } else {
      continue;
    }
    weight.normal_(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)), gen);
    if (bias.defined()) bias.zero_();
  }
}

SpecialistPtr build_specialist(const SpecialistConfig& config, std::uint64_t seed) {
  config.validate();
  BackboneFactory factory;
  {
    auto& r = registry();
    std::lock_guard lock(r.mutex);
    auto it = r.factories.find(config.backbone);
    if (it == r.factories.end()) throw ConfigError("unknown specialist backbone '" + config.backbone + "'");
    factory = it->second;
  }
  auto model = factory(config);
  initialize_parameters(*model, seed);
  return model;
}

torch::Tensor specialist_forward(SpecialistImpl& model, const ImageTensor& image) {
  return model.forward(image.data().unsqueeze(0)).squeeze(0);
}

int64_t count_parameters(const torch::nn::Module& module, bool trainable_only) {
  int64_t n = 0;
  for (const auto& p : module.parameters())
    if (!trainable_only || p.requires_grad()) n += p.numel();
  return n;
}

}  // namespace scsam
