#include "scsam/evaluation.hpp"

#include "scsam/error.hpp"
#include "scsam/prompts.hpp"

namespace scsam {

std::string to_string(PromptSource source) {
  switch (source) {
    case PromptSource::gt_points: return "gt_points";
    case PromptSource::specialist_points: return "specialist_points";
    case PromptSource::learned_box_only: return "learned_box_only";
    case PromptSource::fused_mask: return "fused_mask";
    case PromptSource::cross_decoder_points: return "cross_decoder_points";
    case PromptSource::specialist_output: return "specialist_output";
  }
  return "learned_box_only";
}

PromptSource prompt_source_from_string(const std::string& name) {
  for (auto s : {PromptSource::gt_points, PromptSource::specialist_points, PromptSource::learned_box_only,
                 PromptSource::fused_mask, PromptSource::cross_decoder_points, PromptSource::specialist_output})
    if (to_string(s) == name) return s;
  throw ConfigError("unknown prompt source '" + name + "'");
}

PromptSource default_prompt_source(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::peft_sam: return PromptSource::learned_box_only;
    case StrategyKind::dual_sam: return PromptSource::cross_decoder_points;
    case StrategyKind::sp_sam: return PromptSource::fused_mask;
    case StrategyKind::sc_sam: return PromptSource::specialist_points;
  }
  return PromptSource::learned_box_only;
}

MetricReport evaluate_predictor(const std::vector<LabeledSample>& dataset, const Predictor& predictor,
                                std::string prompt_source, int batch_size) {
  if (dataset.empty()) throw DataError("cannot evaluate on an empty dataset");
  if (batch_size < 1) throw ConfigError("evaluation batch size must be >= 1");
  MetricReport report;
  report.prompt_source = std::move(prompt_source);
  for (std::size_t start = 0; start < dataset.size(); start += static_cast<std::size_t>(batch_size)) {
    const auto end = std::min(dataset.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<torch::Tensor> images, masks;
    for (auto i = start; i < end; ++i) {
      images.push_back(dataset[i].image.data());
      masks.push_back(dataset[i].mask.data().to(torch::kInt64));
    }
    auto labels = pseudo_label(predictor(torch::stack(images), torch::stack(masks)));
    for (auto i = start; i < end; ++i) {
      MaskTensor pred(labels[static_cast<int64_t>(i - start)]);
      report.per_image.push_back(compute_image_metrics(pred, dataset[i].mask, i, dataset[i].name));
    }
  }
  report.aggregate_from_images();
  return report;
}

torch::Tensor predict_logits(ModelSet& models, const torch::Tensor& images, const torch::Tensor& masks,
                             PromptSource source, Rng& rng) {
  torch::NoGradGuard no_grad;
  auto need = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string("prompt source needs a ") + what);
  };
  if (source == PromptSource::specialist_output) {
    need(models.specialist != nullptr, "specialist");
    return models.specialist->forward(images);
  }
  need(static_cast<bool>(models.generalist), "generalist");
  auto& sam = *models.generalist;
  const int64_t n = images.size(0);
  auto embedding = sam.encode_image(images);
  std::vector<PromptSet> prompts;
  int decoder = 1;
  switch (source) {
    case PromptSource::gt_points:
      prompts = sample_points_batch(masks, kDefaultForegroundPoints, kDefaultBackgroundPoints, rng);
      break;
    case PromptSource::specialist_points:
      need(models.specialist != nullptr, "specialist");
      prompts = sample_points_batch(pseudo_label(models.specialist->forward(images)), kDefaultForegroundPoints,
                                    kDefaultBackgroundPoints, rng);
      break;
    case PromptSource::learned_box_only:
      prompts = empty_prompts(n);
      break;
    case PromptSource::fused_mask: {
      need(models.specialist && models.specialist2 && models.fusion, "specialist pair and fusion module");
      auto mask = models.fusion->forward(models.specialist->forward(images), models.specialist2->forward(images));
      prompts = empty_prompts(n);
      for (int64_t i = 0; i < n; ++i) prompts[static_cast<std::size_t>(i)].mask_prompt = mask[i][0];
      break;
    }
    case PromptSource::cross_decoder_points: {
      need(sam.config().num_decoders == 2, "two-decoder generalist");
      auto unprompted = sam.decode_mask(embedding, sam.encode_prompts(empty_prompts(n)), 2);
      prompts = sample_points_batch(pseudo_label(unprompted), kDefaultForegroundPoints, kDefaultBackgroundPoints, rng);
      break;
    }
    case PromptSource::specialist_output: break;
  }
  return sam.decode_mask(embedding, sam.encode_prompts(prompts), decoder);
}

MetricReport evaluate_model(ModelSet& models, const std::vector<LabeledSample>& dataset, PromptSource source,
                            std::uint64_t seed, int batch_size) {
  models.train(false);
  auto rng = make_rng(seed, {0xe7a1});
  auto report = evaluate_predictor(
      dataset,
      [&](const torch::Tensor& images, const torch::Tensor& masks) {
        return predict_logits(models, images, masks, source, rng);
      },
      to_string(source), batch_size);
  models.train(true);
  return report;
}

}  // namespace scsam
