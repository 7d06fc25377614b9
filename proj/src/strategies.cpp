#include "scsam/strategies.hpp"

#include "scsam/error.hpp"
#include "scsam/prompts.hpp"

namespace scsam {

std::string to_string(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::peft_sam: return "peft_sam";
    case StrategyKind::dual_sam: return "dual_sam";
    case StrategyKind::sp_sam: return "sp_sam";
    case StrategyKind::sc_sam: return "sc_sam";
  }
  return "sc_sam";
}

StrategyKind strategy_from_string(const std::string& name) {
  if (name == "peft_sam") return StrategyKind::peft_sam;
  if (name == "dual_sam") return StrategyKind::dual_sam;
  if (name == "sp_sam") return StrategyKind::sp_sam;
  if (name == "sc_sam") return StrategyKind::sc_sam;
  throw ConfigError("unknown strategy '" + name + "'");
}

void StrategyConfig::validate() const {
  if (t_max < 1) throw ConfigError("strategy.t_max must be >= 1");
  if (points_fg < 0 || points_bg < 0) throw ConfigError("point counts must be non-negative");
  if (ramp_exponent_scale <= 0) throw ConfigError("ramp_exponent_scale must be positive");
}

void ModelSet::train(bool on) {
  for (auto& [_, m] : named_models()) m->train(on);
}

std::vector<std::pair<std::string, torch::nn::Module*>> ModelSet::named_models() {
  std::vector<std::pair<std::string, torch::nn::Module*>> out;
  if (specialist) out.emplace_back("specialist", specialist.get());
  if (specialist2) out.emplace_back("specialist2", specialist2.get());
  if (fusion) out.emplace_back("fusion", fusion.get());
  if (generalist) out.emplace_back("generalist", generalist.get());
  return out;
}

void check_models(const StrategyConfig& config, const ModelSet& models) {
  std::vector<std::string> missing;
  if (!models.generalist) missing.emplace_back("generalist");
  switch (config.kind) {
    case StrategyKind::peft_sam: break;
    case StrategyKind::dual_sam:
      if (models.generalist && models.generalist->config().num_decoders != 2)
        throw ConfigError("dual_sam requires a generalist with num_decoders = 2");
      break;
    case StrategyKind::sp_sam:
      if (!models.specialist) missing.emplace_back("specialist");
      if (!models.specialist2) missing.emplace_back("specialist2");
      if (!models.fusion) missing.emplace_back("fusion");
      break;
    case StrategyKind::sc_sam:
      if (!models.specialist) missing.emplace_back("specialist");
      break;
  }
  if (!missing.empty()) {
    std::string msg = to_string(config.kind) + " is missing models:";
    for (const auto& m : missing) msg += " " + m;
    throw ConfigError(msg);
  }
}

std::map<std::string, double> StepOutput::components() const {
  std::map<std::string, double> out;
  for (const auto& t : terms) out[t.name] = t.value.item<double>();
  return out;
}

const LossTerm& StepOutput::term(const std::string& name) const {
  for (const auto& t : terms)
    if (t.name == name) return t;
  throw Error("no loss term named " + name);
}

bool StepOutput::has_term(const std::string& name) const {
  for (const auto& t : terms)
    if (t.name == name) return true;
  return false;
}

std::vector<std::string> component_names(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::peft_sam: return {"sup_generalist"};
    case StrategyKind::dual_sam: return {"sup_d1", "sup_d2", "unsup_d1_from_d2", "unsup_d2_from_d1"};
    case StrategyKind::sp_sam:
      return {"sup_specialist1", "sup_specialist2", "sup_generalist", "kd_specialist1", "kd_specialist2"};
    case StrategyKind::sc_sam:
      return {"sup_specialist", "sup_generalist", "unsup_spec_from_gen", "unsup_gen_from_spec"};
  }
  return {};
}

namespace {

void add_term(StepOutput& out, std::string name, torch::Tensor value, double weight = 1.0) {
  const double raw = value.item<double>();
  out.terms.push_back({std::move(name), weight == 1.0 ? value : value * weight, weight, raw});
}

void finish(StepOutput& out) {
  auto total = out.terms.front().value;
  for (std::size_t i = 1; i < out.terms.size(); ++i) total = total + out.terms[i].value;
  out.total_loss = total;
}

Rng& rng_of(StepContext& ctx) {
  if (!ctx.rng) throw Error("strategy step requires a random stream");
  return *ctx.rng;
}

torch::Tensor all_images(const MixedBatch& batch) {
  if (batch.num_unlabeled() == 0) return batch.labeled_images;
  return torch::cat({batch.labeled_images, batch.unlabeled_images}, 0);
}

}  // namespace

StepOutput step_peft_sam(const StrategyConfig& config, const MixedBatch& batch, ModelSet& models, StepContext& ctx) {
  check_models(config, models);
  if (batch.num_unlabeled() > 0) throw ConfigError("peft_sam trains on labeled samples only");
  auto& sam = *models.generalist;
  auto prompts = sample_points_batch(batch.labeled_masks, config.points_fg, config.points_bg, rng_of(ctx));
  auto logits = sam.decode_mask(sam.encode_image(batch.labeled_images), sam.encode_prompts(prompts), 1);
  StepOutput out;
  add_term(out, "sup_generalist", seg_loss(logits, batch.labeled_masks));
  out.omega = 0.0;
  out.prompts.push_back(std::move(prompts));
  finish(out);
  return out;
}

StepOutput step_dual_sam(const StrategyConfig& config, const MixedBatch& batch, ModelSet& models, StepContext& ctx) {
  check_models(config, models);
  auto& sam = *models.generalist;
  const int64_t nl = batch.num_labeled(), nu = batch.num_unlabeled();
  auto images = all_images(batch);
  auto embedding = sam.encode_image(images);

  // Phase 1: unprompted predictions from both decoders, used only to draw prompts.
  torch::Tensor phase1[2];
  {
    torch::NoGradGuard no_grad;
    auto unprompted = sam.encode_prompts(empty_prompts(images.size(0)));
    for (int d = 0; d < 2; ++d) {
      phase1[d] = sam.decode_mask(embedding.detach(), unprompted, d + 1);
      if (ctx.hooks && ctx.hooks->dual_phase1) phase1[d] = ctx.hooks->dual_phase1(d + 1, phase1[d]);
    }
  }
  auto& rng = rng_of(ctx);
  auto points1 = sample_points_batch(pseudo_label(phase1[0]), config.points_fg, config.points_bg, rng);
  auto points2 = sample_points_batch(pseudo_label(phase1[1]), config.points_fg, config.points_bg, rng);

  // Phase 2: each decoder is prompted with the other decoder's points.
  auto p1 = sam.decode_mask(embedding, sam.encode_prompts(points2), 1);
  auto p2 = sam.decode_mask(embedding, sam.encode_prompts(points1), 2);

  StepOutput out;
  add_term(out, "sup_d1", seg_loss(p1.slice(0, 0, nl), batch.labeled_masks));
  add_term(out, "sup_d2", seg_loss(p2.slice(0, 0, nl), batch.labeled_masks));
  if (nu > 0) {
    auto u1 = p1.slice(0, nl), u2 = p2.slice(0, nl);
    add_term(out, "unsup_d1_from_d2", seg_loss(u1, pseudo_label(u2)));
    add_term(out, "unsup_d2_from_d1", seg_loss(u2, pseudo_label(u1)));
  }
  out.omega = 0.0;
  out.prompts.push_back(std::move(points2));
  out.prompts.push_back(std::move(points1));
  finish(out);
  return out;
}

StepOutput step_sp_sam(const StrategyConfig& config, const MixedBatch& batch, ModelSet& models, StepContext& ctx) {
  check_models(config, models);
  auto& sam = *models.generalist;
  const int64_t nl = batch.num_labeled(), nu = batch.num_unlabeled();
  auto images = all_images(batch);
  auto s1 = models.specialist->forward(images);
  auto s2 = models.specialist2->forward(images);
  auto mask = fuse_predictions(*models.fusion, s1, s2);

  std::vector<PromptSet> prompts(static_cast<std::size_t>(images.size(0)));
  for (std::size_t i = 0; i < prompts.size(); ++i) prompts[i].mask_prompt = mask[static_cast<int64_t>(i)][0];
  auto p_sam = sam.decode_mask(sam.encode_image(images), sam.encode_prompts(prompts), 1);

  StepOutput out;
  add_term(out, "sup_specialist1", seg_loss(s1.slice(0, 0, nl), batch.labeled_masks));
  add_term(out, "sup_specialist2", seg_loss(s2.slice(0, 0, nl), batch.labeled_masks));
  add_term(out, "sup_generalist", seg_loss(p_sam.slice(0, 0, nl), batch.labeled_masks));
  if (nu > 0) {
    const auto target = config.kd_hard_target ? KdTarget::hard : KdTarget::soft;
    auto teacher = p_sam.slice(0, nl).detach();
    add_term(out, "kd_specialist1", kd_loss(s1.slice(0, nl), teacher, target));
    add_term(out, "kd_specialist2", kd_loss(s2.slice(0, nl), teacher, target));
  }
  (void)ctx;
  out.omega = 0.0;
  out.prompts.push_back(std::move(prompts));
  finish(out);
  return out;
}

StepOutput step_sc_sam(const StrategyConfig& config, const MixedBatch& batch, ModelSet& models, StepContext& ctx) {
  check_models(config, models);
  if (ctx.t < 0) throw ConfigError("sc_sam step index must be non-negative");
  auto& sam = *models.generalist;
  const int64_t nl = batch.num_labeled(), nu = batch.num_unlabeled();
  auto images = all_images(batch);

  auto p_unet = models.specialist->forward(images);
  auto prompt_source = p_unet.detach();
  if (ctx.hooks && ctx.hooks->specialist_prompt_source) prompt_source = ctx.hooks->specialist_prompt_source(prompt_source);
  auto unet_labels = pseudo_label(prompt_source);

  auto& rng = rng_of(ctx);
  auto prompts = sample_points_batch(config.labeled_prompts_from_gt ? batch.labeled_masks : unet_labels.slice(0, 0, nl),
                                     config.points_fg, config.points_bg, rng);
  if (nu > 0) {
    auto unlabeled_prompts = sample_points_batch(unet_labels.slice(0, nl), config.points_fg, config.points_bg, rng);
    prompts.insert(prompts.end(), unlabeled_prompts.begin(), unlabeled_prompts.end());
  }
  auto p_sam = sam.decode_mask(sam.encode_image(images), sam.encode_prompts(prompts), 1);

  StepOutput out;
  out.omega = config.ramp_up_enabled ? ramp_weight(config.schedule(), ctx.t) : 1.0;
  add_term(out, "sup_specialist", seg_loss(p_unet.slice(0, 0, nl), batch.labeled_masks));
  add_term(out, "sup_generalist", seg_loss(p_sam.slice(0, 0, nl), batch.labeled_masks));
  if (nu > 0) {
    auto u_unet = p_unet.slice(0, nl), u_sam = p_sam.slice(0, nl);
    add_term(out, "unsup_spec_from_gen", seg_loss(u_unet, pseudo_label(u_sam)));
    add_term(out, "unsup_gen_from_spec", seg_loss(u_sam, pseudo_label(u_unet)), out.omega);
  }
  out.prompts.push_back(std::move(prompts));
  finish(out);
  return out;
}

StepOutput run_step(const StrategyConfig& config, const MixedBatch& batch, ModelSet& models, StepContext& ctx) {
  switch (config.kind) {
    case StrategyKind::peft_sam: return step_peft_sam(config, batch, models, ctx);
    case StrategyKind::dual_sam: return step_dual_sam(config, batch, models, ctx);
    case StrategyKind::sp_sam: return step_sp_sam(config, batch, models, ctx);
    case StrategyKind::sc_sam: return step_sc_sam(config, batch, models, ctx);
  }
  throw Error("unreachable strategy kind");
}

}  // namespace scsam
