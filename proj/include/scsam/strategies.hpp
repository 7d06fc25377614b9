#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "scsam/batching.hpp"
#include "scsam/generalist.hpp"
#include "scsam/losses.hpp"
#include "scsam/rng.hpp"
#include "scsam/specialist.hpp"

namespace scsam {

enum class StrategyKind { peft_sam, dual_sam, sp_sam, sc_sam };

std::string to_string(StrategyKind kind);
StrategyKind strategy_from_string(const std::string& name);

struct StrategyConfig {
  StrategyKind kind = StrategyKind::sc_sam;
  bool ramp_up_enabled = true;
  int64_t t_max = 600;
  double ramp_exponent_scale = 1.0;
  // sp_sam: distill from SAM's argmax instead of its soft distribution.
  bool kd_hard_target = false;
  // sc_sam: prompt SAM on labeled images from ground truth instead of the
  // specialist's prediction.
  bool labeled_prompts_from_gt = false;
  int points_fg = 5;
  int points_bg = 5;

  RampUpSchedule schedule() const { return {t_max, ramp_exponent_scale}; }
  void validate() const;
};

struct ModelSet {
  SpecialistPtr specialist;   // S for sc_sam, S_1 for sp_sam
  SpecialistPtr specialist2;  // S_2 for sp_sam
  FusionModule fusion{nullptr};
  Generalist generalist{nullptr};

  void train(bool on = true);
  // (prefix, module) pairs of the models that are present, in a fixed order.
  std::vector<std::pair<std::string, torch::nn::Module*>> named_models();
};

// Throws ConfigError naming every model the strategy needs but is missing.
void check_models(const StrategyConfig& config, const ModelSet& models);

struct StepHooks {
  // Dual-SAM: rewrites decoder i's phase-1 logits before its prompts are drawn.
  std::function<torch::Tensor(int, const torch::Tensor&)> dual_phase1;
  // SC-SAM: rewrites the specialist logits that SAM's prompts are drawn from.
  std::function<torch::Tensor(const torch::Tensor&)> specialist_prompt_source;
};

struct StepContext {
  int64_t t = 0;
  Rng* rng = nullptr;
  const StepHooks* hooks = nullptr;
};

struct LossTerm {
  std::string name;
  torch::Tensor value;      // weighted, as it enters the total
  double weight = 1.0;
  double unweighted = 0.0;  // value / weight, before any ramp-up scaling
};

struct StepOutput {
  torch::Tensor total_loss;
  std::vector<LossTerm> terms;
  double omega = 0.0;
  // Prompts fed to each generalist decoder, in decoder order.
  std::vector<std::vector<PromptSet>> prompts;

  std::map<std::string, double> components() const;
  const LossTerm& term(const std::string& name) const;
  bool has_term(const std::string& name) const;
};

// All component names a strategy can emit, in CSV column order.
std::vector<std::string> component_names(StrategyKind kind);

StepOutput step_peft_sam(const StrategyConfig& config, const MixedBatch& batch, ModelSet& models, StepContext& ctx);
StepOutput step_dual_sam(const StrategyConfig& config, const MixedBatch& batch, ModelSet& models, StepContext& ctx);
StepOutput step_sp_sam(const StrategyConfig& config, const MixedBatch& batch, ModelSet& models, StepContext& ctx);
StepOutput step_sc_sam(const StrategyConfig& config, const MixedBatch& batch, ModelSet& models, StepContext& ctx);

StepOutput run_step(const StrategyConfig& config, const MixedBatch& batch, ModelSet& models, StepContext& ctx);

}  // namespace scsam
