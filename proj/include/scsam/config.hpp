#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "scsam/augment.hpp"
#include "scsam/generalist.hpp"
#include "scsam/specialist.hpp"
#include "scsam/strategies.hpp"
#include "scsam/synthetic.hpp"

namespace scsam {

enum class DataSource { synthetic, directory };

struct DataConfig {
  DataSource source = DataSource::synthetic;
  std::string root;  // directory source only
  double labeled_ratio = 0.05;
  int train_count = 400;
  int val_count = 100;
  int image_size = 128;
  ShapeFamily shape_family = ShapeFamily::blob;
  double noise_level = 0.1;
  SyntheticAppearance appearance;
  std::uint64_t seed = 0;        // training pool generation
  std::uint64_t split_seed = 0;  // labeled/unlabeled assignment
  std::uint64_t val_seed = 1;    // held-out validation pool
  bool augment = true;
  AugmentationConfig weak = AugmentationConfig::weak();
  AugmentationConfig strong = AugmentationConfig::strong();
};

// Emulated pretraining of the generalist on a disjoint synthetic distribution
// with full labels, before the base encoder is frozen.
struct WarmStartConfig {
  bool enabled = true;
  int iterations = 1500;
  int batch_size = 8;
  double lr = 1e-3;
  int count = 400;
  ShapeFamily shape_family = ShapeFamily::polyp_like;
  double noise_level = 0.05;
  SyntheticAppearance appearance;
  std::uint64_t seed = 101;
  std::string cache_dir;  // empty: <run_dir>/warm_start
};

struct OptimConfig {
  double generalist_lr = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double specialist_lr = 0.01;
  double specialist_momentum = 0.9;
  int64_t iterations = 2000;
  int labeled_per_batch = 4;
  int unlabeled_per_batch = 4;
};

struct OutputConfig {
  std::string run_dir = "runs/default";
  int64_t checkpoint_interval = 500;
  int64_t eval_interval = 500;
  std::string eval_prompt_source;  // empty: the strategy's default
  int eval_batch_size = 8;
  bool plots = true;
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::uint64_t seed = 0;  // model initialization and per-step random streams
  bool deterministic = true;
  DataConfig data;
  SpecialistConfig specialist;
  SpecialistConfig specialist2;  // second specialist for sp_sam
  GeneralistConfig generalist;
  WarmStartConfig warm_start;
  StrategyConfig strategy;
  OptimConfig optim;
  OutputConfig output;
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);
void to_json(nlohmann::json& j, const DataConfig& c);
void from_json(const nlohmann::json& j, DataConfig& c);
void to_json(nlohmann::json& j, const SpecialistConfig& c);
void from_json(const nlohmann::json& j, SpecialistConfig& c);
void to_json(nlohmann::json& j, const GeneralistConfig& c);
void from_json(const nlohmann::json& j, GeneralistConfig& c);
void to_json(nlohmann::json& j, const StrategyConfig& c);
void from_json(const nlohmann::json& j, StrategyConfig& c);
void to_json(nlohmann::json& j, const AugmentationConfig& c);
void from_json(const nlohmann::json& j, AugmentationConfig& c);
void to_json(nlohmann::json& j, const SyntheticAppearance& c);
void from_json(const nlohmann::json& j, SyntheticAppearance& c);

// Fills derived fields: dual_sam gets two decoders, peft_sam drops unlabeled
// samples from its batches.
ExperimentConfig resolve(ExperimentConfig config);

// Every validation failure, so they can be reported together before any compute.
std::vector<std::string> validation_errors(const ExperimentConfig& config);
void validate_or_throw(const ExperimentConfig& config);

ExperimentConfig load_config(const std::filesystem::path& path);
void save_config(const ExperimentConfig& config, const std::filesystem::path& path);
std::string config_hash(const ExperimentConfig& config);

// Architecture fields that differ between two configs ("generalist.embed_dim", ...).
std::vector<std::string> architecture_differences(const ExperimentConfig& a, const ExperimentConfig& b);

}  // namespace scsam
