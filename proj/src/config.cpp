#include "scsam/config.hpp"

#include <fstream>
#include <set>

#include "scsam/error.hpp"
#include "scsam/hashing.hpp"

using nlohmann::json;

namespace scsam {

namespace {

template <typename T>
void get(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void reject_unknown(const json& j, std::initializer_list<const char*> keys, const std::string& section) {
  if (!j.is_object()) throw ConfigError("section '" + section + "' must be an object");
  std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, _] : j.items())
    if (!allowed.count(k)) throw ConfigError("unknown key '" + section + "." + k + "'");
}

std::string strength_name(AugmentStrength s) { return s == AugmentStrength::weak ? "weak" : "strong"; }

AugmentStrength strength_from(const std::string& s) {
  if (s == "weak") return AugmentStrength::weak;
  if (s == "strong") return AugmentStrength::strong;
  throw ConfigError("unknown augmentation strength '" + s + "'");
}

}  // namespace

void to_json(json& j, const AugmentationConfig& c) {
  j = json{{"strength", strength_name(c.strength)},
           {"hflip_prob", c.hflip_prob},
           {"vflip_prob", c.vflip_prob},
           {"brightness_contrast_prob", c.brightness_contrast_prob},
           {"brightness_limit", c.brightness_limit},
           {"contrast_limit", c.contrast_limit},
           {"shift_scale_rotate_prob", c.shift_scale_rotate_prob},
           {"shift_limit", c.shift_limit},
           {"scale_limit", c.scale_limit},
           {"rotate_limit_deg", c.rotate_limit_deg},
           {"dropout_prob", c.dropout_prob},
           {"dropout_holes", c.dropout_holes},
           {"dropout_size", c.dropout_size},
           {"grid_distortion_prob", c.grid_distortion_prob},
           {"grid_steps", c.grid_steps},
           {"grid_distort_limit", c.grid_distort_limit},
           {"seed", c.seed}};
}

void from_json(const json& j, AugmentationConfig& c) {
  reject_unknown(j,
                 {"strength", "hflip_prob", "vflip_prob", "brightness_contrast_prob", "brightness_limit",
                  "contrast_limit", "shift_scale_rotate_prob", "shift_limit", "scale_limit", "rotate_limit_deg",
                  "dropout_prob", "dropout_holes", "dropout_size", "grid_distortion_prob", "grid_steps",
                  "grid_distort_limit", "seed"},
                 "augmentation");
  if (j.contains("strength")) c.strength = strength_from(j.at("strength").get<std::string>());
  get(j, "hflip_prob", c.hflip_prob);
  get(j, "vflip_prob", c.vflip_prob);
  get(j, "brightness_contrast_prob", c.brightness_contrast_prob);
  get(j, "brightness_limit", c.brightness_limit);
  get(j, "contrast_limit", c.contrast_limit);
  get(j, "shift_scale_rotate_prob", c.shift_scale_rotate_prob);
  get(j, "shift_limit", c.shift_limit);
  get(j, "scale_limit", c.scale_limit);
  get(j, "rotate_limit_deg", c.rotate_limit_deg);
  get(j, "dropout_prob", c.dropout_prob);
  get(j, "dropout_holes", c.dropout_holes);
  get(j, "dropout_size", c.dropout_size);
  get(j, "grid_distortion_prob", c.grid_distortion_prob);
  get(j, "grid_steps", c.grid_steps);
  get(j, "grid_distort_limit", c.grid_distort_limit);
  get(j, "seed", c.seed);
}

void to_json(json& j, const SyntheticAppearance& c) {
  j = json{{"channels", c.channels},
           {"foreground_mean", c.foreground_mean},
           {"background_mean", c.background_mean},
           {"texture", c.texture},
           {"intensity_jitter", c.intensity_jitter},
           {"contrast_jitter", c.contrast_jitter},
           {"distractors", c.distractors},
           {"distractor_stripe", c.distractor_stripe},
           {"size_min", c.size_min},
           {"size_max", c.size_max}};
}

void from_json(const json& j, SyntheticAppearance& c) {
  reject_unknown(j,
                 {"channels", "foreground_mean", "background_mean", "texture", "intensity_jitter", "contrast_jitter",
                  "distractors", "distractor_stripe", "size_min", "size_max"},
                 "appearance");
  get(j, "channels", c.channels);
  get(j, "foreground_mean", c.foreground_mean);
  get(j, "background_mean", c.background_mean);
  get(j, "texture", c.texture);
  get(j, "intensity_jitter", c.intensity_jitter);
  get(j, "contrast_jitter", c.contrast_jitter);
  get(j, "distractors", c.distractors);
  get(j, "distractor_stripe", c.distractor_stripe);
  get(j, "size_min", c.size_min);
  get(j, "size_max", c.size_max);
}

void to_json(json& j, const DataConfig& c) {
  j = json{{"source", c.source == DataSource::synthetic ? "synthetic" : "directory"},
           {"root", c.root},
           {"labeled_ratio", c.labeled_ratio},
           {"train_count", c.train_count},
           {"val_count", c.val_count},
           {"image_size", c.image_size},
           {"shape_family", to_string(c.shape_family)},
           {"noise_level", c.noise_level},
           {"appearance", c.appearance},
           {"seed", c.seed},
           {"split_seed", c.split_seed},
           {"val_seed", c.val_seed},
           {"augment", c.augment},
           {"weak", c.weak},
           {"strong", c.strong}};
}

void from_json(const json& j, DataConfig& c) {
  reject_unknown(j,
                 {"source", "root", "labeled_ratio", "train_count", "val_count", "image_size", "shape_family",
                  "noise_level", "appearance", "seed", "split_seed", "val_seed", "augment", "weak", "strong"},
                 "data");
  if (j.contains("source")) {
    const auto s = j.at("source").get<std::string>();
    if (s == "synthetic") c.source = DataSource::synthetic;
    else if (s == "directory") c.source = DataSource::directory;
    else throw ConfigError("unknown data.source '" + s + "'");
  }
  get(j, "root", c.root);
  get(j, "labeled_ratio", c.labeled_ratio);
  get(j, "train_count", c.train_count);
  get(j, "val_count", c.val_count);
  get(j, "image_size", c.image_size);
  if (j.contains("shape_family")) c.shape_family = shape_family_from_string(j.at("shape_family").get<std::string>());
  get(j, "noise_level", c.noise_level);
  get(j, "appearance", c.appearance);
  get(j, "seed", c.seed);
  get(j, "split_seed", c.split_seed);
  get(j, "val_seed", c.val_seed);
  get(j, "augment", c.augment);
  get(j, "weak", c.weak);
  get(j, "strong", c.strong);
}

void to_json(json& j, const SpecialistConfig& c) {
  j = json{{"backbone", c.backbone}, {"in_channels", c.in_channels}, {"base_width", c.base_width}, {"depth", c.depth}};
}

void from_json(const json& j, SpecialistConfig& c) {
  reject_unknown(j, {"backbone", "in_channels", "base_width", "depth"}, "specialist");
  get(j, "backbone", c.backbone);
  get(j, "in_channels", c.in_channels);
  get(j, "base_width", c.base_width);
  get(j, "depth", c.depth);
}

void to_json(json& j, const GeneralistConfig& c) {
  j = json{{"in_channels", c.in_channels},
           {"image_size", c.image_size},
           {"patch_size", c.patch_size},
           {"embed_dim", c.embed_dim},
           {"encoder_depth", c.encoder_depth},
           {"num_heads", c.num_heads},
           {"mlp_ratio", c.mlp_ratio},
           {"adapter_dim", c.adapter_dim},
           {"decoder_depth", c.decoder_depth},
           {"freeze_encoder_base", c.freeze_encoder_base},
           {"trainable_pos_embed", c.trainable_pos_embed},
           {"num_decoders", c.num_decoders},
           {"learnable_box_prompt", c.learnable_box_prompt}};
}

void from_json(const json& j, GeneralistConfig& c) {
  reject_unknown(j,
                 {"in_channels", "image_size", "patch_size", "embed_dim", "encoder_depth", "num_heads", "mlp_ratio",
                  "adapter_dim", "decoder_depth", "freeze_encoder_base", "trainable_pos_embed", "num_decoders",
                  "learnable_box_prompt"},
                 "generalist");
  get(j, "in_channels", c.in_channels);
  get(j, "image_size", c.image_size);
  get(j, "patch_size", c.patch_size);
  get(j, "embed_dim", c.embed_dim);
  get(j, "encoder_depth", c.encoder_depth);
  get(j, "num_heads", c.num_heads);
  get(j, "mlp_ratio", c.mlp_ratio);
  get(j, "adapter_dim", c.adapter_dim);
  get(j, "decoder_depth", c.decoder_depth);
  get(j, "freeze_encoder_base", c.freeze_encoder_base);
  get(j, "trainable_pos_embed", c.trainable_pos_embed);
  get(j, "num_decoders", c.num_decoders);
  get(j, "learnable_box_prompt", c.learnable_box_prompt);
}

void to_json(json& j, const StrategyConfig& c) {
  j = json{{"kind", to_string(c.kind)},
           {"ramp_up_enabled", c.ramp_up_enabled},
           {"t_max", c.t_max},
           {"ramp_exponent_scale", c.ramp_exponent_scale},
           {"kd_hard_target", c.kd_hard_target},
           {"labeled_prompts_from_gt", c.labeled_prompts_from_gt},
           {"points_fg", c.points_fg},
           {"points_bg", c.points_bg}};
}

void from_json(const json& j, StrategyConfig& c) {
  reject_unknown(j,
                 {"kind", "ramp_up_enabled", "t_max", "ramp_exponent_scale", "kd_hard_target",
                  "labeled_prompts_from_gt", "points_fg", "points_bg"},
                 "strategy");
  if (j.contains("kind")) c.kind = strategy_from_string(j.at("kind").get<std::string>());
  get(j, "ramp_up_enabled", c.ramp_up_enabled);
  get(j, "t_max", c.t_max);
  get(j, "ramp_exponent_scale", c.ramp_exponent_scale);
  get(j, "kd_hard_target", c.kd_hard_target);
  get(j, "labeled_prompts_from_gt", c.labeled_prompts_from_gt);
  get(j, "points_fg", c.points_fg);
  get(j, "points_bg", c.points_bg);
}

namespace {

json warm_json(const WarmStartConfig& c) {
  return json{{"enabled", c.enabled},
              {"iterations", c.iterations},
              {"batch_size", c.batch_size},
              {"lr", c.lr},
              {"count", c.count},
              {"shape_family", to_string(c.shape_family)},
              {"noise_level", c.noise_level},
              {"appearance", c.appearance},
              {"seed", c.seed},
              {"cache_dir", c.cache_dir}};
}

void warm_from(const json& j, WarmStartConfig& c) {
  reject_unknown(j,
                 {"enabled", "iterations", "batch_size", "lr", "count", "shape_family", "noise_level", "appearance",
                  "seed", "cache_dir"},
                 "warm_start");
  get(j, "enabled", c.enabled);
  get(j, "iterations", c.iterations);
  get(j, "batch_size", c.batch_size);
  get(j, "lr", c.lr);
  get(j, "count", c.count);
  if (j.contains("shape_family")) c.shape_family = shape_family_from_string(j.at("shape_family").get<std::string>());
  get(j, "noise_level", c.noise_level);
  get(j, "appearance", c.appearance);
  get(j, "seed", c.seed);
  get(j, "cache_dir", c.cache_dir);
}

json optim_json(const OptimConfig& c) {
  return json{{"generalist_lr", c.generalist_lr},
              {"adam_beta1", c.adam_beta1},
              {"adam_beta2", c.adam_beta2},
              {"specialist_lr", c.specialist_lr},
              {"specialist_momentum", c.specialist_momentum},
              {"iterations", c.iterations},
              {"labeled_per_batch", c.labeled_per_batch},
              {"unlabeled_per_batch", c.unlabeled_per_batch}};
}

void optim_from(const json& j, OptimConfig& c) {
  reject_unknown(j,
                 {"generalist_lr", "adam_beta1", "adam_beta2", "specialist_lr", "specialist_momentum", "iterations",
                  "labeled_per_batch", "unlabeled_per_batch"},
                 "optim");
  get(j, "generalist_lr", c.generalist_lr);
  get(j, "adam_beta1", c.adam_beta1);
  get(j, "adam_beta2", c.adam_beta2);
  get(j, "specialist_lr", c.specialist_lr);
  get(j, "specialist_momentum", c.specialist_momentum);
  get(j, "iterations", c.iterations);
  get(j, "labeled_per_batch", c.labeled_per_batch);
  get(j, "unlabeled_per_batch", c.unlabeled_per_batch);
}

json output_json(const OutputConfig& c) {
  return json{{"run_dir", c.run_dir},
              {"checkpoint_interval", c.checkpoint_interval},
              {"eval_interval", c.eval_interval},
              {"eval_prompt_source", c.eval_prompt_source},
              {"eval_batch_size", c.eval_batch_size},
              {"plots", c.plots}};
}

void output_from(const json& j, OutputConfig& c) {
  reject_unknown(j, {"run_dir", "checkpoint_interval", "eval_interval", "eval_prompt_source", "eval_batch_size", "plots"},
                 "output");
  get(j, "run_dir", c.run_dir);
  get(j, "checkpoint_interval", c.checkpoint_interval);
  get(j, "eval_interval", c.eval_interval);
  get(j, "eval_prompt_source", c.eval_prompt_source);
  get(j, "eval_batch_size", c.eval_batch_size);
  get(j, "plots", c.plots);
}

}  // namespace

void to_json(json& j, const ExperimentConfig& c) {
  j = json{{"name", c.name},
           {"seed", c.seed},
           {"deterministic", c.deterministic},
           {"data", c.data},
           {"specialist", c.specialist},
           {"specialist2", c.specialist2},
           {"generalist", c.generalist},
           {"warm_start", warm_json(c.warm_start)},
           {"strategy", c.strategy},
           {"optim", optim_json(c.optim)},
           {"output", output_json(c.output)}};
}

void from_json(const json& j, ExperimentConfig& c) {
  reject_unknown(j,
                 {"name", "seed", "deterministic", "data", "specialist", "specialist2", "generalist", "warm_start",
                  "strategy", "optim", "output"},
                 "config");
  get(j, "name", c.name);
  get(j, "seed", c.seed);
  get(j, "deterministic", c.deterministic);
  get(j, "data", c.data);
  get(j, "specialist", c.specialist);
  get(j, "specialist2", c.specialist2);
  get(j, "generalist", c.generalist);
  if (j.contains("warm_start")) warm_from(j.at("warm_start"), c.warm_start);
  get(j, "strategy", c.strategy);
  if (j.contains("optim")) optim_from(j.at("optim"), c.optim);
  if (j.contains("output")) output_from(j.at("output"), c.output);
}

ExperimentConfig resolve(ExperimentConfig c) {
  if (c.strategy.kind == StrategyKind::dual_sam) c.generalist.num_decoders = 2;
  if (c.strategy.kind == StrategyKind::peft_sam) c.optim.unlabeled_per_batch = 0;
  if (c.data.labeled_ratio >= 1.0) c.optim.unlabeled_per_batch = 0;
  return c;
}

std::vector<std::string> validation_errors(const ExperimentConfig& c) {
  std::vector<std::string> errors;
  auto check = [&errors](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      errors.emplace_back(e.what());
    }
  };
  check([&] { c.specialist.validate(); });
  check([&] { c.specialist2.validate(); });
  check([&] { c.generalist.validate(); });
  check([&] { c.strategy.validate(); });
  const auto& d = c.data;
  if (!(d.labeled_ratio > 0.0 && d.labeled_ratio <= 1.0)) errors.emplace_back("data.labeled_ratio must be in (0, 1]");
  if (d.source == DataSource::directory && d.root.empty()) errors.emplace_back("data.root is required for directory data");
  if (d.source == DataSource::synthetic && d.train_count < 1) errors.emplace_back("data.train_count must be >= 1");
  if (d.source == DataSource::synthetic && d.val_seed == d.seed)
    errors.emplace_back("data.val_seed must differ from data.seed so validation images are held out");
  if (d.val_count < 1) errors.emplace_back("data.val_count must be >= 1");
  if (d.image_size < 32) errors.emplace_back("data.image_size must be >= 32");
  if (d.image_size != c.generalist.image_size) errors.emplace_back("data.image_size must equal generalist.image_size");
  if (c.specialist.in_channels != c.generalist.in_channels)
    errors.emplace_back("specialist.in_channels must equal generalist.in_channels");
  if (d.source == DataSource::synthetic && d.appearance.channels != c.generalist.in_channels)
    errors.emplace_back("data.appearance.channels must equal generalist.in_channels");
  if (c.strategy.kind == StrategyKind::dual_sam && c.generalist.num_decoders != 2)
    errors.emplace_back("dual_sam requires generalist.num_decoders = 2");
  if (c.optim.iterations < 0) errors.emplace_back("optim.iterations must be >= 0");
  if (c.optim.labeled_per_batch < 1) errors.emplace_back("optim.labeled_per_batch must be >= 1");
  if (c.optim.unlabeled_per_batch < 0) errors.emplace_back("optim.unlabeled_per_batch must be >= 0");
  if (c.strategy.kind == StrategyKind::peft_sam && c.optim.unlabeled_per_batch != 0)
    errors.emplace_back("peft_sam requires optim.unlabeled_per_batch = 0");
  if (c.optim.generalist_lr <= 0 || c.optim.specialist_lr <= 0) errors.emplace_back("learning rates must be positive");
  if (c.optim.specialist_momentum < 0 || c.optim.specialist_momentum >= 1)
    errors.emplace_back("optim.specialist_momentum must be in [0, 1)");
  if (c.output.checkpoint_interval < 1) errors.emplace_back("output.checkpoint_interval must be >= 1");
  if (c.output.eval_interval < 1) errors.emplace_back("output.eval_interval must be >= 1");
  if (c.output.eval_batch_size < 1) errors.emplace_back("output.eval_batch_size must be >= 1");
  if (c.output.run_dir.empty()) errors.emplace_back("output.run_dir must be set");
  if (c.warm_start.enabled) {
    if (c.warm_start.iterations < 0 || c.warm_start.batch_size < 1 || c.warm_start.count < 1)
      errors.emplace_back("warm_start iterations/batch_size/count out of range");
    if (c.warm_start.appearance.channels != c.generalist.in_channels)
      errors.emplace_back("warm_start.appearance.channels must equal generalist.in_channels");
  }
  return errors;
}

void validate_or_throw(const ExperimentConfig& config) {
  const auto errors = validation_errors(config);
  if (errors.empty()) return;
  std::string msg = "invalid configuration:";
  for (const auto& e : errors) msg += "\n  - " + e;
  throw ConfigError(msg);
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  try {
    return json::parse(in, nullptr, true, /*ignore_comments=*/true).get<ExperimentConfig>();
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
}

void save_config(const ExperimentConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << json(config).dump(2) << "\n";
}

std::string config_hash(const ExperimentConfig& config) { return sha256_hex(json(config).dump()).substr(0, 16); }

std::vector<std::string> architecture_differences(const ExperimentConfig& a, const ExperimentConfig& b) {
  std::vector<std::string> diffs;
  const json ja = {{"specialist", a.specialist}, {"specialist2", a.specialist2}, {"generalist", a.generalist},
                   {"strategy", {{"kind", to_string(a.strategy.kind)}}}};
  const json jb = {{"specialist", b.specialist}, {"specialist2", b.specialist2}, {"generalist", b.generalist},
                   {"strategy", {{"kind", to_string(b.strategy.kind)}}}};
  for (const auto& [section, fields] : ja.items())
    for (const auto& [key, value] : fields.items())
      if (!jb.at(section).contains(key) || jb.at(section).at(key) != value) diffs.push_back(section + "." + key);
  return diffs;
}

}  // namespace scsam
