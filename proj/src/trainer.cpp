#include "scsam/trainer.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "scsam/augment.hpp"
#include "scsam/error.hpp"
#include "scsam/hashing.hpp"
#include "scsam/plots.hpp"
#include "scsam/prompts.hpp"
#include "scsam/rng.hpp"
#include "scsam/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace scsam {

namespace {

constexpr std::uint64_t kModelStream = 0x40de1;
constexpr std::uint64_t kStepStream = 0x57e9;
constexpr std::uint64_t kWarmStream = 0x3a93;

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t k) { return make_rng(seed, {kModelStream, k})(); }

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::vector<LabeledSample> resize_samples(std::vector<LabeledSample> samples, int size) {
  namespace F = torch::nn::functional;
  for (auto& s : samples) {
    if (s.image.height() == size && s.image.width() == size) continue;
    auto img = F::interpolate(s.image.data().unsqueeze(0),
                              F::InterpolateFuncOptions().size(std::vector<int64_t>{size, size}).mode(torch::kBilinear).align_corners(false));
    auto mask = F::interpolate(s.mask.data().to(torch::kFloat32).unsqueeze(0).unsqueeze(0),
                               F::InterpolateFuncOptions().size(std::vector<int64_t>{size, size}).mode(torch::kNearest));
    s = LabeledSample{ImageTensor(img[0].clamp(0.0, 1.0)), MaskTensor(mask[0][0].to(torch::kUInt8)), s.name};
  }
  return samples;
}

SyntheticSpec synthetic_spec(const DataConfig& d, int count, std::uint64_t seed, std::string prefix) {
  SyntheticSpec spec;
  spec.count = count;
  spec.height = spec.width = d.image_size;
  spec.family = d.shape_family;
  spec.noise_level = d.noise_level;
  spec.seed = seed;
  spec.appearance = d.appearance;
  spec.name_prefix = std::move(prefix);
  return spec;
}

json warm_key(const ExperimentConfig& config) {
  auto w = config.warm_start;
  w.cache_dir.clear();
  auto g = config.generalist;
  g.num_decoders = 1;
  g.freeze_encoder_base = false;
  ExperimentConfig probe;
  probe.warm_start = w;
  json j = probe;
  return json{{"version", 1}, {"warm_start", j.at("warm_start")}, {"generalist", json(g)}};
}

std::vector<PromptSet> warm_prompts(const torch::Tensor& masks, int mask_prompt_size, Rng& rng) {
  namespace F = torch::nn::functional;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> count(1, kDefaultForegroundPoints);
  std::vector<PromptSet> prompts;
  for (int64_t i = 0; i < masks.size(0); ++i) {
    const double r = u(rng);
    if (r < 0.3) {
      prompts.emplace_back();
    } else if (r < 0.8) {
      const int fg = count(rng), bg = count(rng);
      prompts.push_back(sample_points(masks[i], fg, bg, rng));
    } else {
      PromptSet p;
      auto small = F::adaptive_avg_pool2d(masks[i].to(torch::kFloat32).unsqueeze(0).unsqueeze(0),
                                          F::AdaptiveAvgPool2dFuncOptions({mask_prompt_size, mask_prompt_size}));
      p.mask_prompt = (small[0][0] - 0.5) * 8.0;
      prompts.push_back(std::move(p));
    }
  }
  return prompts;
}

std::map<std::string, torch::Tensor> train_warm_start(const ExperimentConfig& config) {
  const auto& w = config.warm_start;
  auto g = config.generalist;
  g.num_decoders = 1;
  g.freeze_encoder_base = false;
  Generalist model(g, w.seed);
  for (auto& p : model->adapter_parameters()) p.requires_grad_(false);
  model->train(true);

  DataConfig d = config.data;
  d.shape_family = w.shape_family;
  d.noise_level = w.noise_level;
  d.appearance = w.appearance;
  auto samples = generate_synthetic_dataset(synthetic_spec(d, w.count, w.seed, "warm"));
  const auto aug = AugmentationConfig::weak();

  torch::optim::Adam optimizer(model->trainable_parameters(), torch::optim::AdamOptions(w.lr));
  std::uniform_int_distribution<std::size_t> pick(0, samples.size() - 1);
  for (int it = 0; it < w.iterations; ++it) {
    auto rng = make_rng(w.seed, {kWarmStream, static_cast<std::uint64_t>(it)});
    std::vector<torch::Tensor> images, masks;
    for (int b = 0; b < w.batch_size; ++b) {
      const auto& s = samples[pick(rng)];
      auto a = augment(s.image, s.mask, aug, rng);
      images.push_back(a.image.data());
      masks.push_back(a.mask->data().to(torch::kInt64));
    }
    auto x = torch::stack(images);
    auto y = torch::stack(masks);
    auto prompts = warm_prompts(y, g.mask_prompt_size(), rng);
    optimizer.zero_grad();
    auto loss = seg_loss(model->predict(x, prompts, 1), y);
    loss.backward();
    optimizer.step();
  }
  std::map<std::string, torch::Tensor> state;
  collect_module_state("generalist", *model, state);
  return state;
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::vector<std::string> lines;
  std::ifstream in(path);
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  return lines;
}

// Keeps the header and rows whose leading step column passes `keep`.
void truncate_csv(const fs::path& path, const std::function<bool(int64_t)>& keep) {
  if (!fs::exists(path)) return;
  auto lines = read_lines(path);
  std::ofstream out(path, std::ios::trunc);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (i == 0) {
      out << lines[i] << "\n";
      continue;
    }
    if (lines[i].empty()) continue;
    if (keep(std::stoll(lines[i].substr(0, lines[i].find(','))))) out << lines[i] << "\n";
  }
}

std::string opt_fmt(const std::optional<double>& v) { return v ? fmt(*v) : ""; }

json metrics_json(const AggregateMetrics& a) {
  return json{{"dice", a.dice},
              {"iou", a.iou},
              {"hd95", a.hd95 ? json(*a.hd95) : json(nullptr)},
              {"asd", a.asd ? json(*a.asd) : json(nullptr)},
              {"undefined_surface", a.undefined_surface}};
}

std::string ckpt_name(int64_t step) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "ckpt_%06lld.ckpt", static_cast<long long>(step));
  return buf;
}

}  // namespace

std::vector<LabeledSample> build_validation_data(const ExperimentConfig& config) {
  const auto& d = config.data;
  if (d.source == DataSource::synthetic)
    return generate_synthetic_dataset(synthetic_spec(d, d.val_count, d.val_seed, "val"));
  auto ds = read_directory_dataset(d.root);
  auto& held_out = !ds.val.empty() ? ds.val : ds.test;
  if (held_out.empty()) throw DataError("directory dataset " + d.root + " has no val or test samples in split.txt");
  return resize_samples(std::move(held_out), d.image_size);
}

TrainingData build_training_data(const ExperimentConfig& config) {
  const auto& d = config.data;
  std::vector<LabeledSample> pool;
  if (d.source == DataSource::synthetic) {
    pool = generate_synthetic_dataset(synthetic_spec(d, d.train_count, d.seed, "train"));
  } else {
    pool = resize_samples(read_directory_dataset(d.root).train, d.image_size);
    if (pool.empty()) throw DataError("directory dataset " + d.root + " has no training samples");
  }
  TrainingData out;
  out.split = std::make_shared<DatasetSplit>(split_labeled(std::move(pool), d.labeled_ratio, d.split_seed));
  out.validation = build_validation_data(config);
  return out;
}

fs::path warm_start_cache_dir(const ExperimentConfig& config) {
  if (!config.warm_start.cache_dir.empty()) return config.warm_start.cache_dir;
  return fs::path(config.output.run_dir) / "warm_start";
}

std::map<std::string, torch::Tensor> warm_start_state(const ExperimentConfig& config, const fs::path& cache_dir) {
  const auto key = warm_key(config);
  const auto path = cache_dir / ("warm_" + sha256_hex(key.dump()).substr(0, 16) + ".ckpt");
  if (fs::exists(path)) {
    auto ck = load_checkpoint(path);
    if (ck.config != key) throw DataError("warm-start cache entry does not match its key: " + path.string());
    return ck.tensors;
  }
  Checkpoint ck;
  ck.step = config.warm_start.iterations;
  ck.config = key;
  ck.tensors = train_warm_start(config);
  save_checkpoint(ck, path);
  return ck.tensors;
}

void apply_warm_start(GeneralistImpl& generalist, const std::map<std::string, torch::Tensor>& state) {
  torch::NoGradGuard no_grad;
  auto copy = [&](const std::string& name, torch::Tensor& dst) {
    if (name.find("adapter") != std::string::npos) return;
    std::string source = name;
    if (name.rfind("decoder", 0) == 0) source = "decoder1" + name.substr(name.find('.'));
    auto it = state.find("generalist." + source);
    if (it == state.end()) throw DataError("warm-start state is missing '" + source + "'");
    if (it->second.sizes() != dst.sizes()) throw DataError("warm-start tensor '" + source + "' has a different shape");
    dst.copy_(it->second);
  };
  for (auto& item : generalist.named_parameters(true)) copy(item.key(), item.value());
  for (auto& item : generalist.named_buffers(true)) copy(item.key(), item.value());
}

ModelSet build_models(const ExperimentConfig& config, const std::map<std::string, torch::Tensor>* warm) {
  ModelSet models;
  models.generalist = Generalist(config.generalist, derive_seed(config.seed, 0));
  if (warm) apply_warm_start(*models.generalist, *warm);
  switch (config.strategy.kind) {
    case StrategyKind::peft_sam:
    case StrategyKind::dual_sam: break;
    case StrategyKind::sp_sam:
      models.specialist = build_specialist(config.specialist, derive_seed(config.seed, 1));
      models.specialist2 = build_specialist(config.specialist2, derive_seed(config.seed, 2));
      models.fusion = FusionModule(config.generalist.mask_prompt_size(), derive_seed(config.seed, 3));
      break;
    case StrategyKind::sc_sam:
      models.specialist = build_specialist(config.specialist, derive_seed(config.seed, 1));
      break;
  }
  return models;
}

TrainingSession::TrainingSession(const ExperimentConfig& config, bool apply_warm) : config_(resolve(config)) {
  validate_or_throw(config_);
  if (config_.deterministic) torch::set_num_threads(1);
  data_ = build_training_data(config_);
  if (apply_warm && config_.warm_start.enabled) {
    auto state = warm_start_state(config_, warm_start_cache_dir(config_));
    models_ = build_models(config_, &state);
  } else {
    models_ = build_models(config_);
  }

  BatchConfig bc;
  bc.labeled_per_batch = config_.optim.labeled_per_batch;
  bc.unlabeled_per_batch = config_.optim.unlabeled_per_batch;
  bc.seed = config_.seed;
  bc.labeled_augmentation = config_.data.augment ? config_.data.weak : AugmentationConfig::disabled();
  bc.unlabeled_augmentation = config_.data.augment ? config_.data.strong : AugmentationConfig::disabled();
  batches_ = std::make_unique<BatchIterator>(data_.split, bc);

  for (auto& [prefix, module] : models_.named_models()) {
    auto& group = (prefix == "generalist" || prefix == "fusion") ? adam_params_ : sgd_params_;
    for (auto& item : module->named_parameters(true))
      if (item.value().requires_grad()) group.emplace_back(prefix + "." + item.key(), item.value());
  }
  auto tensors = [](const NamedParameters& named) {
    std::vector<torch::Tensor> out;
    for (const auto& [_, p] : named) out.push_back(p);
    return out;
  };
  adam_ = std::make_unique<torch::optim::Adam>(
      tensors(adam_params_), torch::optim::AdamOptions(config_.optim.generalist_lr)
                                 .betas({config_.optim.adam_beta1, config_.optim.adam_beta2}));
  if (!sgd_params_.empty())
    sgd_ = std::make_unique<torch::optim::SGD>(
        tensors(sgd_params_),
        torch::optim::SGDOptions(config_.optim.specialist_lr).momentum(config_.optim.specialist_momentum));
}

PromptSource TrainingSession::eval_prompt_source() const {
  if (config_.output.eval_prompt_source.empty()) return default_prompt_source(config_.strategy.kind);
  return prompt_source_from_string(config_.output.eval_prompt_source);
}

StepOutput TrainingSession::train_step() {
  models_.train(true);
  auto batch = batches_->batch_at(step_);
  auto rng = make_rng(config_.seed, {kStepStream, static_cast<std::uint64_t>(step_)});
  StepContext ctx{step_, &rng, nullptr};
  adam_->zero_grad();
  if (sgd_) sgd_->zero_grad();
  auto out = run_step(config_.strategy, batch, models_, ctx);
  out.total_loss.backward();
  adam_->step();
  if (sgd_) sgd_->step();
  ++step_;
  return out;
}

MetricReport TrainingSession::validate() {
  auto report = evaluate_model(models_, data_.validation, eval_prompt_source(), config_.seed,
                               config_.output.eval_batch_size);
  report.step = step_;
  report.config_hash = config_hash(config_);
  return report;
}

Checkpoint TrainingSession::checkpoint() const {
  Checkpoint ck;
  ck.step = step_;
  ck.config = config_;
  ck.extra = json{{"strategy", to_string(config_.strategy.kind)}};
  auto models = models_;
  for (auto& [prefix, module] : models.named_models()) collect_module_state(prefix, *module, ck.tensors);
  collect_adam_state("adam", *adam_, adam_params_, ck.tensors);
  if (sgd_) collect_sgd_state("sgd", *sgd_, sgd_params_, ck.tensors);
  return ck;
}

void TrainingSession::restore(const Checkpoint& ck) {
  const auto saved = resolve(ck.config.get<ExperimentConfig>());
  const auto diffs = architecture_differences(saved, config_);
  if (!diffs.empty()) {
    std::string msg = "checkpoint architecture differs from the config:";
    for (const auto& d : diffs) msg += " " + d;
    throw ConfigError(msg);
  }
  for (auto& [prefix, module] : models_.named_models()) restore_module_state(prefix, *module, ck.tensors);
  restore_adam_state("adam", *adam_, adam_params_, ck.tensors);
  if (sgd_) restore_sgd_state("sgd", *sgd_, sgd_params_, ck.tensors);
  step_ = ck.step;
}

RunResult train(const ExperimentConfig& config, const std::optional<fs::path>& resume_from) {
  const auto cfg = resolve(config);
  validate_or_throw(cfg);
  const fs::path run_dir = cfg.output.run_dir;
  fs::create_directories(run_dir);
  fs::remove(run_dir / "FAILED");
  fs::remove(run_dir / "summary.json");

  RunResult result;
  result.run_dir = run_dir;
  try {
    save_config(cfg, run_dir / "config.json");
    fs::create_directories(run_dir / "checkpoints");
    fs::create_directories(run_dir / "metrics");
    TrainingSession session(cfg);

    const auto names = component_names(cfg.strategy.kind);
    const auto losses_path = run_dir / "losses.csv";
    const auto val_path = run_dir / "validation.csv";
    if (resume_from) {
      auto ck = load_checkpoint(*resume_from);
      session.restore(ck);
      truncate_csv(losses_path, [&](int64_t s) { return s < ck.step; });
      truncate_csv(val_path, [&](int64_t s) { return s <= ck.step; });
    }
    if (!resume_from || !fs::exists(losses_path)) {
      std::ofstream out(losses_path, std::ios::trunc);
      out << "step,omega";
      for (const auto& n : names) out << "," << n;
      out << ",total\n";
    }
    if (!resume_from || !fs::exists(val_path)) {
      std::ofstream out(val_path, std::ios::trunc);
      out << "step,prompt_source,dice,iou,hd95,asd,undefined_surface\n";
    }
    std::ofstream losses(losses_path, std::ios::app);
    std::ofstream validation(val_path, std::ios::app);

    auto record_eval = [&](const MetricReport& report, const std::string& stem) {
      report.write_csv(run_dir / "metrics" / (stem + ".csv"));
      report.write_json(run_dir / "metrics" / (stem + ".json"));
      const auto& a = report.aggregate;
      validation << report.step << "," << report.prompt_source << "," << fmt(a.dice) << "," << fmt(a.iou) << ","
                 << opt_fmt(a.hd95) << "," << opt_fmt(a.asd) << "," << a.undefined_surface << "\n";
      validation.flush();
      if (!validation) throw Error("failed writing " + val_path.string());
    };

    if (!resume_from) save_checkpoint(session.checkpoint(), run_dir / "checkpoints" / ckpt_name(0));
    const int64_t total = cfg.optim.iterations;
    while (session.step() < total) {
      const int64_t t = session.step();
      auto out = session.train_step();
      const auto comps = out.components();
      losses << t << "," << fmt(out.omega);
      for (const auto& n : names) {
        losses << ",";
        if (auto it = comps.find(n); it != comps.end()) losses << fmt(it->second);
      }
      result.final_loss = out.total_loss.item<double>();
      losses << "," << fmt(*result.final_loss) << "\n";
      if (!losses) throw Error("failed writing " + losses_path.string());
      const int64_t s = session.step();
      if (s % cfg.output.checkpoint_interval == 0 && s != total)
        save_checkpoint(session.checkpoint(), run_dir / "checkpoints" / ckpt_name(s));
      if (s % cfg.output.eval_interval == 0 && s != total) {
        char stem[32];
        std::snprintf(stem, sizeof(stem), "eval_%06lld", static_cast<long long>(s));
        record_eval(session.validate(), stem);
      }
    }
    losses.flush();

    result.steps = session.step();
    result.final_report = session.validate();
    record_eval(result.final_report, "final");
    if (total > 0) {
      save_checkpoint(session.checkpoint(), run_dir / "checkpoints" / ckpt_name(total));
      fs::copy_file(run_dir / "checkpoints" / ckpt_name(total), run_dir / "checkpoints" / "final.ckpt",
                    fs::copy_options::overwrite_existing);
    }
    losses.close();
    validation.close();
    if (cfg.output.plots) emit_plots(run_dir);

    json files = json::object();
    for (const auto& entry : fs::recursive_directory_iterator(run_dir)) {
      if (!entry.is_regular_file()) continue;
      const auto rel = fs::relative(entry.path(), run_dir).generic_string();
      if (rel == "summary.json" || rel == "FAILED") continue;
      files[rel] = sha256_file(entry.path());
    }
    json summary{{"name", cfg.name},
                 {"status", "completed"},
                 {"strategy", to_string(cfg.strategy.kind)},
                 {"steps", result.steps},
                 {"final_loss", result.final_loss ? json(*result.final_loss) : json(nullptr)},
                 {"final_metrics", metrics_json(result.final_report.aggregate)},
                 {"prompt_source", result.final_report.prompt_source},
                 {"config_hash", config_hash(cfg)},
                 {"files", files}};
    std::ofstream out(run_dir / "summary.json", std::ios::trunc);
    out << summary.dump(2) << "\n";
    if (!out) throw Error("failed writing summary.json");
  } catch (const std::exception& e) {
    std::ofstream marker(run_dir / "FAILED", std::ios::trunc);
    marker << e.what() << "\n";
    throw;
  }
  return result;
}

MetricReport evaluate_checkpoint(const fs::path& checkpoint, const std::optional<fs::path>& data_config,
                                 std::optional<PromptSource> source) {
  if (!fs::exists(checkpoint)) throw ConfigError("checkpoint not found: " + checkpoint.string());
  auto ck = load_checkpoint(checkpoint);
  const auto saved = resolve(ck.config.get<ExperimentConfig>());
  auto cfg = saved;
  if (data_config) {
    std::ifstream in(*data_config);
    if (!in) throw ConfigError("cannot open data config " + data_config->string());
    json patch;
    try {
      patch = json::parse(in, nullptr, true, true);
    } catch (const json::exception& e) {
      throw ConfigError("data config " + data_config->string() + ": " + e.what());
    }
    json merged = ck.config;
    merged.merge_patch(patch);
    try {
      cfg = resolve(merged.get<ExperimentConfig>());
    } catch (const json::exception& e) {
      throw ConfigError("data config " + data_config->string() + ": " + e.what());
    }
    const auto diffs = architecture_differences(saved, cfg);
    if (!diffs.empty()) {
      std::string msg = "data config is incompatible with the checkpoint; differing fields:";
      for (const auto& d : diffs) msg += " " + d;
      throw ConfigError(msg);
    }
    validate_or_throw(cfg);
  }
  auto models = build_models(cfg);
  for (auto& [prefix, module] : models.named_models()) restore_module_state(prefix, *module, ck.tensors);
  PromptSource src = source ? *source
                            : (cfg.output.eval_prompt_source.empty() ? default_prompt_source(cfg.strategy.kind)
                                                                     : prompt_source_from_string(cfg.output.eval_prompt_source));
  auto report = evaluate_model(models, build_validation_data(cfg), src, cfg.seed, cfg.output.eval_batch_size);
  report.step = ck.step;
  report.config_hash = config_hash(cfg);
  return report;
}

std::vector<std::string> verify_run(const fs::path& run_dir) {
  std::vector<std::string> problems;
  if (fs::exists(run_dir / "FAILED")) problems.push_back("FAILED marker present");
  const auto summary_path = run_dir / "summary.json";
  if (!fs::exists(summary_path)) {
    problems.push_back("summary.json missing");
    return problems;
  }
  json summary;
  try {
    std::ifstream in(summary_path);
    summary = json::parse(in);
  } catch (const json::exception& e) {
    problems.push_back(std::string("summary.json unreadable: ") + e.what());
    return problems;
  }
  if (summary.value("status", "") != "completed") problems.push_back("run status is not completed");
  const json files = summary.value("files", json::object());
  for (const auto& [rel, hash] : files.items()) {
    const auto path = run_dir / rel;
    if (!fs::exists(path)) problems.push_back("missing file " + rel);
    else if (sha256_file(path) != hash.get<std::string>()) problems.push_back("hash mismatch " + rel);
  }
  try {
    if (config_hash(load_config(run_dir / "config.json")) != summary.value("config_hash", ""))
      problems.push_back("config.json does not match the recorded config hash");
  } catch (const Error& e) {
    problems.push_back(std::string("config.json: ") + e.what());
  }
  return problems;
}

}  // namespace scsam
