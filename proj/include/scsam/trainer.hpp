#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "scsam/batching.hpp"
#include "scsam/checkpoint.hpp"
#include "scsam/config.hpp"
#include "scsam/evaluation.hpp"
#include "scsam/strategies.hpp"

namespace scsam {

struct TrainingData {
  std::shared_ptr<DatasetSplit> split;
  std::vector<LabeledSample> validation;
};

TrainingData build_training_data(const ExperimentConfig& config);
std::vector<LabeledSample> build_validation_data(const ExperimentConfig& config);

// Generalist weights after emulated pretraining, loaded from
// <cache_dir>/warm_<hash>.ckpt when present and trained otherwise. The result
// has a single decoder and untouched (identity) adapters.
std::map<std::string, torch::Tensor> warm_start_state(const ExperimentConfig& config,
                                                      const std::filesystem::path& cache_dir);

// Loads warm-start weights into a generalist: every decoder starts from the
// pretrained decoder, adapters keep their fresh initialization.
void apply_warm_start(GeneralistImpl& generalist, const std::map<std::string, torch::Tensor>& state);

// Freshly initialized models for the configured strategy. Warm-start weights
// are applied when `warm` is given.
ModelSet build_models(const ExperimentConfig& config, const std::map<std::string, torch::Tensor>* warm = nullptr);

std::filesystem::path warm_start_cache_dir(const ExperimentConfig& config);

/// One training run held in memory: models, both optimizers, the batch stream
/// and the step counter. Artifacts are written by train().
class TrainingSession {
 public:
  // `config` is resolved and validated here.
  explicit TrainingSession(const ExperimentConfig& config, bool apply_warm = true);

  StepOutput train_step();
  int64_t step() const { return step_; }
  const ExperimentConfig& config() const { return config_; }
  ModelSet& models() { return models_; }
  torch::optim::Adam& generalist_optimizer() { return *adam_; }
  torch::optim::SGD* specialist_optimizer() { return sgd_.get(); }
  const NamedParameters& generalist_group() const { return adam_params_; }
  const NamedParameters& specialist_group() const { return sgd_params_; }
  const TrainingData& data() const { return data_; }
  PromptSource eval_prompt_source() const;

  MetricReport validate();
  Checkpoint checkpoint() const;
  void restore(const Checkpoint& checkpoint);

 private:
  ExperimentConfig config_;
  TrainingData data_;
  ModelSet models_;
  std::unique_ptr<BatchIterator> batches_;
  NamedParameters adam_params_, sgd_params_;
  std::unique_ptr<torch::optim::Adam> adam_;
  std::unique_ptr<torch::optim::SGD> sgd_;
  int64_t step_ = 0;
};

struct RunResult {
  std::filesystem::path run_dir;
  int64_t steps = 0;
  std::optional<double> final_loss;
  MetricReport final_report;
};

// Full run with artifacts in config.output.run_dir: config.json, losses.csv,
// validation.csv, metrics/, checkpoints/, plots and summary.json. Failures
// leave a FAILED marker and rethrow. With `resume_from` training continues
// from that checkpoint and rows at or after its step are dropped from the CSVs.
RunResult train(const ExperimentConfig& config, const std::optional<std::filesystem::path>& resume_from = {});

// Loads a checkpoint, rebuilds the models from its config (with overrides from
// `data_config`, if given) and evaluates the configured validation data.
MetricReport evaluate_checkpoint(const std::filesystem::path& checkpoint,
                                 const std::optional<std::filesystem::path>& data_config,
                                 std::optional<PromptSource> source);

// Problems found in a run directory; empty when every file listed in
// summary.json exists with the recorded hash.
std::vector<std::string> verify_run(const std::filesystem::path& run_dir);

}  // namespace scsam
