#pragma once

#include <filesystem>
#include <string>

#include "scsam/config.hpp"

namespace scsam::test {

// A fresh empty directory under the test working directory.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::current_path() / "scratch" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline GeneralistConfig tiny_generalist(int image_size = 32) {
  GeneralistConfig g;
  g.image_size = image_size;
  g.patch_size = 8;
  g.embed_dim = 32;
  g.encoder_depth = 2;
  g.num_heads = 2;
  g.mlp_ratio = 2;
  g.adapter_dim = 4;
  g.decoder_depth = 1;
  return g;
}

inline SpecialistConfig tiny_specialist() {
  SpecialistConfig s;
  s.base_width = 4;
  s.depth = 2;
  return s;
}

// Small end-to-end config that trains in seconds.
inline ExperimentConfig tiny_experiment(StrategyKind kind, const std::filesystem::path& run_dir) {
  ExperimentConfig c;
  c.name = "tiny";
  c.seed = 3;
  c.data.image_size = 32;
  c.data.train_count = 40;
  c.data.val_count = 6;
  c.data.labeled_ratio = 0.1;
  c.data.seed = 11;
  c.data.val_seed = 12;
  c.specialist = tiny_specialist();
  c.specialist2 = tiny_specialist();
  c.specialist2.base_width = 8;
  c.generalist = tiny_generalist(32);
  c.warm_start.iterations = 4;
  c.warm_start.batch_size = 2;
  c.warm_start.count = 8;
  c.strategy.kind = kind;
  c.strategy.t_max = 5;
  c.optim.iterations = 6;
  c.optim.labeled_per_batch = 2;
  c.optim.unlabeled_per_batch = 2;
  c.output.run_dir = run_dir.string();
  c.output.checkpoint_interval = 3;
  c.output.eval_interval = 3;
  c.output.eval_batch_size = 4;
  return resolve(c);
}

}  // namespace scsam::test
