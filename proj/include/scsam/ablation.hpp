#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "scsam/config.hpp"

namespace scsam {

enum class AblationAxis { strategy, ramp_up, labeled_ratio };

std::string to_string(AblationAxis axis);
AblationAxis ablation_axis_from_string(const std::string& name);

// Copy of `base` with the axis set to `value` ("sc_sam", "on"/"off", "0.05", ...).
ExperimentConfig apply_axis_value(const ExperimentConfig& base, AblationAxis axis, const std::string& value);

struct AblationRun {
  std::string value;
  std::uint64_t seed = 0;
  std::filesystem::path run_dir;
  bool failed = false;
  std::string error;
  double dice = 0.0, iou = 0.0;
  std::optional<double> hd95, asd;
};

struct Stat {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for a single run
  int n = 0;
};

Stat summarize(const std::vector<double>& values);

struct AblationRow {
  std::string value;
  std::string strategy;
  int runs = 0;
  int failed = 0;
  Stat dice, iou, hd95, asd;
  bool row_failed() const { return runs == failed; }
};

struct AblationResult {
  std::vector<AblationRun> runs;
  std::vector<AblationRow> rows;
  std::filesystem::path table;
  std::filesystem::path plot;
};

// Runs values x seeds under `out_dir`/<axis>_<value>/seed_<seed>. Each seed sets
// both config.seed and data.split_seed. A failing run is recorded and the
// sweep continues; a value whose runs all fail is written as a FAILED row.
AblationResult ablate(const ExperimentConfig& base, AblationAxis axis, const std::vector<std::string>& values,
                      const std::vector<std::uint64_t>& seeds, const std::filesystem::path& out_dir);

}  // namespace scsam
