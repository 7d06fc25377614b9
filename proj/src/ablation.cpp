#include "scsam/ablation.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "scsam/error.hpp"
#include "scsam/plots.hpp"
#include "scsam/trainer.hpp"

namespace fs = std::filesystem;

namespace scsam {

std::string to_string(AblationAxis axis) {
  switch (axis) {
    case AblationAxis::strategy: return "strategy";
    case AblationAxis::ramp_up: return "ramp_up";
    case AblationAxis::labeled_ratio: return "labeled_ratio";
  }
  return "strategy";
}

AblationAxis ablation_axis_from_string(const std::string& name) {
  if (name == "strategy") return AblationAxis::strategy;
  if (name == "ramp_up") return AblationAxis::ramp_up;
  if (name == "labeled_ratio") return AblationAxis::labeled_ratio;
  throw ConfigError("unknown ablation axis '" + name + "' (strategy, ramp_up, labeled_ratio)");
}

ExperimentConfig apply_axis_value(const ExperimentConfig& base, AblationAxis axis, const std::string& value) {
  auto c = base;
  switch (axis) {
    case AblationAxis::strategy:
      c.strategy.kind = strategy_from_string(value);
      if (c.strategy.kind != StrategyKind::dual_sam) c.generalist.num_decoders = 1;
      if (c.strategy.kind != StrategyKind::peft_sam && c.optim.unlabeled_per_batch == 0)
        c.optim.unlabeled_per_batch = base.optim.labeled_per_batch;
      break;
    case AblationAxis::ramp_up:
      if (value == "on" || value == "true") c.strategy.ramp_up_enabled = true;
      else if (value == "off" || value == "false") c.strategy.ramp_up_enabled = false;
      else throw ConfigError("ramp_up values are on/off, got '" + value + "'");
      break;
    case AblationAxis::labeled_ratio: {
      std::size_t used = 0;
      double r = 0;
      try {
        r = std::stod(value, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != value.size() || !(r > 0 && r <= 1)) throw ConfigError("labeled_ratio value must be in (0, 1], got '" + value + "'");
      c.data.labeled_ratio = r;
      break;
    }
  }
  return resolve(c);
}

Stat summarize(const std::vector<double>& values) {
  Stat s;
  s.n = static_cast<int>(values.size());
  if (values.empty()) return s;
  for (double v : values) s.mean += v;
  s.mean /= s.n;
  if (s.n > 1) {
    double ss = 0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / (s.n - 1));
  }
  return s;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::string stat_cells(const Stat& s) { return s.n == 0 ? "undefined,undefined" : fmt(s.mean) + "," + fmt(s.std); }

}  // namespace

AblationResult ablate(const ExperimentConfig& base, AblationAxis axis, const std::vector<std::string>& values,
                      const std::vector<std::uint64_t>& seeds, const fs::path& out_dir) {
  if (values.empty()) throw ConfigError("ablation needs at least one value");
  if (seeds.empty()) throw ConfigError("ablation needs at least one seed");
  // Reject bad axis values and invalid configs before any run starts.
  for (const auto& v : values) validate_or_throw(apply_axis_value(base, axis, v));

  AblationResult result;
  fs::create_directories(out_dir);
  for (const auto& v : values) {
    AblationRow row;
    row.value = v;
    std::vector<double> dice, iou, hd95, asd;
    for (auto seed : seeds) {
      auto cfg = apply_axis_value(base, axis, v);
      row.strategy = to_string(cfg.strategy.kind);
      cfg.seed = seed;
      cfg.data.split_seed = seed;
      cfg.name = base.name + "_" + to_string(axis) + "_" + v + "_seed" + std::to_string(seed);
      if (cfg.warm_start.cache_dir.empty()) cfg.warm_start.cache_dir = (out_dir / "warm_start").string();
      cfg.output.run_dir = (out_dir / (to_string(axis) + "_" + v) / ("seed_" + std::to_string(seed))).string();
      AblationRun run;
      run.value = v;
      run.seed = seed;
      run.run_dir = cfg.output.run_dir;
      ++row.runs;
      try {
        auto r = train(cfg);
        const auto& a = r.final_report.aggregate;
        run.dice = a.dice;
        run.iou = a.iou;
        run.hd95 = a.hd95;
        run.asd = a.asd;
        dice.push_back(a.dice);
        iou.push_back(a.iou);
        if (a.hd95) hd95.push_back(*a.hd95);
        if (a.asd) asd.push_back(*a.asd);
      } catch (const std::exception& e) {
        run.failed = true;
        run.error = e.what();
        ++row.failed;
        std::cerr << "ablation run " << run.run_dir << " failed: " << e.what() << "\n";
      }
      result.runs.push_back(run);
    }
    row.dice = summarize(dice);
    row.iou = summarize(iou);
    row.hd95 = summarize(hd95);
    row.asd = summarize(asd);
    result.rows.push_back(row);
  }

  result.table = out_dir / ("ablation_" + to_string(axis) + ".csv");
  std::ofstream csv(result.table, std::ios::trunc);
  csv << "axis,value,strategy,status,runs,failed,dice_mean,dice_std,iou_mean,iou_std,hd95_mean,hd95_std,asd_mean,"
         "asd_std\n";
  std::vector<std::string> labels;
  std::vector<double> means, stds;
  for (const auto& r : result.rows) {
    csv << to_string(axis) << "," << r.value << "," << r.strategy << "," << (r.row_failed() ? "FAILED" : "ok") << ","
        << r.runs << "," << r.failed << "," << stat_cells(r.dice) << "," << stat_cells(r.iou) << ","
        << stat_cells(r.hd95) << "," << stat_cells(r.asd) << "\n";
    labels.push_back(r.value);
    means.push_back(r.dice.n ? r.dice.mean : NAN);
    stds.push_back(r.dice.n ? r.dice.std : NAN);
  }
  csv.close();
  if (!csv) throw Error("failed writing " + result.table.string());
  result.plot = out_dir / ("ablation_" + to_string(axis) + ".png");
  bar_plot(result.plot, "final Dice by " + to_string(axis), labels, means, stds);
  return result;
}

}  // namespace scsam
