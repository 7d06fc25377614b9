#include <cstdint>
#include <filesystem>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "scsam/ablation.hpp"
#include "scsam/error.hpp"
#include "scsam/plots.hpp"
#include "scsam/synthetic.hpp"
#include "scsam/trainer.hpp"

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_csv(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

void print_report(const scsam::MetricReport& r) {
  const auto& a = r.aggregate;
  std::cout << "prompt_source=" << r.prompt_source << " step=" << r.step << " dice=" << a.dice << " iou=" << a.iou
            << " hd95=" << (a.hd95 ? std::to_string(*a.hd95) : "undefined")
            << " asd=" << (a.asd ? std::to_string(*a.asd) : "undefined") << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Specialist-generalist co-training for semi-supervised binary segmentation"};
  app.require_subcommand(1);

  auto* train = app.add_subcommand("train", "train one configured run");
  std::string config_path, out_dir, resume;
  bool deterministic = false;
  train->add_option("--config", config_path, "experiment config (JSON)")->required();
  train->add_option("--out", out_dir, "run directory (overrides output.run_dir)");
  train->add_flag("--deterministic", deterministic, "single-threaded deterministic mode");
  train->add_option("--resume", resume, "checkpoint to resume from");

  auto* evaluate = app.add_subcommand("evaluate", "evaluate a checkpoint");
  std::string checkpoint, data_config, prompt_source, eval_out;
  evaluate->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  evaluate->add_option("--data", data_config, "config whose data section (and any overrides) to evaluate on");
  evaluate->add_option("--prompt-source", prompt_source,
                       "gt_points, specialist_points, learned_box_only, fused_mask, cross_decoder_points, "
                       "specialist_output");
  evaluate->add_option("--out", eval_out, "report directory (default: <checkpoint dir>/../eval)");

  auto* ablate = app.add_subcommand("ablate", "grid ablation over one axis");
  std::string axis, values, seeds, ablate_out = "runs/ablation";
  ablate->add_option("--config", config_path, "base experiment config")->required();
  ablate->add_option("--axis", axis, "strategy, ramp_up or labeled_ratio")->required();
  ablate->add_option("--values", values, "comma-separated axis values")->required();
  ablate->add_option("--seeds", seeds, "comma-separated seeds")->required();
  ablate->add_option("--out", ablate_out, "sweep directory");

  auto* generate = app.add_subcommand("generate-data", "write a synthetic dataset in directory format");
  std::string gen_out, family = "blob";
  int count = 0, size = 128;
  std::uint64_t gen_seed = 0;
  double noise = 0.1, val_fraction = 0.2;
  generate->add_option("--out", gen_out, "output directory")->required();
  generate->add_option("--count", count, "number of images")->required()->check(CLI::PositiveNumber);
  generate->add_option("--seed", gen_seed, "generation seed")->required();
  generate->add_option("--size", size, "image side in pixels")->check(CLI::Range(32, 4096));
  generate->add_option("--family", family, "blob, ring or polyp_like");
  generate->add_option("--noise", noise, "Gaussian noise level")->check(CLI::Range(0.0, 1.0));
  generate->add_option("--val-fraction", val_fraction, "share of samples tagged val in split.txt")
      ->check(CLI::Range(0.0, 0.9));

  auto* plot = app.add_subcommand("plot", "re-emit the plots of a run");
  std::string run_dir;
  plot->add_option("--run", run_dir, "run directory")->required();

  auto* verify = app.add_subcommand("verify", "check a run directory against its summary");
  verify->add_option("--run", run_dir, "run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*train) {
      auto cfg = scsam::load_config(config_path);
      if (!out_dir.empty()) cfg.output.run_dir = out_dir;
      if (deterministic) cfg.deterministic = true;
      std::optional<fs::path> from;
      if (!resume.empty()) {
        if (!fs::exists(resume)) throw scsam::ConfigError("checkpoint not found: " + resume);
        from = resume;
      }
      auto result = scsam::train(cfg, from);
      std::cout << "run " << result.run_dir.string() << " finished after " << result.steps << " steps\n";
      print_report(result.final_report);
    } else if (*evaluate) {
      std::optional<fs::path> data;
      if (!data_config.empty()) data = data_config;
      std::optional<scsam::PromptSource> source;
      if (!prompt_source.empty()) source = scsam::prompt_source_from_string(prompt_source);
      auto report = scsam::evaluate_checkpoint(checkpoint, data, source);
      fs::path dir = eval_out.empty() ? fs::path(checkpoint).parent_path() / ".." / "eval" : fs::path(eval_out);
      fs::create_directories(dir);
      report.write_csv(dir / ("eval_" + report.prompt_source + ".csv"));
      report.write_json(dir / ("eval_" + report.prompt_source + ".json"));
      print_report(report);
    } else if (*ablate) {
      auto cfg = scsam::load_config(config_path);
      std::vector<std::uint64_t> seed_list;
      for (const auto& s : split_csv(seeds)) {
        try {
          seed_list.push_back(std::stoull(s));
        } catch (const std::exception&) {
          throw scsam::ConfigError("invalid seed '" + s + "'");
        }
      }
      auto result = scsam::ablate(cfg, scsam::ablation_axis_from_string(axis), split_csv(values), seed_list, ablate_out);
      std::cout << "table " << result.table.string() << "\nplot " << result.plot.string() << "\n";
      for (const auto& r : result.rows)
        std::cout << r.value << " (" << r.strategy << "): dice " << r.dice.mean << " +- " << r.dice.std << " over "
                  << r.dice.n << " runs" << (r.failed ? ", " + std::to_string(r.failed) + " failed" : "") << "\n";
      for (const auto& r : result.rows)
        if (r.failed) return 1;
    } else if (*generate) {
      scsam::SyntheticSpec spec;
      spec.count = count;
      spec.height = spec.width = size;
      spec.family = scsam::shape_family_from_string(family);
      spec.noise_level = noise;
      spec.seed = gen_seed;
      auto samples = scsam::generate_synthetic_dataset(spec);
      std::vector<std::string> tags(samples.size(), "train");
      const auto n_val = static_cast<std::size_t>(val_fraction * static_cast<double>(samples.size()));
      for (std::size_t i = samples.size() - n_val; i < samples.size(); ++i) tags[i] = "val";
      scsam::write_directory_dataset(samples, gen_out, tags);
      std::cout << "wrote " << samples.size() << " samples to " << gen_out << "\n";
    } else if (*plot) {
      if (!fs::is_directory(run_dir)) throw scsam::ConfigError("run directory not found: " + run_dir);
      auto out = scsam::emit_plots(run_dir);
      for (const auto& w : out.warnings) std::cerr << "warning: " << w << "\n";
      for (const auto& p : out.images) std::cout << p.string() << "\n";
    } else if (*verify) {
      auto problems = scsam::verify_run(run_dir);
      for (const auto& p : problems) std::cerr << p << "\n";
      if (!problems.empty()) return 1;
      std::cout << "ok\n";
    }
  } catch (const scsam::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
