#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "doctest_torch.hpp"
#include "helpers.hpp"
#include "scsam/ablation.hpp"
#include "scsam/checkpoint.hpp"
#include "scsam/error.hpp"
#include "scsam/hashing.hpp"
#include "scsam/plots.hpp"
#include "scsam/trainer.hpp"

using namespace scsam;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> read_rows(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::ifstream in(p);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(SCSAM_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_SUITE("harness") {
  TEST_CASE("zero iterations leave only the initial checkpoint") {
    auto dir = test::scratch_dir("zero_iterations");
    auto c = test::tiny_experiment(StrategyKind::sc_sam, dir);
    c.optim.iterations = 0;
    auto result = train(c);
    CHECK(result.steps == 0);
    CHECK_FALSE(result.final_loss.has_value());
    std::vector<std::string> ckpts;
    for (const auto& e : fs::directory_iterator(dir / "checkpoints")) ckpts.push_back(e.path().filename().string());
    REQUIRE(ckpts.size() == 1);
    CHECK(ckpts[0] == "ckpt_000000.ckpt");
    CHECK(read_rows(dir / "losses.csv").size() == 1);
    CHECK(verify_run(dir).empty());
  }

  TEST_CASE("optimizer groups follow the model roles") {
    auto c = test::tiny_experiment(StrategyKind::sc_sam, test::scratch_dir("groups"));
    TrainingSession s(c);
    auto& adam = s.generalist_optimizer();
    REQUIRE(adam.param_groups().size() == 1);
    auto& ao = static_cast<torch::optim::AdamOptions&>(adam.param_groups()[0].options());
    CHECK(ao.lr() == doctest::Approx(1e-4));
    REQUIRE(s.specialist_optimizer() != nullptr);
    auto& so = static_cast<torch::optim::SGDOptions&>(s.specialist_optimizer()->param_groups()[0].options());
    CHECK(so.lr() == doctest::Approx(0.01));
    CHECK(so.momentum() == doctest::Approx(0.9));
    for (const auto& [name, p] : s.generalist_group()) CHECK(name.rfind("generalist.", 0) == 0);
    for (const auto& [name, p] : s.specialist_group()) CHECK(name.rfind("specialist.", 0) == 0);
    for (const auto& p : s.models().generalist->base_encoder_parameters())
      for (const auto& [name, q] : s.generalist_group()) CHECK_FALSE(p.is_same(q));

    auto peft = test::tiny_experiment(StrategyKind::peft_sam, test::scratch_dir("groups_peft"));
    TrainingSession ps(peft);
    CHECK(ps.specialist_optimizer() == nullptr);
    auto sp = test::tiny_experiment(StrategyKind::sp_sam, test::scratch_dir("groups_sp"));
    TrainingSession ss(sp);
    bool has_fusion = false;
    for (const auto& [name, p] : ss.generalist_group()) has_fusion |= name.rfind("fusion.", 0) == 0;
    CHECK(has_fusion);
  }

  TEST_CASE("training is deterministic") {
    auto a = test::scratch_dir("determinism_a"), b = test::scratch_dir("determinism_b");
    train(test::tiny_experiment(StrategyKind::sc_sam, a));
    train(test::tiny_experiment(StrategyKind::sc_sam, b));
    CHECK(read_file(a / "losses.csv") == read_file(b / "losses.csv"));
    CHECK(read_file(a / "validation.csv") == read_file(b / "validation.csv"));
  }

  TEST_CASE("resuming matches an uninterrupted run") {
    for (auto kind : {StrategyKind::sc_sam, StrategyKind::dual_sam}) {
      CAPTURE(to_string(kind));
      auto full = test::scratch_dir("resume_full_" + to_string(kind));
      auto resumed = test::scratch_dir("resume_part_" + to_string(kind));
      train(test::tiny_experiment(kind, full));
      fs::copy(full, resumed, fs::copy_options::recursive | fs::copy_options::overwrite_existing);
      fs::remove(resumed / "checkpoints" / "final.ckpt");
      auto cfg = test::tiny_experiment(kind, resumed);
      train(cfg, resumed / "checkpoints" / "ckpt_000003.ckpt");
      auto x = read_rows(full / "losses.csv"), y = read_rows(resumed / "losses.csv");
      REQUIRE(x.size() == y.size());
      for (std::size_t r = 1; r < x.size(); ++r) {
        REQUIRE(x[r].size() == y[r].size());
        for (std::size_t k = 0; k < x[r].size(); ++k) {
          if (x[r][k].empty()) {
            CHECK(y[r][k].empty());
            continue;
          }
          CHECK(std::abs(std::stod(x[r][k]) - std::stod(y[r][k])) <= 1e-5);
        }
      }
      CHECK(read_rows(resumed / "validation.csv").size() == read_rows(full / "validation.csv").size());
      CHECK(verify_run(resumed).empty());
    }
  }

  TEST_CASE("checkpoints round trip byte for byte") {
    auto dir = test::scratch_dir("checkpoint_bytes");
    TrainingSession s(test::tiny_experiment(StrategyKind::sp_sam, dir));
    s.train_step();
    save_checkpoint(s.checkpoint(), dir / "a.ckpt");
    save_checkpoint(load_checkpoint(dir / "a.ckpt"), dir / "b.ckpt");
    CHECK(read_file(dir / "a.ckpt") == read_file(dir / "b.ckpt"));
    CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), Error);
    std::ofstream(dir / "junk.ckpt") << "not a checkpoint";
    CHECK_THROWS_AS(load_checkpoint(dir / "junk.ckpt"), DataError);
    auto other = test::tiny_experiment(StrategyKind::sp_sam, dir);
    other.generalist.embed_dim = 64;
    TrainingSession t(other);
    try {
      t.restore(load_checkpoint(dir / "a.ckpt"));
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("generalist.embed_dim") != std::string::npos);
    }
  }

  TEST_CASE("evaluating the final checkpoint reproduces the run's report") {
    auto dir = test::scratch_dir("final_eval");
    auto result = train(test::tiny_experiment(StrategyKind::sc_sam, dir));
    auto again = evaluate_checkpoint(dir / "checkpoints" / "final.ckpt", std::nullopt, std::nullopt);
    REQUIRE(again.per_image.size() == result.final_report.per_image.size());
    CHECK(std::abs(again.aggregate.dice - result.final_report.aggregate.dice) <= 1e-6);
    CHECK(std::abs(again.aggregate.iou - result.final_report.aggregate.iou) <= 1e-6);
    for (std::size_t i = 0; i < again.per_image.size(); ++i)
      CHECK(std::abs(again.per_image[i].dice - result.final_report.per_image[i].dice) <= 1e-6);
    auto box = evaluate_checkpoint(dir / "checkpoints" / "final.ckpt", std::nullopt, PromptSource::learned_box_only);
    auto gt = evaluate_checkpoint(dir / "checkpoints" / "final.ckpt", std::nullopt, PromptSource::gt_points);
    CHECK(box.prompt_source == "learned_box_only");
    CHECK(gt.prompt_source == "gt_points");
    CHECK_THROWS_AS(evaluate_checkpoint(dir / "nope.ckpt", std::nullopt, std::nullopt), ConfigError);

    auto patch = dir / "patch.json";
    std::ofstream(patch) << R"({"generalist": {"embed_dim": 64}})";
    try {
      evaluate_checkpoint(dir / "checkpoints" / "final.ckpt", patch, std::nullopt);
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("generalist.embed_dim") != std::string::npos);
    }
  }

  TEST_CASE("command line exit codes") {
    auto dir = test::scratch_dir("cli");
    CHECK(run_cli("evaluate --checkpoint " + (dir / "missing.ckpt").string() + " --prompt-source gt_points") == 2);
    CHECK(run_cli("train --config " + (dir / "missing.json").string()) == 2);
    CHECK(run_cli("no-such-command") == 2);
    CHECK(run_cli("generate-data --out " + (dir / "data").string() + " --count 5 --seed 1 --size 32") == 0);
    CHECK(fs::exists(dir / "data" / "images"));
    auto cfg = test::tiny_experiment(StrategyKind::peft_sam, dir / "run");
    cfg.optim.iterations = 2;
    save_config(cfg, dir / "cfg.json");
    CHECK(run_cli("train --config " + (dir / "cfg.json").string()) == 0);
    CHECK(run_cli("verify --run " + (dir / "run").string()) == 0);
    CHECK(run_cli("train --config " + (dir / "cfg.json").string() + " --resume " + (dir / "none.ckpt").string()) == 2);
  }

  TEST_CASE("run verification detects tampering and failures") {
    auto dir = test::scratch_dir("verify");
    auto c = test::tiny_experiment(StrategyKind::peft_sam, dir);
    c.optim.iterations = 2;
    train(c);
    CHECK(verify_run(dir).empty());
    std::ofstream(dir / "losses.csv", std::ios::app) << "999,0,0,0\n";
    auto problems = verify_run(dir);
    REQUIRE_FALSE(problems.empty());
    CHECK(problems[0].find("losses.csv") != std::string::npos);

    auto bad = test::scratch_dir("failing_run");
    auto empty_data = test::scratch_dir("failing_run_data");
    auto f = test::tiny_experiment(StrategyKind::sc_sam, bad);
    f.data.source = DataSource::directory;
    f.data.root = empty_data.string();
    CHECK_THROWS_AS(train(f), DataError);
    CHECK(fs::exists(bad / "FAILED"));
    CHECK_FALSE(verify_run(bad).empty());
  }

  TEST_CASE("plots are written per group and regenerated identically") {
    auto dir = test::scratch_dir("plots");
    auto c = test::tiny_experiment(StrategyKind::sc_sam, dir);
    c.strategy.t_max = 3;
    c.optim.iterations = 8;
    train(c);
    auto first = emit_plots(dir);
    CHECK(first.images.size() == 4);
    std::map<fs::path, std::string> bytes;
    for (const auto& p : first.images) bytes[p] = sha256_file(p);
    auto second = emit_plots(dir);
    for (const auto& p : second.images) CHECK(sha256_file(p) == bytes[p]);
    auto series = read_csv_series(dir / "losses.csv");
    const auto& omega = series.at("omega");
    REQUIRE(omega.y.size() == 8);
    CHECK(omega.y.front() == doctest::Approx(0.3679).epsilon(1e-4));
    for (std::size_t i = 3; i < omega.y.size(); ++i) CHECK(omega.y[i] == 1.0);

    auto peft = test::scratch_dir("plots_peft");
    auto pc = test::tiny_experiment(StrategyKind::peft_sam, peft);
    pc.optim.iterations = 2;
    pc.output.plots = false;
    train(pc);
    fs::remove(peft / "validation.csv");
    auto partial = emit_plots(peft);
    CHECK_FALSE(partial.warnings.empty());
  }

  TEST_CASE("ablation sweeps aggregate seeds and record failures") {
    auto dir = test::scratch_dir("ablation");
    auto base = test::tiny_experiment(StrategyKind::sc_sam, dir / "unused");
    base.optim.iterations = 2;
    base.output.plots = false;
    auto result = ablate(base, AblationAxis::strategy, {"peft_sam", "sc_sam"}, {0, 1, 2}, dir);
    REQUIRE(result.rows.size() == 2);
    for (const auto& row : result.rows) {
      CHECK(row.runs == 3);
      CHECK(row.failed == 0);
      CHECK(row.dice.n == 3);
      CHECK(row.dice.std >= 0.0);
    }
    CHECK(result.rows[0].strategy == "peft_sam");
    CHECK(fs::exists(result.table));
    CHECK(fs::exists(result.plot));
    CHECK(read_rows(result.table).size() == 3);

    auto ratios = ablate(base, AblationAxis::labeled_ratio, {"0.1", "0.5"}, {0}, dir / "ratio");
    CHECK(ratios.rows.size() == 2);

    CHECK_THROWS_AS(ablate(base, AblationAxis::strategy, {"mean_teacher"}, {0}, dir / "bad"), ConfigError);
    CHECK_THROWS_AS(ablate(base, AblationAxis::labeled_ratio, {"1.5"}, {0}, dir / "bad"), ConfigError);

    auto broken = base;
    broken.data.source = DataSource::directory;
    broken.data.root = test::scratch_dir("ablation_empty").string();
    auto failed = ablate(broken, AblationAxis::ramp_up, {"on"}, {0}, dir / "failing");
    REQUIRE(failed.rows.size() == 1);
    CHECK(failed.rows[0].row_failed());
    CHECK(read_file(failed.table).find("FAILED") != std::string::npos);
  }

  TEST_CASE("summary statistics") {
    auto s = summarize({1.0, 2.0, 3.0});
    CHECK(s.mean == doctest::Approx(2.0));
    CHECK(s.std == doctest::Approx(1.0));
    CHECK(summarize({4.0}).std == 0.0);
    CHECK(summarize({}).n == 0);
  }
}
