#include <doctest.h>

#include <set>

#include "doctest_torch.hpp"
#include "scsam/error.hpp"
#include "scsam/prompts.hpp"
#include "scsam/rng.hpp"

using namespace scsam;

namespace {

struct Counts {
  int fg = 0, bg = 0;
};

Counts check_points(const PromptSet& p, const torch::Tensor& mask) {
  Counts c;
  std::set<std::pair<int, int>> seen;
  bool background_started = false;
  auto acc = mask.accessor<int64_t, 2>();
  for (const auto& pt : p.points) {
    REQUIRE(pt.y >= 0);
    REQUIRE(pt.y < mask.size(0));
    REQUIRE(pt.x >= 0);
    REQUIRE(pt.x < mask.size(1));
    CHECK(seen.insert({pt.y, pt.x}).second);
    const bool fg = pt.label == PointLabel::foreground;
    CHECK(acc[pt.y][pt.x] == (fg ? 1 : 0));
    if (fg) {
      CHECK_FALSE(background_started);
      ++c.fg;
    } else {
      background_started = true;
      ++c.bg;
    }
  }
  return c;
}

}  // namespace

TEST_SUITE("prompts") {
  TEST_CASE("five foreground and five background points") {
    auto mask = torch::zeros({16, 16}, torch::kInt64);
    mask.slice(0, 4, 12).slice(1, 4, 12).fill_(1);
    auto rng = make_rng(0);
    auto p = sample_points(mask, rng);
    auto c = check_points(p, mask);
    CHECK(c.fg == 5);
    CHECK(c.bg == 5);
    CHECK_FALSE(p.box.has_value());
    CHECK_FALSE(p.mask_prompt.defined());
  }

  TEST_CASE("short classes contribute every pixel they have") {
    auto rng = make_rng(1);
    auto empty = torch::zeros({8, 8}, torch::kInt64);
    auto c = check_points(sample_points(empty, rng), empty);
    CHECK(c.fg == 0);
    CHECK(c.bg == 5);
    auto three = torch::zeros({8, 8}, torch::kInt64);
    three[0][0] = three[3][4] = three[7][7] = 1;
    c = check_points(sample_points(three, rng), three);
    CHECK(c.fg == 3);
    CHECK(c.bg == 5);
    auto full = torch::ones({8, 8}, torch::kInt64);
    c = check_points(sample_points(full, rng), full);
    CHECK(c.fg == 5);
    CHECK(c.bg == 0);
  }

  TEST_CASE("sampling is reproducible from the stream") {
    auto mask = (torch::rand({20, 20}, torch::TensorOptions().dtype(torch::kFloat32)) > 0.5).to(torch::kInt64);
    auto r1 = make_rng(5), r2 = make_rng(5);
    auto a = sample_points(mask, r1), b = sample_points(mask, r2);
    REQUIRE(a.points.size() == b.points.size());
    for (std::size_t i = 0; i < a.points.size(); ++i) {
      CHECK(a.points[i].y == b.points[i].y);
      CHECK(a.points[i].x == b.points[i].x);
    }
  }

  TEST_CASE("1000 random masks honour the point contract") {
    auto rng = make_rng(42);
    std::uniform_int_distribution<int> size(4, 24), count(0, 12);
    std::uniform_real_distribution<double> density(0.0, 1.0);
    for (int i = 0; i < 1000; ++i) {
      const int h = size(rng), w = size(rng);
      const double d = i % 10 == 0 ? (i % 20 == 0 ? 0.0 : 1.0) : density(rng);
      auto gen = torch::make_generator<at::CPUGeneratorImpl>(static_cast<uint64_t>(i));
      auto mask = (torch::rand({h, w}, gen) < d).to(torch::kInt64);
      const int nf = count(rng), nb = count(rng);
      const int64_t fg_pixels = mask.sum().item<int64_t>();
      auto c = check_points(sample_points(mask, nf, nb, rng), mask);
      CHECK(c.fg == std::min<int64_t>(nf, fg_pixels));
      CHECK(c.bg == std::min<int64_t>(nb, h * w - fg_pixels));
    }
  }

  TEST_CASE("batch sampling and errors") {
    auto masks = torch::zeros({3, 8, 8}, torch::kInt64);
    masks[1].fill_(1);
    auto rng = make_rng(2);
    auto batch = sample_points_batch(masks, 2, 2, rng);
    REQUIRE(batch.size() == 3);
    CHECK(batch[0].points.size() == 2);
    CHECK(batch[1].points.size() == 2);
    CHECK(empty_prompts(4).size() == 4);
    CHECK(empty_prompts(4)[0].points.empty());
    CHECK_THROWS_AS(sample_points(torch::zeros({2, 8, 8}, torch::kInt64), rng), DataError);
    CHECK_THROWS_AS(sample_points(masks[0], -1, 2, rng), ConfigError);
  }
}
