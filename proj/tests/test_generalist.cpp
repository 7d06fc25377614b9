#include <doctest.h>

#include <algorithm>
#include <set>

#include "doctest_torch.hpp"
#include "helpers.hpp"
#include "scsam/error.hpp"
#include "scsam/generalist.hpp"
#include "scsam/losses.hpp"
#include "scsam/prompts.hpp"
#include "scsam/rng.hpp"
#include "scsam/specialist.hpp"

using namespace scsam;

namespace {

int64_t numel(const std::vector<torch::Tensor>& ps) {
  int64_t n = 0;
  for (const auto& p : ps) n += p.numel();
  return n;
}

std::vector<torch::Tensor> snapshot(const std::vector<torch::Tensor>& ps) {
  std::vector<torch::Tensor> out;
  for (const auto& p : ps) out.push_back(p.detach().clone());
  return out;
}

bool all_equal(const std::vector<torch::Tensor>& a, const std::vector<torch::Tensor>& b) {
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!torch::equal(a[i], b[i])) return false;
  return true;
}

PromptSet points_at(std::vector<std::array<int, 3>> pts) {
  PromptSet p;
  for (auto [y, x, l] : pts) p.points.push_back({y, x, l ? PointLabel::foreground : PointLabel::background});
  return p;
}

// Disc of radius r centred at (cy, cx) on an s x s grid.
torch::Tensor disc(int s, double cy, double cx, double r) {
  auto ys = torch::arange(s, torch::kFloat32).view({s, 1});
  auto xs = torch::arange(s, torch::kFloat32).view({1, s});
  return ((ys - cy).pow(2) + (xs - cx).pow(2) <= r * r).to(torch::kInt64);
}

}  // namespace

TEST_SUITE("generalist") {
  TEST_CASE("128x128 with patch 16 gives an 8x8 token grid") {
    GeneralistConfig cfg;
    cfg.embed_dim = 32;
    cfg.encoder_depth = 1;
    cfg.num_heads = 2;
    Generalist g(cfg, 0);
    auto emb = g->encode_image(torch::rand({2, 1, 128, 128}));
    CHECK(emb.sizes() == torch::IntArrayRef({2, 32, 8, 8}));
    CHECK_THROWS_AS(g->encode_image(torch::rand({1, 1, 64, 64})), DataError);
  }

  TEST_CASE("config invariants") {
    auto cfg = test::tiny_generalist();
    cfg.num_heads = 3;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = test::tiny_generalist();
    cfg.adapter_dim = cfg.embed_dim;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = test::tiny_generalist();
    cfg.num_decoders = 3;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }

  TEST_CASE("freezing contract after one optimizer step") {
    Generalist g(test::tiny_generalist(), 1);
    auto base = snapshot(g->base_encoder_parameters());
    auto adapters = snapshot(g->adapter_parameters());
    for (const auto& p : g->base_encoder_parameters()) CHECK_FALSE(p.requires_grad());
    torch::optim::Adam opt(g->trainable_parameters(), torch::optim::AdamOptions(1e-3));
    auto x = torch::rand({2, 1, 32, 32});
    auto y = (torch::rand({2, 32, 32}) > 0.5).to(torch::kInt64);
    auto rng = make_rng(0);
    seg_loss(g->predict(x, sample_points_batch(y, 5, 5, rng)), y).backward();
    opt.step();
    CHECK(all_equal(base, snapshot(g->base_encoder_parameters())));
    CHECK_FALSE(all_equal(adapters, snapshot(g->adapter_parameters())));
  }

  TEST_CASE("adapter parameters are under 15% of the encoder on the default config") {
    Generalist g(GeneralistConfig{}, 0);
    const double ratio = static_cast<double>(numel(g->adapter_parameters())) / numel(g->encoder_parameters());
    MESSAGE("adapter / encoder parameter ratio = " << ratio);
    CHECK(ratio < 0.15);
    CHECK(ratio > 0.0);
  }

  TEST_CASE("fresh adapters are the identity") {
    Generalist g(test::tiny_generalist(), 3);
    int ups = 0;
    for (const auto& item : g->named_parameters()) {
      if (item.key().find("adapter") == std::string::npos || item.key().find(".up.") == std::string::npos) continue;
      CHECK(item.value().abs().max().item<double>() == 0.0);
      ++ups;
    }
    CHECK(ups == 2 * 2 * 2);
    auto x = torch::randn({3, 5, 32});
    Adapter a(32, 4);
    for (auto& p : a->named_parameters())
      if (p.key().rfind("up.", 0) == 0) p.value().data().zero_();
    CHECK(torch::equal(a->forward(x), x));
  }

  TEST_CASE("prompt token counts") {
    auto cfg = test::tiny_generalist();
    cfg.learnable_box_prompt = false;
    PromptEncoder pe(cfg);
    std::vector<std::array<int, 3>> pts;
    for (int i = 0; i < 10; ++i) pts.push_back({i, 2 * i, i % 2});
    auto ten = points_at(pts);
    CHECK(pe->forward({ten}).sparse.size(1) == 10);
    auto boxed = ten;
    boxed.box = BoxPrompt{1, 1, 20, 20};
    CHECK(pe->forward({boxed}).sparse.size(1) == 12);

    PromptEncoder learned(test::tiny_generalist());
    auto empty = learned->forward({PromptSet{}});
    CHECK(empty.sparse.size(1) == 2);
    CHECK(empty.valid.all().item<bool>());
  }

  TEST_CASE("out-of-bounds prompts are errors") {
    PromptEncoder pe(test::tiny_generalist());
    CHECK_THROWS_AS(pe->forward({points_at({{32, 0, 1}})}), DataError);
    CHECK_THROWS_AS(pe->forward({points_at({{0, -1, 1}})}), DataError);
    PromptSet bad_mask;
    bad_mask.mask_prompt = torch::zeros({5, 5});
    CHECK_THROWS_AS(pe->forward({bad_mask}), DataError);
  }

  TEST_CASE("mask output is invariant to point order") {
    Generalist g(test::tiny_generalist(), 2);
    g->eval();
    auto x = torch::rand({1, 1, 32, 32});
    auto rng = make_rng(3);
    for (int trial = 0; trial < 5; ++trial) {
      auto mask = (torch::rand({32, 32}) > 0.6).to(torch::kInt64);
      auto p = sample_points(mask, 5, 5, rng);
      auto shuffled = p;
      std::shuffle(shuffled.points.begin(), shuffled.points.end(), rng);
      auto a = g->predict(x, {p}), b = g->predict(x, {shuffled});
      CHECK((a - b).abs().max().item<double>() < 1e-5);
    }
  }

  TEST_CASE("padding a shorter prompt set does not change its output") {
    Generalist g(test::tiny_generalist(), 2);
    g->eval();
    auto x = torch::rand({1, 1, 32, 32});
    auto few = points_at({{3, 3, 1}});
    auto many = points_at({{1, 1, 1}, {2, 2, 0}, {5, 6, 1}, {9, 9, 0}});
    auto alone = g->predict(x, {few});
    auto batched = g->predict(torch::cat({x, x}), {few, many});
    CHECK((alone[0] - batched[0]).abs().max().item<double>() < 1e-5);
  }

  TEST_CASE("two decoders never share parameters") {
    auto cfg = test::tiny_generalist();
    cfg.num_decoders = 2;
    Generalist g(cfg, 0);
    std::set<const void*> d1;
    for (const auto& p : g->decoder_parameters(1)) d1.insert(p.unsafeGetTensorImpl());
    for (const auto& p : g->decoder_parameters(2)) CHECK(d1.count(p.unsafeGetTensorImpl()) == 0);
    CHECK_THROWS_AS(g->decoder_parameters(3), ConfigError);
    auto emb = g->encode_image(torch::rand({1, 1, 32, 32}));
    auto prompts = g->encode_prompts(empty_prompts(1));
    CHECK(g->decode_mask(emb, prompts, 2).sizes() == torch::IntArrayRef({1, 2, 32, 32}));
    CHECK_THROWS_AS(g->decode_mask(emb, prompts, 3), ConfigError);
    Generalist single(test::tiny_generalist(), 0);
    CHECK_THROWS_AS(single->decode_mask(single->encode_image(torch::rand({1, 1, 32, 32})),
                                        single->encode_prompts(empty_prompts(1)), 2),
                    ConfigError);
  }

  TEST_CASE("encoding is prompt-independent") {
    Generalist g(test::tiny_generalist(), 4);
    g->eval();
    auto x = torch::rand({1, 1, 32, 32});
    auto emb = g->encode_image(x);
    for (const auto& p : {PromptSet{}, points_at({{4, 4, 1}, {20, 20, 0}})}) {
      auto direct = g->predict(x, {p});
      auto reused = g->decode_mask(emb, g->encode_prompts({p}));
      CHECK((direct - reused).abs().max().item<double>() < 1e-6);
    }
  }

  TEST_CASE("fusion: shape, errors and gradient flow to both inputs") {
    FusionModule f(16, 0);
    auto p1 = torch::randn({2, 2, 32, 32}, torch::requires_grad());
    auto p2 = torch::randn({2, 2, 32, 32}, torch::requires_grad());
    auto out = fuse_predictions(*f, p1, p2);
    CHECK(out.sizes() == torch::IntArrayRef({2, 1, 16, 16}));
    out.sum().backward();
    CHECK(p1.grad().abs().sum().item<double>() > 0);
    CHECK(p2.grad().abs().sum().item<double>() > 0);
    CHECK_THROWS_AS(fuse_predictions(*f, torch::randn({2, 2, 32, 32}), torch::randn({2, 2, 16, 16})), DataError);
  }

  TEST_CASE("fusion of two confident copies correlates with the mask after brief training") {
    FusionModule f(16, 1);
    torch::optim::Adam opt(f->parameters(), torch::optim::AdamOptions(1e-2));
    auto rng = make_rng(5);
    std::uniform_real_distribution<double> pos(8, 24), rad(4, 8);
    auto make = [&] {
      auto m = disc(32, pos(rng), pos(rng), rad(rng));
      auto logits = torch::stack({(1 - m) * 10.0 - 5.0, m * 10.0 - 5.0}).to(torch::kFloat32).unsqueeze(0);
      return std::pair{m, logits};
    };
    for (int i = 0; i < 60; ++i) {
      auto [m, logits] = make();
      auto out = fuse_predictions(*f, logits, logits);
      auto target = torch::nn::functional::adaptive_avg_pool2d(m.to(torch::kFloat32).view({1, 1, 32, 32}),
                                                               torch::nn::functional::AdaptiveAvgPool2dFuncOptions(16));
      opt.zero_grad();
      torch::nn::functional::binary_cross_entropy_with_logits(out, target).backward();
      opt.step();
    }
    auto [m, logits] = make();
    torch::NoGradGuard no_grad;
    auto out = fuse_predictions(*f, logits, logits).flatten();
    auto target = torch::nn::functional::adaptive_avg_pool2d(m.to(torch::kFloat32).view({1, 1, 32, 32}),
                                                             torch::nn::functional::AdaptiveAvgPool2dFuncOptions(16))
                      .flatten();
    const double cos = torch::cosine_similarity(out - out.mean(), target - target.mean(), 0).item<double>();
    MESSAGE("cosine similarity " << cos);
    CHECK(cos > 0.0);
  }

  TEST_CASE("moving the foreground points selects the other object") {
    auto cfg = test::tiny_generalist();
    cfg.freeze_encoder_base = false;
    cfg.learnable_box_prompt = false;
    Generalist g(cfg, 6);
    torch::optim::Adam opt(g->trainable_parameters(), torch::optim::AdamOptions(2e-3));
    auto rng = make_rng(8);
    std::uniform_real_distribution<double> left(6, 10), right(22, 26), row(6, 26), rad(3.5, 5.5);
    struct Scene {
      torch::Tensor image, a, b;
    };
    auto scene = [&] {
      auto a = disc(32, row(rng), left(rng), rad(rng));
      auto b = disc(32, row(rng), right(rng), rad(rng));
      if (std::uniform_int_distribution<int>(0, 1)(rng)) a = a.flip({1}), b = b.flip({1});
      auto image = ((a + b).clamp_max(1).to(torch::kFloat32) * 0.6 + 0.2).unsqueeze(0);
      return Scene{image, a, b};
    };
    // Prompt with points on one object and background points elsewhere,
    // including on the other object.
    auto prompt = [&](const torch::Tensor& target) { return sample_points(target, 3, 3, rng); };
    for (int step = 0; step < 400; ++step) {
      std::vector<torch::Tensor> xs, ys;
      std::vector<PromptSet> ps;
      for (int i = 0; i < 8; ++i) {
        auto s = scene();
        const bool pick_a = i % 2 == 0;
        xs.push_back(s.image);
        ys.push_back(pick_a ? s.a : s.b);
        ps.push_back(prompt(pick_a ? s.a : s.b));
      }
      opt.zero_grad();
      auto y = torch::stack(ys);
      seg_loss(g->predict(torch::stack(xs), ps), y).backward();
      opt.step();
    }
    g->eval();
    torch::NoGradGuard no_grad;
    int flips = 0;
    const int trials = 20;
    for (int t = 0; t < trials; ++t) {
      auto s = scene();
      auto overlap = [](const torch::Tensor& pred, const torch::Tensor& m) { return (pred * m).sum().item<double>(); };
      auto pa = pseudo_label(g->predict(s.image.unsqueeze(0), {prompt(s.a)}))[0];
      auto pb = pseudo_label(g->predict(s.image.unsqueeze(0), {prompt(s.b)}))[0];
      if (overlap(pa, s.a) > overlap(pa, s.b) && overlap(pb, s.b) > overlap(pb, s.a)) ++flips;
    }
    MESSAGE(flips << " of " << trials << " scenes follow the prompt");
    CHECK(flips >= 16);
  }
}
