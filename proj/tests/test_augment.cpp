#include <doctest.h>

#include <algorithm>

#include "doctest_torch.hpp"
#include "scsam/augment.hpp"
#include "scsam/rng.hpp"
#include "scsam/synthetic.hpp"

using namespace scsam;

namespace {

LabeledSample sample(std::uint64_t seed = 1) {
  SyntheticSpec spec;
  spec.count = 1;
  spec.noise_level = 0.1;
  spec.seed = seed;
  return generate_synthetic_dataset(spec)[0];
}

}  // namespace

TEST_SUITE("augment") {
  TEST_CASE("disabled pipeline is the identity") {
    auto s = sample();
    auto rng = make_rng(1);
    auto out = augment(s.image, s.mask, AugmentationConfig::disabled(), rng);
    CHECK(torch::equal(out.image.data(), s.image.data()));
    CHECK(torch::equal(out.mask->data(), s.mask.data()));
    CHECK(AugmentationConfig::disabled().transform_list().empty());
  }

  TEST_CASE("horizontal flip twice is the identity") {
    auto s = sample();
    auto cfg = AugmentationConfig::disabled();
    cfg.hflip_prob = 1.0;
    auto rng = make_rng(2);
    auto once = augment(s.image, s.mask, cfg, rng);
    CHECK_FALSE(torch::equal(once.image.data(), s.image.data()));
    auto twice = augment(once.image, once.mask, cfg, rng);
    CHECK(torch::equal(twice.image.data(), s.image.data()));
    CHECK(torch::equal(twice.mask->data(), s.mask.data()));
  }

  TEST_CASE("strong pipeline is a superset of weak and adds grid distortion") {
    auto weak = AugmentationConfig::weak().transform_list();
    auto strong = AugmentationConfig::strong().transform_list();
    for (const auto& t : weak) CHECK(std::find(strong.begin(), strong.end(), t) != strong.end());
    CHECK(std::find(strong.begin(), strong.end(), "grid_distortion") != strong.end());
    CHECK(std::find(weak.begin(), weak.end(), "grid_distortion") == weak.end());
  }

  TEST_CASE("mask binarity and image range over 10000 augmented samples") {
    auto s = sample(3);
    auto strong = AugmentationConfig::strong();
    strong.shift_scale_rotate_prob = strong.grid_distortion_prob = 1.0;
    bool binary = true, in_range = true;
    for (int i = 0; i < 10000; ++i) {
      auto rng = make_rng(11, {static_cast<std::uint64_t>(i)});
      auto out = augment(s.image, s.mask, i % 2 ? strong : AugmentationConfig::weak(), rng);
      const auto& m = out.mask->data();
      binary = binary && ((m == 0) | (m == 1)).all().item<bool>();
      const auto& im = out.image.data();
      in_range = in_range && im.min().item<float>() >= 0.0f && im.max().item<float>() <= 1.0f;
    }
    CHECK(binary);
    CHECK(in_range);
  }

  TEST_CASE("geometric consistency: a mask used as its own image") {
    auto s = sample(4);
    auto cfg = AugmentationConfig::strong();
    cfg.brightness_contrast_prob = 0.0;
    cfg.dropout_prob = 0.0;
    cfg.hflip_prob = cfg.vflip_prob = cfg.shift_scale_rotate_prob = cfg.grid_distortion_prob = 0.7;
    ImageTensor as_image(s.mask.data().to(torch::kFloat32).unsqueeze(0));
    for (int i = 0; i < 500; ++i) {
      auto rng = make_rng(21, {static_cast<std::uint64_t>(i)});
      auto out = augment(as_image, s.mask, cfg, rng);
      auto thresholded = (out.image.data()[0] >= 0.5).to(torch::kUInt8);
      REQUIRE(torch::equal(thresholded, out.mask->data()));
    }
  }

  TEST_CASE("image-only augmentation and determinism") {
    auto s = sample(5);
    auto r1 = make_rng(9), r2 = make_rng(9);
    auto a = augment(s.image, std::nullopt, AugmentationConfig::strong(), r1);
    auto b = augment(s.image, std::nullopt, AugmentationConfig::strong(), r2);
    CHECK_FALSE(a.mask.has_value());
    CHECK(torch::equal(a.image.data(), b.image.data()));
  }
}
