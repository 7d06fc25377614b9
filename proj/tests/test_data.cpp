#include <doctest.h>

#include <fstream>
#include <set>

#include <opencv2/imgcodecs.hpp>

#include "doctest_torch.hpp"
#include "helpers.hpp"
#include "scsam/data.hpp"
#include "scsam/error.hpp"
#include "scsam/synthetic.hpp"

using namespace scsam;
namespace fs = std::filesystem;

namespace {

std::vector<LabeledSample> pool(int n, std::uint64_t seed = 5) {
  SyntheticSpec spec;
  spec.count = n;
  spec.height = spec.width = 32;
  spec.seed = seed;
  return generate_synthetic_dataset(spec);
}

}  // namespace

TEST_SUITE("data") {
  TEST_CASE("image tensor validation") {
    CHECK_NOTHROW(ImageTensor(torch::rand({1, 8, 8})));
    CHECK_NOTHROW(ImageTensor(torch::rand({3, 8, 8})));
    CHECK_THROWS_AS(ImageTensor(torch::rand({2, 8, 8})), DataError);
    CHECK_THROWS_AS(ImageTensor(torch::rand({8, 8})), DataError);
    CHECK_THROWS_AS(ImageTensor(torch::rand({1, 8, 8}) + 1.5), DataError);
    auto nan = torch::rand({1, 4, 4});
    nan[0][1][1] = NAN;
    CHECK_THROWS_AS(ImageTensor{nan}, DataError);
  }

  TEST_CASE("mask tensor validation") {
    auto m = torch::zeros({4, 4}, torch::kInt64);
    m[1][1] = 1;
    MaskTensor mask(m);
    CHECK(mask.foreground_count() == 1);
    CHECK((mask.data().scalar_type() == torch::kUInt8));
    m[2][2] = 2;
    CHECK_THROWS_AS(MaskTensor{m}, DataError);
    CHECK_THROWS_AS(MaskTensor(torch::zeros({1, 4, 4})), DataError);
  }

  TEST_CASE("min-max normalization") {
    auto n = normalize_min_max(torch::tensor({2.0f, 4.0f, 6.0f}).view({1, 1, 3}));
    CHECK(n[0][0][0].item<float>() == doctest::Approx(0.0));
    CHECK(n[0][0][1].item<float>() == doctest::Approx(0.5));
    CHECK(n[0][0][2].item<float>() == doctest::Approx(1.0));
    CHECK(normalize_min_max(torch::full({1, 2, 2}, 3.0f)).abs().sum().item<float>() == 0.0f);
  }

  TEST_CASE("split arithmetic") {
    auto s = split_labeled(pool(100), 0.05, 7);
    CHECK(s.labeled.size() == 5);
    CHECK(s.unlabeled.size() == 95);
    auto full = split_labeled(pool(100), 1.0, 7);
    CHECK(full.labeled.size() == 100);
    CHECK(full.unlabeled.empty());
    auto tiny = split_labeled(pool(10), 0.01, 7);
    CHECK(tiny.labeled.size() == 1);
    CHECK_THROWS_AS(split_labeled(pool(10), 0.0, 7), ConfigError);
    CHECK_THROWS_AS(split_labeled(pool(10), 1.5, 7), ConfigError);
  }

  TEST_CASE("split determinism and disjointness") {
    auto a = split_labeled(pool(60), 0.1, 42);
    auto b = split_labeled(pool(60), 0.1, 42);
    auto c = split_labeled(pool(60), 0.1, 43);
    CHECK(a.labeled_indices == b.labeled_indices);
    CHECK(a.unlabeled_indices == b.unlabeled_indices);
    CHECK(a.labeled_indices != c.labeled_indices);
    std::set<std::size_t> all(a.labeled_indices.begin(), a.labeled_indices.end());
    for (auto i : a.unlabeled_indices) CHECK(all.insert(i).second);
    CHECK(all.size() == 60);
  }

  TEST_CASE("directory round trip with manifest") {
    auto dir = test::scratch_dir("dir_roundtrip");
    auto samples = pool(10);
    std::vector<std::string> tags(10, "train");
    tags[7] = tags[8] = "val";
    tags[9] = "test";
    write_directory_dataset(samples, dir, tags);
    auto ds = read_directory_dataset(dir);
    CHECK(ds.train.size() == 7);
    CHECK(ds.val.size() == 2);
    CHECK(ds.test.size() == 1);
    for (const auto& s : ds.train) {
      auto it = std::find_if(samples.begin(), samples.end(), [&](const auto& o) { return o.name == s.name; });
      REQUIRE(it != samples.end());
      CHECK(torch::equal(it->mask.data(), s.mask.data()));
    }
    auto split = load_directory_dataset(dir, 0.3, 1);
    CHECK(split.labeled.size() == 2);
    CHECK(split.unlabeled.size() == 5);
  }

  TEST_CASE("directory of 100 pairs splits 5/95") {
    auto dir = test::scratch_dir("dir_100");
    write_directory_dataset(pool(100), dir);
    auto split = load_directory_dataset(dir, 0.05, 7);
    CHECK(split.labeled.size() == 5);
    CHECK(split.unlabeled.size() == 95);
    auto again = load_directory_dataset(dir, 0.05, 7);
    CHECK(split.labeled_indices == again.labeled_indices);
  }

  TEST_CASE("35/5/10 manifest protocol") {
    auto dir = test::scratch_dir("dir_351510");
    std::vector<std::string> tags;
    for (int i = 0; i < 50; ++i) tags.push_back(i < 35 ? "train" : (i < 40 ? "val" : "test"));
    write_directory_dataset(pool(50), dir, tags);
    auto ds = read_directory_dataset(dir);
    CHECK(ds.train.size() == 35);
    CHECK(ds.val.size() == 5);
    CHECK(ds.test.size() == 10);
  }

  TEST_CASE("directory errors") {
    auto dir = test::scratch_dir("dir_errors");
    CHECK_THROWS_AS(read_directory_dataset(dir), DataError);

    write_directory_dataset(pool(3), dir);
    auto victim = dir / "masks" / (pool(3)[1].name + ".png");
    fs::remove(victim);
    try {
      read_directory_dataset(dir);
      FAIL("expected a missing-mask error");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find(pool(3)[1].name) != std::string::npos);
    }

    auto dir2 = test::scratch_dir("dir_nonbinary");
    write_directory_dataset(pool(2), dir2);
    cv::Mat bad(32, 32, CV_8UC1, cv::Scalar(0));
    bad.at<uint8_t>(3, 3) = 128;
    cv::imwrite((dir2 / "masks" / (pool(2)[0].name + ".png")).string(), bad);
    CHECK_THROWS_AS(read_directory_dataset(dir2), DataError);
  }
}
