#include "scsam/batching.hpp"

#include <numeric>

#include "scsam/error.hpp"
#include "scsam/rng.hpp"

namespace scsam {

namespace {
constexpr std::uint64_t kLabeledStream = 0x1ab;
constexpr std::uint64_t kUnlabeledStream = 0x2ab;
constexpr std::uint64_t kAugmentStream = 0xa06;
}  // namespace

BatchIterator::BatchIterator(std::shared_ptr<const DatasetSplit> split, BatchConfig config)
    : split_(std::move(split)), config_(std::move(config)) {
  if (!split_) throw ConfigError("batch iterator needs a dataset split");
  if (config_.labeled_per_batch < 1) throw ConfigError("labeled_per_batch must be >= 1");
  if (config_.unlabeled_per_batch < 0) throw ConfigError("unlabeled_per_batch must be >= 0");
  if (split_->labeled.empty()) throw DataError("labeled pool is empty");
  if (config_.unlabeled_per_batch > 0 && split_->unlabeled.empty())
    throw ConfigError("unlabeled_per_batch > 0 but the unlabeled pool is empty");
}

std::vector<std::size_t> BatchIterator::pool_indices(std::size_t pool_size, int per_batch,
                                                     std::uint64_t stream, int64_t step) const {
  std::vector<std::size_t> out;
  out.reserve(static_cast<std::size_t>(per_batch));
  std::vector<std::size_t> perm;
  int64_t cached_epoch = -1;
  const auto n = static_cast<int64_t>(pool_size);
  for (int j = 0; j < per_batch; ++j) {
    const int64_t pos = step * per_batch + j;
    const int64_t epoch = pos / n;
    if (epoch != cached_epoch) {
      perm.resize(pool_size);
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      auto rng = make_rng(config_.seed, {stream, static_cast<std::uint64_t>(epoch)});
      std::shuffle(perm.begin(), perm.end(), rng);
      cached_epoch = epoch;
    }
    out.push_back(perm[static_cast<std::size_t>(pos % n)]);
  }
  return out;
}

std::vector<std::size_t> BatchIterator::labeled_indices_at(int64_t step) const {
  return pool_indices(split_->labeled.size(), config_.labeled_per_batch, kLabeledStream, step);
}

std::vector<std::size_t> BatchIterator::unlabeled_indices_at(int64_t step) const {
  if (config_.unlabeled_per_batch == 0) return {};
  return pool_indices(split_->unlabeled.size(), config_.unlabeled_per_batch, kUnlabeledStream, step);
}

MixedBatch BatchIterator::batch_at(int64_t step) const {
  if (step < 0) throw ConfigError("batch step must be non-negative");
  MixedBatch batch;
  batch.step = step;
  std::vector<torch::Tensor> images, masks, unlabeled;
  std::uint64_t slot = 0;
  for (auto idx : labeled_indices_at(step)) {
    const auto& s = split_->labeled[idx];
    auto rng = make_rng(config_.seed, {kAugmentStream, static_cast<std::uint64_t>(step), slot++});
    auto aug = augment(s.image, s.mask, config_.labeled_augmentation, rng);
    images.push_back(aug.image.data());
    masks.push_back(aug.mask->data().to(torch::kInt64));
  }
  for (auto idx : unlabeled_indices_at(step)) {
    auto rng = make_rng(config_.seed, {kAugmentStream, static_cast<std::uint64_t>(step), slot++});
    auto aug = augment(split_->unlabeled[idx].image, std::nullopt, config_.unlabeled_augmentation, rng);
    unlabeled.push_back(aug.image.data());
  }
  batch.labeled_images = torch::stack(images);
  batch.labeled_masks = torch::stack(masks);
  if (!unlabeled.empty()) {
    batch.unlabeled_images = torch::stack(unlabeled);
  } else {
    const auto& ref = batch.labeled_images;
    batch.unlabeled_images = torch::empty({0, ref.size(1), ref.size(2), ref.size(3)}, ref.options());
  }
  return batch;
}

MixedBatch BatchIterator::next() { return batch_at(step_++); }

}  // namespace scsam
