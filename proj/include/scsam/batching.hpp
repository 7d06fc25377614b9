#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "scsam/augment.hpp"
#include "scsam/data.hpp"

namespace scsam {

struct MixedBatch {
  torch::Tensor labeled_images;    // (Nl, C, H, W) float
  torch::Tensor labeled_masks;     // (Nl, H, W) int64
  torch::Tensor unlabeled_images;  // (Nu, C, H, W) float, Nu may be 0
  int64_t step = 0;

  int64_t num_labeled() const { return labeled_images.defined() ? labeled_images.size(0) : 0; }
  int64_t num_unlabeled() const { return unlabeled_images.defined() ? unlabeled_images.size(0) : 0; }
};

struct BatchConfig {
  int labeled_per_batch = 4;
  int unlabeled_per_batch = 4;
  std::uint64_t seed = 0;
  AugmentationConfig labeled_augmentation = AugmentationConfig::weak();
  AugmentationConfig unlabeled_augmentation = AugmentationConfig::strong();
};

// Infinite stream of mixed batches. Both pools are consumed as concatenated
// per-epoch permutations, so batch t is a pure function of (split, config, t):
// seek() is exact and resuming training needs nothing but the step number.
class BatchIterator {
 public:
  BatchIterator(std::shared_ptr<const DatasetSplit> split, BatchConfig config);

  MixedBatch next();
  MixedBatch batch_at(int64_t step) const;
  void seek(int64_t step) { step_ = step; }
  int64_t position() const { return step_; }

  std::vector<std::size_t> labeled_indices_at(int64_t step) const;
  std::vector<std::size_t> unlabeled_indices_at(int64_t step) const;

 private:
  std::vector<std::size_t> pool_indices(std::size_t pool_size, int per_batch, std::uint64_t stream,
                                        int64_t step) const;

  std::shared_ptr<const DatasetSplit> split_;
  BatchConfig config_;
  int64_t step_ = 0;
};

}  // namespace scsam
