#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace scsam {

/// Image of shape (C, H, W), float32, C in {1, 3}, values in [0, 1].
class ImageTensor {
 public:
  explicit ImageTensor(torch::Tensor data);

  const torch::Tensor& data() const { return data_; }
  int64_t channels() const { return data_.size(0); }
  int64_t height() const { return data_.size(1); }
  int64_t width() const { return data_.size(2); }

 private:
  torch::Tensor data_;
};

/// Binary mask of shape (H, W), uint8, values in {0, 1}.
class MaskTensor {
 public:
  explicit MaskTensor(torch::Tensor data);

  const torch::Tensor& data() const { return data_; }
  int64_t height() const { return data_.size(0); }
  int64_t width() const { return data_.size(1); }
  int64_t foreground_count() const;

 private:
  torch::Tensor data_;
};

struct LabeledSample {
  ImageTensor image;
  MaskTensor mask;
  std::string name;
};

struct UnlabeledSample {
  ImageTensor image;
  std::string name;
};

/// Labeled set D_l and unlabeled set D_u carved out of one source pool.
struct DatasetSplit {
  std::vector<LabeledSample> labeled;
  std::vector<UnlabeledSample> unlabeled;
  double labeled_ratio = 1.0;
  // Positions in the source pool, for auditing disjointness.
  std::vector<std::size_t> labeled_indices;
  std::vector<std::size_t> unlabeled_indices;
};

/// Images and masks read from root/images and root/masks. Without a
/// split.txt manifest every pair lands in `train`.
struct DirectoryDataset {
  std::vector<LabeledSample> train;
  std::vector<LabeledSample> val;
  std::vector<LabeledSample> test;
};

// Per-image min-max normalization to [0, 1]. Constant images map to 0.
torch::Tensor normalize_min_max(const torch::Tensor& image);

DirectoryDataset read_directory_dataset(const std::filesystem::path& root);

// Deterministic labeled/unlabeled split: floor(ratio * pool) labeled samples
// (at least one); the rest lose their masks and become unlabeled.
DatasetSplit split_labeled(std::vector<LabeledSample> pool, double labeled_ratio,
                           std::uint64_t seed);

DatasetSplit load_directory_dataset(const std::filesystem::path& root, double labeled_ratio,
                                    std::uint64_t seed);

// Writes samples in the directory format (8-bit PNG images, 0/255 masks) and,
// when tags are given, a split.txt manifest with one "name tag" line per sample.
void write_directory_dataset(const std::vector<LabeledSample>& samples,
                             const std::filesystem::path& root,
                             const std::vector<std::string>& split_tags = {});

}  // namespace scsam
