#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "scsam/data.hpp"

namespace scsam {

struct DiceIou {
  double dice = 0.0;
  double iou = 0.0;
};

// Both masks empty -> (1, 1).
DiceIou dice_iou(const MaskTensor& pred, const MaskTensor& gt);

struct Spacing {
  double row = 1.0;
  double col = 1.0;
};

/// HD95 and ASD in spacing units. Both are std::nullopt ("undefined") when
/// either mask is empty.
struct SurfaceDistances {
  std::optional<double> hd95;
  std::optional<double> asd;
  bool defined() const { return hd95.has_value(); }
};

// Foreground pixels with at least one 4-neighbour in the background; the
// image border counts as background. Returned as (row, col), row-major order.
std::vector<std::pair<int, int>> boundary_pixels(const MaskTensor& mask);

SurfaceDistances surface_distances(const MaskTensor& pred, const MaskTensor& gt, Spacing spacing = {});

// Percentile with linear interpolation between closest ranks (q in [0, 100]).
double percentile_linear(std::vector<double> values, double q);

struct ImageMetrics {
  std::size_t index = 0;
  std::string name;
  double dice = 0.0;
  double iou = 0.0;
  std::optional<double> hd95;
  std::optional<double> asd;
};

struct AggregateMetrics {
  double dice = 0.0;
  double iou = 0.0;
  std::optional<double> hd95;  // mean over images where defined
  std::optional<double> asd;
  std::size_t undefined_surface = 0;
};

struct MetricReport {
  std::vector<ImageMetrics> per_image;
  AggregateMetrics aggregate;
  std::string prompt_source;
  std::string config_hash;
  int64_t step = -1;

  // Recomputes `aggregate` from `per_image` as a fold in index order.
  void aggregate_from_images();

  void write_csv(const std::filesystem::path& path) const;
  void write_json(const std::filesystem::path& path) const;
};

ImageMetrics compute_image_metrics(const MaskTensor& pred, const MaskTensor& gt, std::size_t index = 0,
                                   std::string name = {});

}  // namespace scsam
