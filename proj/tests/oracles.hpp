#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <random>
#include <vector>

#include <torch/torch.h>

#include "scsam/rng.hpp"

namespace scsam::test {

// Brute-force references for the overlap and surface metrics, written
// directly from the definitions with no distance transform.
struct OracleMetrics {
  double dice = 0, iou = 0;
  std::optional<double> hd95, asd;
};

inline std::vector<std::pair<int, int>> oracle_boundary(const std::vector<std::vector<int>>& m) {
  const int h = static_cast<int>(m.size()), w = static_cast<int>(m[0].size());
  auto at = [&](int r, int c) { return r >= 0 && r < h && c >= 0 && c < w ? m[r][c] : 0; };
  std::vector<std::pair<int, int>> out;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      if (!m[r][c]) continue;
      const int neighbours = at(r - 1, c) + at(r + 1, c) + at(r, c - 1) + at(r, c + 1);
      if (neighbours < 4) out.emplace_back(r, c);
    }
  return out;
}

inline std::vector<std::vector<int>> to_grid(const torch::Tensor& t) {
  auto c = t.to(torch::kInt64).contiguous();
  std::vector<std::vector<int>> g(static_cast<std::size_t>(c.size(0)), std::vector<int>(static_cast<std::size_t>(c.size(1))));
  auto acc = c.accessor<int64_t, 2>();
  for (int64_t r = 0; r < c.size(0); ++r)
    for (int64_t k = 0; k < c.size(1); ++k) g[r][k] = static_cast<int>(acc[r][k]);
  return g;
}

inline OracleMetrics oracle_metrics(const torch::Tensor& pred, const torch::Tensor& gt) {
  const auto p = to_grid(pred), g = to_grid(gt);
  long inter = 0, np = 0, ng = 0;
  for (std::size_t r = 0; r < p.size(); ++r)
    for (std::size_t c = 0; c < p[r].size(); ++c) {
      inter += p[r][c] && g[r][c];
      np += p[r][c];
      ng += g[r][c];
    }
  OracleMetrics out;
  if (np + ng == 0) {
    out.dice = out.iou = 1.0;
  } else {
    out.dice = 2.0 * inter / static_cast<double>(np + ng);
    out.iou = inter / static_cast<double>(np + ng - inter);
  }
  const auto bp = oracle_boundary(p), bg = oracle_boundary(g);
  if (bp.empty() || bg.empty()) return out;
  auto nearest = [](std::pair<int, int> a, const std::vector<std::pair<int, int>>& set) {
    double best = 1e300;
    for (auto b : set) best = std::min(best, std::hypot(a.first - b.first, a.second - b.second));
    return best;
  };
  std::vector<double> all;
  double s1 = 0, s2 = 0;
  for (auto a : bp) {
    all.push_back(nearest(a, bg));
    s1 += all.back();
  }
  for (auto b : bg) {
    all.push_back(nearest(b, bp));
    s2 += all.back();
  }
  out.asd = 0.5 * (s1 / bp.size() + s2 / bg.size());
  // 95th percentile, linear interpolation between the two closest ranks
  std::sort(all.begin(), all.end());
  const double pos = 0.95 * (all.size() - 1);
  const std::size_t below = static_cast<std::size_t>(pos);
  const double above = below + 1 < all.size() ? all[below + 1] : all[below];
  out.hd95 = all[below] * (1 - (pos - below)) + above * (pos - below);
  return out;
}

// Random blobby binary masks: thresholded smoothed noise, occasionally empty.
inline torch::Tensor random_mask(int h, int w, torch::Generator& gen, double empty_probability = 0.05) {
  if (torch::rand({1}, gen).item<double>() < empty_probability) return torch::zeros({h, w}, torch::kInt64);
  auto noise = torch::rand({1, 1, h / 4 + 1, w / 4 + 1}, gen);
  auto up = torch::nn::functional::interpolate(
      noise, torch::nn::functional::InterpolateFuncOptions().size(std::vector<int64_t>{h, w}).mode(torch::kBilinear).align_corners(true));
  const double threshold = 0.3 + 0.4 * torch::rand({1}, gen).item<double>();
  return (up[0][0] > threshold).to(torch::kInt64);
}

// Central differences of f at a sample of coordinates of x (double precision).
inline double max_relative_gradient_error(const std::function<torch::Tensor(const torch::Tensor&)>& f, torch::Tensor x,
                                          int coordinates, uint64_t seed) {
  x = x.detach().clone().requires_grad_(true);
  f(x).backward();
  auto analytic = x.grad().flatten();
  auto flat = x.detach().flatten();
  auto rng = make_rng(seed);
  std::uniform_int_distribution<int64_t> pick(0, flat.numel() - 1);
  double worst = 0;
  const double h = 1e-6;
  for (int i = 0; i < coordinates; ++i) {
    const int64_t j = pick(rng);
    auto plus = flat.clone(), minus = flat.clone();
    plus[j] += h;
    minus[j] -= h;
    const double numeric =
        (f(plus.view(x.sizes())).item<double>() - f(minus.view(x.sizes())).item<double>()) / (2 * h);
    const double a = analytic[j].item<double>();
    const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
    if (std::abs(a - numeric) > 1e-9) worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace scsam::test
