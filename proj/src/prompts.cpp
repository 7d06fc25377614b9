#include "scsam/prompts.hpp"

#include "scsam/error.hpp"

namespace scsam {

namespace {

void draw(std::vector<int64_t>& pool, int n, Rng& rng, int64_t width, PointLabel label, PromptSet& out) {
  const auto take = std::min<std::size_t>(pool.size(), static_cast<std::size_t>(std::max(n, 0)));
  for (std::size_t i = 0; i < take; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
    out.points.push_back({static_cast<int>(pool[i] / width), static_cast<int>(pool[i] % width), label});
  }
}

}  // namespace

PromptSet sample_points(const torch::Tensor& mask, int n_fg, int n_bg, Rng& rng) {
  if (mask.dim() != 2) throw DataError("sample_points expects an (H, W) mask");
  if (n_fg < 0 || n_bg < 0) throw ConfigError("point counts must be non-negative");
  auto m = mask.detach().to(torch::kInt64).contiguous();
  const int64_t width = m.size(1);
  const auto* data = m.data_ptr<int64_t>();
  std::vector<int64_t> fg, bg;
  for (int64_t i = 0; i < m.numel(); ++i) {
    if (data[i] == 1) fg.push_back(i);
    else if (data[i] == 0) bg.push_back(i);
    else throw DataError("sample_points expects a binary mask");
  }
  PromptSet out;
  draw(fg, n_fg, rng, width, PointLabel::foreground, out);
  draw(bg, n_bg, rng, width, PointLabel::background, out);
  return out;
}

std::vector<PromptSet> sample_points_batch(const torch::Tensor& masks, int n_fg, int n_bg, Rng& rng) {
  if (masks.dim() != 3) throw DataError("sample_points_batch expects (N, H, W) masks");
  std::vector<PromptSet> out;
  out.reserve(static_cast<std::size_t>(masks.size(0)));
  for (int64_t i = 0; i < masks.size(0); ++i) out.push_back(sample_points(masks[i], n_fg, n_bg, rng));
  return out;
}

std::vector<PromptSet> empty_prompts(int64_t count) { return std::vector<PromptSet>(static_cast<std::size_t>(count)); }

}  // namespace scsam
