#include "scsam/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "scsam/error.hpp"

namespace scsam {

namespace {

void check_shapes(const MaskTensor& a, const MaskTensor& b) {
  if (a.height() != b.height() || a.width() != b.width()) throw DataError("mask shapes differ");
}

constexpr double kInf = std::numeric_limits<double>::infinity();

// Exact 1-D squared distance transform (Felzenszwalb & Huttenlocher) with
// sample spacing `step`. f holds squared distances or +inf.
void edt_1d(const std::vector<double>& f, std::vector<double>& d, double step) {
  const int n = static_cast<int>(f.size());
  std::vector<int> v(static_cast<std::size_t>(n));
  std::vector<double> z(static_cast<std::size_t>(n) + 1);
  const double s2 = step * step;
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (f[static_cast<std::size_t>(q)] == kInf) continue;
    if (k < 0) {
      k = 0;
      v[0] = q;
      z[0] = -kInf;
      z[1] = kInf;
      continue;
    }
    double s;
    while (true) {
      const int p = v[static_cast<std::size_t>(k)];
      s = ((f[static_cast<std::size_t>(q)] + s2 * q * q) - (f[static_cast<std::size_t>(p)] + s2 * p * p)) /
          (2.0 * s2 * (q - p));
      if (s <= z[static_cast<std::size_t>(k)] && k > 0) {
        --k;
        continue;
      }
      break;
    }
    if (s <= z[static_cast<std::size_t>(k)]) {  // k == 0: q dominates the only parabola
      v[0] = q;
      z[1] = kInf;
      continue;
    }
    ++k;
    v[static_cast<std::size_t>(k)] = q;
    z[static_cast<std::size_t>(k)] = s;
    z[static_cast<std::size_t>(k) + 1] = kInf;
  }
  if (k < 0) {
    std::fill(d.begin(), d.end(), kInf);
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    while (z[static_cast<std::size_t>(j) + 1] < q) ++j;
    const int p = v[static_cast<std::size_t>(j)];
    const double dq = static_cast<double>(q - p);
    d[static_cast<std::size_t>(q)] = s2 * dq * dq + f[static_cast<std::size_t>(p)];
  }
}

// Squared Euclidean distance from every pixel to the nearest site.
std::vector<double> squared_distance_map(const std::vector<std::pair<int, int>>& sites, int h, int w, Spacing sp) {
  std::vector<double> grid(static_cast<std::size_t>(h) * w, kInf);
  for (auto [r, c] : sites) grid[static_cast<std::size_t>(r) * w + c] = 0.0;
  std::vector<double> f, d;
  f.resize(static_cast<std::size_t>(h));
  d.resize(static_cast<std::size_t>(h));
  for (int c = 0; c < w; ++c) {
    for (int r = 0; r < h; ++r) f[static_cast<std::size_t>(r)] = grid[static_cast<std::size_t>(r) * w + c];
    edt_1d(f, d, sp.row);
    for (int r = 0; r < h; ++r) grid[static_cast<std::size_t>(r) * w + c] = d[static_cast<std::size_t>(r)];
  }
  f.resize(static_cast<std::size_t>(w));
  d.resize(static_cast<std::size_t>(w));
  for (int r = 0; r < h; ++r) {
    std::copy_n(grid.begin() + static_cast<std::ptrdiff_t>(r) * w, w, f.begin());
    edt_1d(f, d, sp.col);
    std::copy(d.begin(), d.end(), grid.begin() + static_cast<std::ptrdiff_t>(r) * w);
  }
  return grid;
}

std::string fmt_opt(const std::optional<double>& v) {
  if (!v) return "undefined";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", *v);
  return buf;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

nlohmann::json opt_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

}  // namespace

DiceIou dice_iou(const MaskTensor& pred, const MaskTensor& gt) {
  check_shapes(pred, gt);
  const auto a = pred.data().to(torch::kInt64), b = gt.data().to(torch::kInt64);
  const auto inter = (a & b).sum().item<int64_t>();
  const auto na = a.sum().item<int64_t>(), nb = b.sum().item<int64_t>();
  const auto uni = na + nb - inter;
  if (na + nb == 0) return {1.0, 1.0};
  return {2.0 * static_cast<double>(inter) / static_cast<double>(na + nb),
          static_cast<double>(inter) / static_cast<double>(uni)};
}

std::vector<std::pair<int, int>> boundary_pixels(const MaskTensor& mask) {
  const auto m = mask.data().contiguous();
  const auto acc = m.accessor<std::uint8_t, 2>();
  const int h = static_cast<int>(m.size(0)), w = static_cast<int>(m.size(1));
  auto fg = [&](int r, int c) { return r >= 0 && r < h && c >= 0 && c < w && acc[r][c] != 0; };
  std::vector<std::pair<int, int>> out;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      if (fg(r, c) && (!fg(r - 1, c) || !fg(r + 1, c) || !fg(r, c - 1) || !fg(r, c + 1))) out.emplace_back(r, c);
  return out;
}

double percentile_linear(std::vector<double> values, double q) {
  if (values.empty()) throw Error("percentile of an empty set");
  std::sort(values.begin(), values.end());
  const double rank = q / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = rank - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

SurfaceDistances surface_distances(const MaskTensor& pred, const MaskTensor& gt, Spacing spacing) {
  check_shapes(pred, gt);
  const auto bp = boundary_pixels(pred), bg = boundary_pixels(gt);
  if (bp.empty() || bg.empty()) return {};
  const int h = static_cast<int>(pred.height()), w = static_cast<int>(pred.width());
  const auto to_gt = squared_distance_map(bg, h, w, spacing);
  const auto to_pred = squared_distance_map(bp, h, w, spacing);

  std::vector<double> pooled;
  pooled.reserve(bp.size() + bg.size());
  double sum_pg = 0.0, sum_gp = 0.0;
  for (auto [r, c] : bp) {
    const double d = std::sqrt(to_gt[static_cast<std::size_t>(r) * w + c]);
    sum_pg += d;
    pooled.push_back(d);
  }
  for (auto [r, c] : bg) {
    const double d = std::sqrt(to_pred[static_cast<std::size_t>(r) * w + c]);
    sum_gp += d;
    pooled.push_back(d);
  }
  SurfaceDistances out;
  out.asd = 0.5 * (sum_pg / static_cast<double>(bp.size()) + sum_gp / static_cast<double>(bg.size()));
  out.hd95 = percentile_linear(std::move(pooled), 95.0);
  return out;
}

ImageMetrics compute_image_metrics(const MaskTensor& pred, const MaskTensor& gt, std::size_t index, std::string name) {
  ImageMetrics m;
  m.index = index;
  m.name = std::move(name);
  const auto di = dice_iou(pred, gt);
  m.dice = di.dice;
  m.iou = di.iou;
  const auto sd = surface_distances(pred, gt);
  m.hd95 = sd.hd95;
  m.asd = sd.asd;
  return m;
}

void MetricReport::aggregate_from_images() {
  aggregate = {};
  if (per_image.empty()) return;
  double dice = 0, iou = 0, hd = 0, asd_sum = 0;
  std::size_t defined = 0;
  for (const auto& m : per_image) {
    dice += m.dice;
    iou += m.iou;
    if (m.hd95 && m.asd) {
      hd += *m.hd95;
      asd_sum += *m.asd;
      ++defined;
    } else {
      ++aggregate.undefined_surface;
    }
  }
  const auto n = static_cast<double>(per_image.size());
  aggregate.dice = dice / n;
  aggregate.iou = iou / n;
  if (defined > 0) {
    aggregate.hd95 = hd / static_cast<double>(defined);
    aggregate.asd = asd_sum / static_cast<double>(defined);
  }
}

void MetricReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "index,name,dice,iou,hd95,asd,prompt_source,config_hash\n";
  for (const auto& m : per_image)
    out << m.index << "," << m.name << "," << fmt(m.dice) << "," << fmt(m.iou) << "," << fmt_opt(m.hd95) << ","
        << fmt_opt(m.asd) << "," << prompt_source << "," << config_hash << "\n";
  out << "aggregate,," << fmt(aggregate.dice) << "," << fmt(aggregate.iou) << "," << fmt_opt(aggregate.hd95) << ","
      << fmt_opt(aggregate.asd) << "," << prompt_source << "," << config_hash << "\n";
}

void MetricReport::write_json(const std::filesystem::path& path) const {
  nlohmann::json j;
  j["prompt_source"] = prompt_source;
  j["config_hash"] = config_hash;
  j["step"] = step;
  j["num_images"] = per_image.size();
  j["aggregate"] = {{"dice", aggregate.dice},
                    {"iou", aggregate.iou},
                    {"hd95", opt_json(aggregate.hd95)},
                    {"asd", opt_json(aggregate.asd)},
                    {"undefined_surface", aggregate.undefined_surface}};
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

}  // namespace scsam
