#include "scsam/plots.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "scsam/error.hpp"

namespace fs = std::filesystem;

namespace scsam {

namespace {

const std::vector<cv::Scalar> kPalette = {{180, 119, 31}, {14, 127, 255}, {44, 160, 44}, {40, 39, 214},
                                          {189, 103, 148}, {75, 86, 140}, {194, 119, 227}, {127, 127, 127}};

constexpr int kWidth = 800, kHeight = 480;
constexpr int kLeft = 80, kRight = 180, kTop = 40, kBottom = 50;

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  for (std::string cell; std::getline(ss, cell, ',');) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

void write_png(const fs::path& path, const cv::Mat& img) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), img)) throw Error("cannot write plot " + path.string());
}

}  // namespace

void line_plot(const fs::path& path, const std::string& title, const std::vector<Series>& series,
               const std::string& x_label) {
  cv::Mat img(kHeight, kWidth, CV_8UC3, cv::Scalar(255, 255, 255));
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y0 -= 0.5, y1 += 0.5;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;

  const int pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + static_cast<int>(std::lround((x - x0) / (x1 - x0) * pw)); };
  auto py = [&](double y) { return kTop + ph - static_cast<int>(std::lround((y - y0) / (y1 - y0) * ph)); };

  const auto font = cv::FONT_HERSHEY_SIMPLEX;
  const cv::Scalar black(0, 0, 0), grid(225, 225, 225);
  for (int k = 0; k <= 4; ++k) {
    const double yv = y0 + (y1 - y0) * k / 4.0, xv = x0 + (x1 - x0) * k / 4.0;
    cv::line(img, {kLeft, py(yv)}, {kLeft + pw, py(yv)}, grid, 1);
    cv::line(img, {px(xv), kTop}, {px(xv), kTop + ph}, grid, 1);
    cv::putText(img, tick_label(yv), {8, py(yv) + 4}, font, 0.4, black, 1, cv::LINE_AA);
    cv::putText(img, tick_label(xv), {px(xv) - 15, kTop + ph + 18}, font, 0.4, black, 1, cv::LINE_AA);
  }
  cv::rectangle(img, {kLeft, kTop}, {kLeft + pw, kTop + ph}, black, 1);
  cv::putText(img, title, {kLeft, 25}, font, 0.6, black, 1, cv::LINE_AA);
  cv::putText(img, x_label, {kLeft + pw / 2 - 20, kHeight - 10}, font, 0.45, black, 1, cv::LINE_AA);

  int legend_y = kTop + 10;
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const auto color = kPalette[k % kPalette.size()];
    std::vector<cv::Point> pts;
    for (std::size_t i = 0; i < s.x.size(); ++i)
      if (std::isfinite(s.y[i])) pts.emplace_back(px(s.x[i]), py(s.y[i]));
    if (pts.size() == 1) cv::circle(img, pts[0], 3, color, cv::FILLED, cv::LINE_AA);
    if (pts.size() > 1) cv::polylines(img, pts, false, color, 1, cv::LINE_AA);
    cv::line(img, {kLeft + pw + 10, legend_y}, {kLeft + pw + 30, legend_y}, color, 2);
    cv::putText(img, s.name, {kLeft + pw + 35, legend_y + 4}, font, 0.4, black, 1, cv::LINE_AA);
    legend_y += 18;
  }
  write_png(path, img);
}

void bar_plot(const fs::path& path, const std::string& title, const std::vector<std::string>& labels,
              const std::vector<double>& means, const std::vector<double>& stds) {
  cv::Mat img(kHeight, kWidth, CV_8UC3, cv::Scalar(255, 255, 255));
  const int pw = kWidth - kLeft - 40, ph = kHeight - kTop - kBottom;
  double top = 1e-9;
  for (std::size_t i = 0; i < means.size(); ++i)
    if (std::isfinite(means[i])) top = std::max(top, means[i] + (std::isfinite(stds[i]) ? stds[i] : 0.0));
  top *= 1.1;
  auto py = [&](double y) { return kTop + ph - static_cast<int>(std::lround(y / top * ph)); };
  const auto font = cv::FONT_HERSHEY_SIMPLEX;
  const cv::Scalar black(0, 0, 0);
  for (int k = 0; k <= 4; ++k) {
    const double yv = top * k / 4.0;
    cv::line(img, {kLeft, py(yv)}, {kLeft + pw, py(yv)}, {225, 225, 225}, 1);
    cv::putText(img, tick_label(yv), {8, py(yv) + 4}, font, 0.4, black, 1, cv::LINE_AA);
  }
  const int n = static_cast<int>(labels.size());
  const int slot = n > 0 ? pw / n : pw;
  for (int i = 0; i < n; ++i) {
    const int cx = kLeft + slot * i + slot / 2, half = std::max(4, slot / 4);
    cv::putText(img, labels[static_cast<std::size_t>(i)], {cx - half, kTop + ph + 18}, font, 0.4, black, 1, cv::LINE_AA);
    const double m = means[static_cast<std::size_t>(i)], s = stds[static_cast<std::size_t>(i)];
    if (!std::isfinite(m)) continue;
    cv::rectangle(img, {cx - half, py(m)}, {cx + half, py(0)}, kPalette[static_cast<std::size_t>(i) % kPalette.size()],
                  cv::FILLED);
    if (std::isfinite(s) && s > 0) {
      cv::line(img, {cx, py(m - s)}, {cx, py(m + s)}, black, 1);
      cv::line(img, {cx - 6, py(m + s)}, {cx + 6, py(m + s)}, black, 1);
      cv::line(img, {cx - 6, py(m - s)}, {cx + 6, py(m - s)}, black, 1);
    }
    cv::putText(img, tick_label(m), {cx - half, py(m) - 6}, font, 0.4, black, 1, cv::LINE_AA);
  }
  cv::rectangle(img, {kLeft, kTop}, {kLeft + pw, kTop + ph}, black, 1);
  cv::putText(img, title, {kLeft, 25}, font, 0.6, black, 1, cv::LINE_AA);
  write_png(path, img);
}

std::map<std::string, Series> read_csv_series(const fs::path& path, const std::string& x_column) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) return {};
  const auto header = split(line);
  const auto xit = std::find(header.begin(), header.end(), x_column);
  if (xit == header.end()) throw DataError(path.string() + " has no '" + x_column + "' column");
  const auto xi = static_cast<std::size_t>(xit - header.begin());
  std::map<std::string, Series> out;
  while (std::getline(in, line)) {
    const auto cells = split(line);
    if (cells.size() <= xi) continue;
    double x;
    try {
      x = std::stod(cells[xi]);
    } catch (const std::exception&) {
      continue;
    }
    for (std::size_t c = 0; c < header.size() && c < cells.size(); ++c) {
      if (c == xi || cells[c].empty()) continue;
      char* end = nullptr;
      const double v = std::strtod(cells[c].c_str(), &end);
      if (end == cells[c].c_str() || *end != '\0') continue;
      auto& s = out[header[c]];
      s.name = header[c];
      s.x.push_back(x);
      s.y.push_back(v);
    }
  }
  return out;
}

PlotOutput emit_plots(const fs::path& run_dir) {
  PlotOutput result;
  const auto plots = run_dir / "plots";
  auto pick = [&](std::map<std::string, Series>& all, const std::vector<std::string>& names, const std::string& what) {
    std::vector<Series> out;
    for (const auto& n : names) {
      auto it = all.find(n);
      if (it == all.end() || it->second.x.empty()) result.warnings.push_back(what + ": series '" + n + "' is empty, skipped");
      else out.push_back(it->second);
    }
    return out;
  };

  const auto losses_path = run_dir / "losses.csv";
  if (!fs::exists(losses_path)) {
    result.warnings.push_back("losses.csv not found");
  } else {
    auto all = read_csv_series(losses_path);
    std::vector<std::string> names;
    {
      std::ifstream in(losses_path);
      std::string header;
      std::getline(in, header);
      for (const auto& h : split(header))
        if (h != "step" && h != "omega") names.push_back(h);
    }
    auto losses = pick(all, names, "losses");
    if (!losses.empty()) {
      line_plot(plots / "losses.png", "loss components", losses);
      result.images.push_back(plots / "losses.png");
    }
    auto omega = pick(all, {"omega"}, "omega");
    if (!omega.empty()) {
      line_plot(plots / "omega.png", "ramp-up weight omega(t)", omega);
      result.images.push_back(plots / "omega.png");
    }
  }

  const auto val_path = run_dir / "validation.csv";
  if (!fs::exists(val_path)) {
    result.warnings.push_back("validation.csv not found");
  } else {
    auto all = read_csv_series(val_path);
    auto overlap = pick(all, {"dice", "iou"}, "validation");
    if (!overlap.empty()) {
      line_plot(plots / "validation_overlap.png", "validation overlap", overlap);
      result.images.push_back(plots / "validation_overlap.png");
    }
    auto distance = pick(all, {"hd95", "asd"}, "validation");
    if (!distance.empty()) {
      line_plot(plots / "validation_distance.png", "validation surface distance", distance);
      result.images.push_back(plots / "validation_distance.png");
    }
  }
  return result;
}

}  // namespace scsam
