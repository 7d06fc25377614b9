#include "scsam/augment.hpp"

#include <cmath>

#include <opencv2/imgproc.hpp>

namespace scsam {

AugmentationConfig AugmentationConfig::weak() { return AugmentationConfig{}; }

AugmentationConfig AugmentationConfig::strong() {
  AugmentationConfig c;
  c.strength = AugmentStrength::strong;
  c.brightness_contrast_prob = 0.8;
  c.brightness_limit = 0.2;
  c.contrast_limit = 0.2;
  c.shift_scale_rotate_prob = 0.7;
  c.shift_limit = 0.1;
  c.scale_limit = 0.2;
  c.rotate_limit_deg = 30.0;
  c.dropout_prob = 0.5;
  c.grid_distortion_prob = 0.5;
  return c;
}

AugmentationConfig AugmentationConfig::disabled() {
  AugmentationConfig c;
  c.hflip_prob = c.vflip_prob = c.brightness_contrast_prob = 0.0;
  c.shift_scale_rotate_prob = c.dropout_prob = c.grid_distortion_prob = 0.0;
  return c;
}

std::vector<std::string> AugmentationConfig::transform_list() const {
  std::vector<std::string> out;
  if (hflip_prob > 0 || vflip_prob > 0) out.emplace_back("flip");
  if (shift_scale_rotate_prob > 0) out.emplace_back("shift_scale_rotate");
  if (grid_distortion_prob > 0) out.emplace_back("grid_distortion");
  if (brightness_contrast_prob > 0) out.emplace_back("brightness_contrast");
  if (dropout_prob > 0) out.emplace_back("dropout");
  return out;
}

torch::Tensor hflip(const torch::Tensor& t) { return t.flip({t.dim() - 1}).contiguous(); }

namespace {

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
bool coin(Rng& rng, double p) { return p > 0 && std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p; }

// Planes of one sample as float CV_32F matrices: image channels, then the mask.
struct Planes {
  std::vector<cv::Mat> image;
  std::optional<cv::Mat> mask;

  template <typename Fn>
  void for_each_geometric(Fn&& fn) {
    for (auto& p : image) fn(p);
    if (mask) fn(*mask);
  }
};

cv::Mat plane_from(const torch::Tensor& hw) {
  auto f = hw.to(torch::kFloat32).contiguous();
  cv::Mat m(static_cast<int>(f.size(0)), static_cast<int>(f.size(1)), CV_32F, f.data_ptr());
  return m.clone();
}

torch::Tensor tensor_from(const cv::Mat& m) {
  return torch::from_blob(const_cast<float*>(m.ptr<float>()), {m.rows, m.cols}, torch::kFloat32).clone();
}

// Grid distortion: each of `steps` cells per axis is stretched by a random
// factor; cumulative widths are renormalized so the image span is preserved.
std::vector<float> distorted_axis(int size, int steps, double limit, Rng& rng) {
  std::vector<double> widths(static_cast<std::size_t>(steps));
  double total = 0;
  for (auto& wd : widths) {
    wd = 1.0 + uniform(rng, -limit, limit);
    total += wd;
  }
  std::vector<float> map(static_cast<std::size_t>(size));
  const double span = size - 1;
  for (int i = 0; i < size; ++i) {
    const double u = span > 0 ? i / span * steps : 0.0;  // position in cell units
    const int cell = std::min(static_cast<int>(u), steps - 1);
    double start = 0;
    for (int c = 0; c < cell; ++c) start += widths[static_cast<std::size_t>(c)];
    const double src = (start + (u - cell) * widths[static_cast<std::size_t>(cell)]) / total * span;
    map[static_cast<std::size_t>(i)] = static_cast<float>(src);
  }
  return map;
}

}  // namespace

AugmentedSample augment(const ImageTensor& image, const std::optional<MaskTensor>& mask,
                        const AugmentationConfig& cfg, Rng& rng) {
  const auto transforms = cfg.transform_list();
  if (transforms.empty()) return {image, mask};

  const int h = static_cast<int>(image.height());
  const int w = static_cast<int>(image.width());
  Planes planes;
  for (int64_t c = 0; c < image.channels(); ++c) planes.image.push_back(plane_from(image.data()[c]));
  if (mask) planes.mask = plane_from(mask->data());

  if (coin(rng, cfg.hflip_prob)) planes.for_each_geometric([](cv::Mat& p) { cv::flip(p, p, 1); });
  if (coin(rng, cfg.vflip_prob)) planes.for_each_geometric([](cv::Mat& p) { cv::flip(p, p, 0); });

  // Masks go through the same bilinear warp as images and are re-binarized at
  // 0.5, which keeps them binary and geometrically identical to the image.
  if (coin(rng, cfg.shift_scale_rotate_prob)) {
    const double angle = uniform(rng, -cfg.rotate_limit_deg, cfg.rotate_limit_deg);
    const double scale = 1.0 + uniform(rng, -cfg.scale_limit, cfg.scale_limit);
    const double dx = uniform(rng, -cfg.shift_limit, cfg.shift_limit) * w;
    const double dy = uniform(rng, -cfg.shift_limit, cfg.shift_limit) * h;
    cv::Mat affine = cv::getRotationMatrix2D(cv::Point2f((w - 1) / 2.0f, (h - 1) / 2.0f), angle, scale);
    affine.at<double>(0, 2) += dx;
    affine.at<double>(1, 2) += dy;
    planes.for_each_geometric([&](cv::Mat& p) {
      cv::Mat out;
      cv::warpAffine(p, out, affine, p.size(), cv::INTER_LINEAR, cv::BORDER_CONSTANT, 0);
      p = out;
    });
  }

  if (coin(rng, cfg.grid_distortion_prob)) {
    const auto xs = distorted_axis(w, cfg.grid_steps, cfg.grid_distort_limit, rng);
    const auto ys = distorted_axis(h, cfg.grid_steps, cfg.grid_distort_limit, rng);
    cv::Mat map_x(h, w, CV_32F), map_y(h, w, CV_32F);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        map_x.at<float>(y, x) = xs[static_cast<std::size_t>(x)];
        map_y.at<float>(y, x) = ys[static_cast<std::size_t>(y)];
      }
    planes.for_each_geometric([&](cv::Mat& p) {
      cv::Mat out;
      cv::remap(p, out, map_x, map_y, cv::INTER_LINEAR, cv::BORDER_CONSTANT, 0);
      p = out;
    });
  }

  if (coin(rng, cfg.brightness_contrast_prob)) {
    const double alpha = 1.0 + uniform(rng, -cfg.contrast_limit, cfg.contrast_limit);
    const double beta = uniform(rng, -cfg.brightness_limit, cfg.brightness_limit);
    for (auto& p : planes.image) p.convertTo(p, CV_32F, alpha, beta);
  }

  if (coin(rng, cfg.dropout_prob)) {
    const int hole_h = std::max(1, static_cast<int>(std::round(cfg.dropout_size * h)));
    const int hole_w = std::max(1, static_cast<int>(std::round(cfg.dropout_size * w)));
    for (int k = 0; k < cfg.dropout_holes; ++k) {
      const int y0 = std::uniform_int_distribution<int>(0, h - hole_h)(rng);
      const int x0 = std::uniform_int_distribution<int>(0, w - hole_w)(rng);
      for (auto& p : planes.image) p(cv::Rect(x0, y0, hole_w, hole_h)).setTo(0.0f);
    }
  }

  std::vector<torch::Tensor> channels;
  for (auto& p : planes.image) channels.push_back(tensor_from(p));
  auto out_image = torch::stack(channels).clamp(0.0, 1.0);
  std::optional<MaskTensor> out_mask;
  if (planes.mask) out_mask = MaskTensor((tensor_from(*planes.mask) >= 0.5f).to(torch::kUInt8));
  return {ImageTensor(out_image), out_mask};
}

}  // namespace scsam
