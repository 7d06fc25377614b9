#include "scsam/synthetic.hpp"

#include <array>
#include <cmath>
#include <numbers>

#include "scsam/error.hpp"
#include "scsam/rng.hpp"

namespace scsam {

std::string to_string(ShapeFamily family) {
  switch (family) {
    case ShapeFamily::blob: return "blob";
    case ShapeFamily::ring: return "ring";
    case ShapeFamily::polyp_like: return "polyp_like";
  }
  return "blob";
}

ShapeFamily shape_family_from_string(const std::string& name) {
  if (name == "blob") return ShapeFamily::blob;
  if (name == "ring") return ShapeFamily::ring;
  if (name == "polyp_like") return ShapeFamily::polyp_like;
  throw ConfigError("unknown shape family '" + name + "'");
}

namespace {

constexpr double kPi = std::numbers::pi;

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

// Star-shaped region r(theta) = r0 * (1 + sum a_k cos(k theta + phi_k)),
// optionally anisotropic and hollow.
struct Shape {
  ShapeFamily family = ShapeFamily::blob;
  double cy = 0, cx = 0, r0 = 1;
  double aspect = 1.0, rotation = 0.0;
  double hole = 0.0;
  std::array<double, 3> amp{};
  std::array<double, 3> phase{};
  int first_harmonic = 2;

  double radius(double theta) const {
    double r = 1.0;
    for (int k = 0; k < 3; ++k) r += amp[k] * std::cos((first_harmonic + k) * theta + phase[k]);
    return r;
  }

  bool contains(double y, double x) const {
    const double dy = y - cy, dx = x - cx;
    const double c = std::cos(rotation), s = std::sin(rotation);
    const double u = (c * dx + s * dy) / r0;
    const double v = (-s * dx + c * dy) / (r0 * aspect);
    const double d = std::sqrt(u * u + v * v);
    const double rr = radius(std::atan2(v, u));
    return d <= rr && d >= hole * rr;
  }
};

Shape random_shape(ShapeFamily family, Rng& rng, int h, int w, double size_min, double size_max) {
  Shape s;
  s.family = family;
  const double side = std::min(h, w);
  s.r0 = uniform(rng, size_min, size_max) * side;
  const double reach = s.r0 * 1.4;
  s.cy = uniform(rng, std::min(reach, h / 2.0), std::max(h - reach, h / 2.0));
  s.cx = uniform(rng, std::min(reach, w / 2.0), std::max(w - reach, w / 2.0));
  for (auto& p : s.phase) p = uniform(rng, 0.0, 2 * kPi);
  switch (family) {
    case ShapeFamily::blob:
      for (auto& a : s.amp) a = uniform(rng, 0.0, 0.12);
      break;
    case ShapeFamily::ring:
      for (auto& a : s.amp) a = uniform(rng, 0.0, 0.08);
      s.hole = uniform(rng, 0.4, 0.6);
      break;
    case ShapeFamily::polyp_like:
      for (auto& a : s.amp) a = uniform(rng, 0.0, 0.06);
      s.first_harmonic = 3;
      s.aspect = uniform(rng, 0.6, 1.0);
      s.rotation = uniform(rng, 0.0, kPi);
      break;
  }
  return s;
}

// Smooth texture in [-amplitude, amplitude]: mean of three random plane waves.
struct Texture {
  std::array<double, 3> fy{}, fx{}, ph{};
  double amplitude = 0.0;

  static Texture random(Rng& rng, double amplitude, double max_freq) {
    Texture t;
    t.amplitude = amplitude;
    for (int k = 0; k < 3; ++k) {
      t.fy[k] = uniform(rng, -max_freq, max_freq);
      t.fx[k] = uniform(rng, -max_freq, max_freq);
      t.ph[k] = uniform(rng, 0.0, 2 * kPi);
    }
    return t;
  }

  double at(double y, double x) const {
    double v = 0;
    for (int k = 0; k < 3; ++k) v += std::sin(2 * kPi * (fy[k] * y + fx[k] * x) + ph[k]);
    return amplitude * v / 3.0;
  }
};

LabeledSample render(const SyntheticSpec& spec, int index) {
  const auto& app = spec.appearance;
  const int h = spec.height, w = spec.width;
  auto rng = make_rng(spec.seed, {0x5e7, static_cast<std::uint64_t>(index)});

  const Shape target = random_shape(spec.family, rng, h, w, app.size_min, app.size_max);
  const Texture bg_tex = Texture::random(rng, app.texture, 0.05);
  const Texture fg_tex = Texture::random(rng, app.texture, 0.08);
  const double offset = app.intensity_jitter > 0 ? uniform(rng, -app.intensity_jitter, app.intensity_jitter) : 0.0;
  const double gap_scale = app.contrast_jitter > 0 ? uniform(rng, 1.0 - app.contrast_jitter, 1.0) : 1.0;
  const double mid = 0.5 * (app.foreground_mean + app.background_mean);
  const double half_gap = 0.5 * (app.foreground_mean - app.background_mean) * gap_scale;

  std::vector<Shape> decoys;
  for (int d = 0; d < app.distractors; ++d) {
    // Rejection-sample decoys that do not touch the target.
    for (int attempt = 0; attempt < 20; ++attempt) {
      Shape s = random_shape(ShapeFamily::blob, rng, h, w, app.size_min * 0.5, app.size_max * 0.6);
      const double dist = std::hypot(s.cy - target.cy, s.cx - target.cx);
      if (dist > 1.5 * (s.r0 + target.r0)) {
        decoys.push_back(s);
        break;
      }
    }
  }
  const double stripe_freq = uniform(rng, 0.2, 0.3);
  const double stripe_angle = uniform(rng, 0.0, kPi);

  std::array<double, 3> tint{1.0, 1.0, 1.0};
  if (app.channels == 3)
    for (auto& t : tint) t = uniform(rng, 0.85, 1.0);

  auto mask = torch::zeros({h, w}, torch::kUInt8);
  auto base = torch::zeros({h, w}, torch::kFloat64);
  auto m = mask.accessor<std::uint8_t, 2>();
  auto b = base.accessor<double, 2>();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double v;
      if (target.contains(y, x)) {
        m[y][x] = 1;
        v = mid + half_gap + fg_tex.at(y, x);
      } else {
        v = mid - half_gap + bg_tex.at(y, x);
        for (const auto& s : decoys) {
          if (s.contains(y, x)) {
            const double phase = std::cos(stripe_angle) * x + std::sin(stripe_angle) * y;
            v = mid + half_gap + app.distractor_stripe * std::sin(2 * kPi * stripe_freq * phase);
            break;
          }
        }
      }
      b[y][x] = v + offset;
    }
  }

  // Noise is drawn after the geometry so noise_level never perturbs shapes.
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto image = torch::empty({app.channels, h, w}, torch::kFloat32);
  auto im = image.accessor<float, 3>();
  for (int c = 0; c < app.channels; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double v = b[y][x] * tint[c];
        if (spec.noise_level > 0) v += spec.noise_level * gauss(rng);
        im[c][y][x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }

  return LabeledSample{ImageTensor(image), MaskTensor(mask), spec.name_prefix + "_" + std::to_string(index)};
}

}  // namespace

std::vector<LabeledSample> generate_synthetic_dataset(const SyntheticSpec& spec) {
  if (spec.count < 1) throw ConfigError("synthetic count must be >= 1");
  if (spec.height < 32 || spec.width < 32) throw ConfigError("synthetic images must be at least 32x32");
  if (spec.appearance.channels != 1 && spec.appearance.channels != 3)
    throw ConfigError("synthetic channels must be 1 or 3");
  if (spec.noise_level < 0) throw ConfigError("noise_level must be non-negative");
  std::vector<LabeledSample> out;
  out.reserve(static_cast<std::size_t>(spec.count));
  for (int i = 0; i < spec.count; ++i) out.push_back(render(spec, i));
  return out;
}

}  // namespace scsam
