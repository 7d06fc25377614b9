#include "scsam/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "scsam/error.hpp"
#include "scsam/rng.hpp"

namespace fs = std::filesystem;

namespace scsam {

ImageTensor::ImageTensor(torch::Tensor data) : data_(std::move(data)) {
  if (data_.dim() != 3) throw DataError("image must have shape (C, H, W)");
  if (data_.size(0) != 1 && data_.size(0) != 3) throw DataError("image channel count must be 1 or 3");
  if (data_.size(1) <= 0 || data_.size(2) <= 0) throw DataError("image must be non-empty");
  data_ = data_.to(torch::kFloat32).contiguous();
  if (!torch::isfinite(data_).all().item<bool>()) throw DataError("image contains non-finite values");
  if (data_.min().item<float>() < 0.0f || data_.max().item<float>() > 1.0f)
    throw DataError("image values must lie in [0, 1]");
}

MaskTensor::MaskTensor(torch::Tensor data) : data_(std::move(data)) {
  if (data_.dim() != 2) throw DataError("mask must have shape (H, W)");
  if (data_.size(0) <= 0 || data_.size(1) <= 0) throw DataError("mask must be non-empty");
  if (data_.is_floating_point()) {
    if (!((data_ == 0) | (data_ == 1)).all().item<bool>()) throw DataError("mask is not binary");
  } else if (data_.numel() > 0 && (data_.min().item<int64_t>() < 0 || data_.max().item<int64_t>() > 1)) {
    throw DataError("mask is not binary");
  }
  data_ = data_.to(torch::kUInt8).contiguous();
}

int64_t MaskTensor::foreground_count() const { return data_.sum().item<int64_t>(); }

torch::Tensor normalize_min_max(const torch::Tensor& image) {
  auto img = image.to(torch::kFloat32);
  const float lo = img.min().item<float>();
  const float hi = img.max().item<float>();
  if (hi - lo <= 0.0f) return torch::zeros_like(img);
  return ((img - lo) / (hi - lo)).clamp(0.0, 1.0);
}

namespace {

bool is_image_file(const fs::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

torch::Tensor mat_to_chw(const cv::Mat& m) {
  cv::Mat f;
  m.convertTo(f, CV_32F);
  const int c = f.channels();
  auto hwc = torch::from_blob(f.data, {f.rows, f.cols, c}, torch::kFloat32).clone();
  return hwc.permute({2, 0, 1}).contiguous();
}

ImageTensor read_image(const fs::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (m.empty()) throw DataError("cannot read image: " + path.string());
  if (m.channels() == 4) cv::cvtColor(m, m, cv::COLOR_BGRA2RGB);
  else if (m.channels() == 3) cv::cvtColor(m, m, cv::COLOR_BGR2RGB);
  else if (m.channels() != 1) throw DataError("unsupported channel count in " + path.string());
  return ImageTensor(normalize_min_max(mat_to_chw(m)));
}

MaskTensor read_mask(const fs::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (m.empty()) throw DataError("cannot read mask: " + path.string());
  double lo = 0, hi = 0;
  cv::minMaxLoc(m, &lo, &hi);
  // Accept 0/1 or 0/255 encodings; anything else is rejected.
  cv::Mat other = (m != 0) & (m != 255) & (m != 1);
  if (cv::countNonZero(other) > 0 || (hi == 255 && cv::countNonZero(m == 1) > 0))
    throw DataError("mask has non-binary values: " + path.string());
  cv::Mat bin = m > 127;
  if (hi == 1) bin = m > 0;
  cv::Mat u8;
  bin.convertTo(u8, CV_8U, 1.0 / 255.0);
  auto t = torch::from_blob(u8.data, {u8.rows, u8.cols}, torch::kUInt8).clone();
  return MaskTensor(t);
}

std::map<std::string, std::string> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest: " + path.string());
  std::map<std::string, std::string> tags;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string name, tag;
    if (!(ss >> name >> tag)) throw DataError("malformed manifest line " + std::to_string(lineno));
    if (tag != "train" && tag != "val" && tag != "test")
      throw DataError("unknown split tag '" + tag + "' on manifest line " + std::to_string(lineno));
    tags[fs::path(name).stem().string()] = tag;
  }
  return tags;
}

cv::Mat to_u8_mat(const torch::Tensor& chw) {
  auto hwc = (chw.permute({1, 2, 0}) * 255.0).round().clamp(0, 255).to(torch::kUInt8).contiguous();
  const int c = static_cast<int>(hwc.size(2));
  cv::Mat m(static_cast<int>(hwc.size(0)), static_cast<int>(hwc.size(1)), CV_8UC(c), hwc.data_ptr());
  cv::Mat out = m.clone();
  if (c == 3) cv::cvtColor(out, out, cv::COLOR_RGB2BGR);
  return out;
}

}  // namespace

DirectoryDataset read_directory_dataset(const fs::path& root) {
  const fs::path images_dir = root / "images";
  const fs::path masks_dir = root / "masks";
  if (!fs::is_directory(images_dir) || !fs::is_directory(masks_dir))
    throw DataError("dataset root must contain images/ and masks/: " + root.string());

  std::vector<fs::path> images;
  for (const auto& entry : fs::directory_iterator(images_dir))
    if (entry.is_regular_file() && is_image_file(entry.path())) images.push_back(entry.path());
  if (images.empty()) throw DataError("no images found in " + images_dir.string());
  std::sort(images.begin(), images.end());

  std::map<std::string, std::string> tags;
  const bool has_manifest = fs::exists(root / "split.txt");
  if (has_manifest) tags = read_manifest(root / "split.txt");

  DirectoryDataset out;
  for (const auto& img_path : images) {
    const std::string stem = img_path.stem().string();
    const fs::path mask_path = masks_dir / (stem + ".png");
    if (!fs::exists(mask_path)) throw DataError("missing mask for image " + img_path.filename().string());
    LabeledSample sample{read_image(img_path), read_mask(mask_path), stem};
    if (sample.image.height() != sample.mask.height() || sample.image.width() != sample.mask.width())
      throw DataError("image and mask sizes differ for " + img_path.filename().string());
    std::string tag = "train";
    if (has_manifest) {
      auto it = tags.find(stem);
      if (it == tags.end()) throw DataError("image not listed in split.txt: " + img_path.filename().string());
      tag = it->second;
    }
    if (tag == "train") out.train.push_back(std::move(sample));
    else if (tag == "val") out.val.push_back(std::move(sample));
    else out.test.push_back(std::move(sample));
  }
  return out;
}

DatasetSplit split_labeled(std::vector<LabeledSample> pool, double labeled_ratio, std::uint64_t seed) {
  if (!(labeled_ratio > 0.0 && labeled_ratio <= 1.0)) throw ConfigError("labeled_ratio must be in (0, 1]");
  if (pool.empty()) throw DataError("cannot split an empty pool");

  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto rng = make_rng(seed, {0x5b117});
  std::shuffle(order.begin(), order.end(), rng);

  // Small epsilon guards ratios like 0.1 * 50 landing just under an integer.
  auto n_labeled = static_cast<std::size_t>(std::floor(labeled_ratio * static_cast<double>(pool.size()) + 1e-9));
  n_labeled = std::clamp<std::size_t>(n_labeled, 1, pool.size());

  DatasetSplit split;
  split.labeled_ratio = labeled_ratio;
  split.labeled_indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_labeled));
  split.unlabeled_indices.assign(order.begin() + static_cast<std::ptrdiff_t>(n_labeled), order.end());
  std::sort(split.labeled_indices.begin(), split.labeled_indices.end());
  std::sort(split.unlabeled_indices.begin(), split.unlabeled_indices.end());
  for (auto i : split.labeled_indices) split.labeled.push_back(std::move(pool[i]));
  for (auto i : split.unlabeled_indices) split.unlabeled.push_back({std::move(pool[i].image), pool[i].name});
  return split;
}

DatasetSplit load_directory_dataset(const fs::path& root, double labeled_ratio, std::uint64_t seed) {
  return split_labeled(read_directory_dataset(root).train, labeled_ratio, seed);
}

void write_directory_dataset(const std::vector<LabeledSample>& samples, const fs::path& root,
                             const std::vector<std::string>& split_tags) {
  if (!split_tags.empty() && split_tags.size() != samples.size())
    throw ConfigError("split_tags must be empty or match the sample count");
  fs::create_directories(root / "images");
  fs::create_directories(root / "masks");
  std::set<std::string> seen;
  for (const auto& s : samples) {
    if (!seen.insert(s.name).second) throw DataError("duplicate sample name " + s.name);
    if (!cv::imwrite((root / "images" / (s.name + ".png")).string(), to_u8_mat(s.image.data())))
      throw Error("failed to write image " + s.name);
    auto mask = (s.mask.data() * 255).to(torch::kUInt8).contiguous();
    cv::Mat m(static_cast<int>(mask.size(0)), static_cast<int>(mask.size(1)), CV_8UC1, mask.data_ptr());
    if (!cv::imwrite((root / "masks" / (s.name + ".png")).string(), m)) throw Error("failed to write mask " + s.name);
  }
  if (!split_tags.empty()) {
    std::ofstream out(root / "split.txt");
    for (std::size_t i = 0; i < samples.size(); ++i) out << samples[i].name << ".png " << split_tags[i] << "\n";
  }
}

}  // namespace scsam
