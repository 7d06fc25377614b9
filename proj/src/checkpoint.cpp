#include "scsam/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "scsam/error.hpp"

using nlohmann::json;

namespace scsam {

namespace {

constexpr char kMagic[8] = {'S', 'C', 'S', 'A', 'M', 'C', 'K', '1'};

std::string dtype_name(torch::ScalarType t) {
  switch (t) {
    case torch::kFloat32: return "float32";
    case torch::kFloat64: return "float64";
    case torch::kInt64: return "int64";
    case torch::kInt32: return "int32";
    case torch::kUInt8: return "uint8";
    case torch::kBool: return "bool";
    default: throw Error(std::string("checkpoint: unsupported dtype ") + c10::toString(t));
  }
}

torch::ScalarType dtype_from(const std::string& s) {
  if (s == "float32") return torch::kFloat32;
  if (s == "float64") return torch::kFloat64;
  if (s == "int64") return torch::kInt64;
  if (s == "int32") return torch::kInt32;
  if (s == "uint8") return torch::kUInt8;
  if (s == "bool") return torch::kBool;
  throw DataError("checkpoint: unknown dtype '" + s + "'");
}

}  // namespace

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  json header;
  header["format"] = "scsam-checkpoint-v1";
  header["step"] = ck.step;
  header["config"] = ck.config;
  header["extra"] = ck.extra;
  json entries = json::array();
  std::vector<torch::Tensor> blobs;
  uint64_t offset = 0;
  for (const auto& [name, t] : ck.tensors) {
    auto c = t.detach().to(torch::kCPU).contiguous();
    const uint64_t nbytes = c.numel() * c.element_size();
    entries.push_back({{"name", name}, {"dtype", dtype_name(c.scalar_type())}, {"shape", c.sizes().vec()},
                       {"offset", offset}, {"nbytes", nbytes}});
    offset += nbytes;
    blobs.push_back(c);
  }
  header["tensors"] = entries;
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write checkpoint " + tmp.string());
    out.write(kMagic, sizeof(kMagic));
    uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& b : blobs)
      out.write(static_cast<const char*>(b.data_ptr()), static_cast<std::streamsize>(b.numel() * b.element_size()));
    if (!out) throw Error("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("checkpoint not found: " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw DataError("not a checkpoint: " + path.string());
  uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  const auto file_size = std::filesystem::file_size(path);
  if (!in || len > file_size) throw DataError("corrupt checkpoint header: " + path.string());
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError("corrupt checkpoint header: " + path.string());
  }
  if (header.value("format", "") != "scsam-checkpoint-v1") throw DataError("unsupported checkpoint format");
  const uint64_t data_start = sizeof(kMagic) + sizeof(uint64_t) + len;

  Checkpoint ck;
  ck.step = header.at("step").get<int64_t>();
  ck.config = header.at("config");
  ck.extra = header.at("extra");
  for (const auto& e : header.at("tensors")) {
    const auto shape = e.at("shape").get<std::vector<int64_t>>();
    const auto offset = e.at("offset").get<uint64_t>();
    const auto nbytes = e.at("nbytes").get<uint64_t>();
    auto t = torch::empty(shape, torch::TensorOptions().dtype(dtype_from(e.at("dtype").get<std::string>())));
    if (static_cast<uint64_t>(t.numel() * t.element_size()) != nbytes || data_start + offset + nbytes > file_size)
      throw DataError("corrupt checkpoint tensor '" + e.at("name").get<std::string>() + "'");
    in.seekg(static_cast<std::streamoff>(data_start + offset));
    in.read(static_cast<char*>(t.data_ptr()), static_cast<std::streamsize>(nbytes));
    if (!in) throw DataError("truncated checkpoint: " + path.string());
    ck.tensors.emplace(e.at("name").get<std::string>(), t);
  }
  return ck;
}

void collect_module_state(const std::string& prefix, const torch::nn::Module& module,
                          std::map<std::string, torch::Tensor>& out) {
  for (const auto& item : module.named_parameters(true)) out[prefix + "." + item.key()] = item.value().detach().clone();
  for (const auto& item : module.named_buffers(true)) out[prefix + "." + item.key()] = item.value().detach().clone();
}

int restore_module_state(const std::string& prefix, torch::nn::Module& module,
                         const std::map<std::string, torch::Tensor>& tensors, bool allow_missing) {
  torch::NoGradGuard no_grad;
  int copied = 0;
  auto restore = [&](const std::string& name, torch::Tensor& dst) {
    auto it = tensors.find(prefix + "." + name);
    if (it == tensors.end()) {
      if (allow_missing) return;
      throw DataError("checkpoint is missing tensor '" + prefix + "." + name + "'");
    }
    if (it->second.sizes() != dst.sizes())
      throw DataError("checkpoint tensor '" + prefix + "." + name + "' has a different shape");
    dst.copy_(it->second);
    ++copied;
  };
  for (auto& item : module.named_parameters(true)) restore(item.key(), item.value());
  for (auto& item : module.named_buffers(true)) restore(item.key(), item.value());
  return copied;
}

void collect_adam_state(const std::string& group, torch::optim::Adam& optimizer, const NamedParameters& params,
                        std::map<std::string, torch::Tensor>& out) {
  auto& state = optimizer.state();
  for (const auto& [name, p] : params) {
    auto it = state.find(p.unsafeGetTensorImpl());
    if (it == state.end()) continue;
    auto& s = static_cast<torch::optim::AdamParamState&>(*it->second);
    const auto key = "optim." + group + "." + name + ".";
    out[key + "step"] = torch::tensor(s.step(), torch::kInt64);
    out[key + "exp_avg"] = s.exp_avg().detach().clone();
    out[key + "exp_avg_sq"] = s.exp_avg_sq().detach().clone();
  }
}

void restore_adam_state(const std::string& group, torch::optim::Adam& optimizer, const NamedParameters& params,
                        const std::map<std::string, torch::Tensor>& tensors) {
  auto& state = optimizer.state();
  for (const auto& [name, p] : params) {
    const auto key = "optim." + group + "." + name + ".";
    auto step = tensors.find(key + "step");
    if (step == tensors.end()) {
      state.erase(p.unsafeGetTensorImpl());
      continue;
    }
    auto s = std::make_unique<torch::optim::AdamParamState>();
    s->step(step->second.item<int64_t>());
    s->exp_avg(tensors.at(key + "exp_avg").clone());
    s->exp_avg_sq(tensors.at(key + "exp_avg_sq").clone());
    state[p.unsafeGetTensorImpl()] = std::move(s);
  }
}

void collect_sgd_state(const std::string& group, torch::optim::SGD& optimizer, const NamedParameters& params,
                       std::map<std::string, torch::Tensor>& out) {
  auto& state = optimizer.state();
  for (const auto& [name, p] : params) {
    auto it = state.find(p.unsafeGetTensorImpl());
    if (it == state.end()) continue;
    auto& s = static_cast<torch::optim::SGDParamState&>(*it->second);
    if (s.momentum_buffer().defined())
      out["optim." + group + "." + name + ".momentum_buffer"] = s.momentum_buffer().detach().clone();
  }
}

void restore_sgd_state(const std::string& group, torch::optim::SGD& optimizer, const NamedParameters& params,
                       const std::map<std::string, torch::Tensor>& tensors) {
  auto& state = optimizer.state();
  for (const auto& [name, p] : params) {
    auto it = tensors.find("optim." + group + "." + name + ".momentum_buffer");
    if (it == tensors.end()) {
      state.erase(p.unsafeGetTensorImpl());
      continue;
    }
    auto s = std::make_unique<torch::optim::SGDParamState>();
    s->momentum_buffer(it->second.clone());
    state[p.unsafeGetTensorImpl()] = std::move(s);
  }
}

}  // namespace scsam
