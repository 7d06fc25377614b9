#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

namespace scsam {

// On-disk layout: "SCSAMCK1", little-endian u64 header length, JSON header,
// then the raw bytes of every tensor in name order. The header records each
// tensor's dtype, shape and byte offset into the data block.
struct Checkpoint {
  int64_t step = 0;
  nlohmann::json config;
  nlohmann::json extra = nlohmann::json::object();
  std::map<std::string, torch::Tensor> tensors;
};

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

using NamedParameters = std::vector<std::pair<std::string, torch::Tensor>>;

// Parameters and buffers under "<prefix>.<name>".
void collect_module_state(const std::string& prefix, const torch::nn::Module& module,
                          std::map<std::string, torch::Tensor>& out);

// Copies matching tensors into the module. Every module tensor must be present
// unless `allow_missing`; returns the number of tensors copied.
int restore_module_state(const std::string& prefix, torch::nn::Module& module,
                         const std::map<std::string, torch::Tensor>& tensors, bool allow_missing = false);

// Adam moments and step counts, keyed "optim.<group>.<param>.<field>".
void collect_adam_state(const std::string& group, torch::optim::Adam& optimizer, const NamedParameters& params,
                        std::map<std::string, torch::Tensor>& out);
void restore_adam_state(const std::string& group, torch::optim::Adam& optimizer, const NamedParameters& params,
                        const std::map<std::string, torch::Tensor>& tensors);

void collect_sgd_state(const std::string& group, torch::optim::SGD& optimizer, const NamedParameters& params,
                       std::map<std::string, torch::Tensor>& out);
void restore_sgd_state(const std::string& group, torch::optim::SGD& optimizer, const NamedParameters& params,
                       const std::map<std::string, torch::Tensor>& tensors);

}  // namespace scsam
