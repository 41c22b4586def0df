#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "ragdial/nn/parameter_store.hpp"

namespace ragdial::nn {

// Binary layout (little-endian):
//   magic "RDCKPT01" | u32 version | u64 len + JSON header
//   u64 tensor count, then per tensor in name order:
//   u64 len + name | u32 rank | u64 dims[rank] | f64 values[prod(dims)]
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  nlohmann::json header = nlohmann::json::object();
  std::map<std::string, Tensor> tensors;

  void add_store(const ParameterStore& store);
  // Copies every tensor whose name starts with `prefix` into a new store.
  ParameterStore extract_store(const std::string& prefix, std::uint64_t seed) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ragdial::nn
