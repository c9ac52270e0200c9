#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

namespace veil {

// Named-tensor container plus a JSON metadata record.
//
// On-disk layout (little-endian):
//   "VEILCKPT"  u32 version(=1)
//   u64 metadata_bytes, metadata (UTF-8 JSON)
//   u32 tensor_count, then per tensor:
//     u32 name_bytes, name
//     u8 dtype (0 float32, 1 float64, 2 int64)
//     u32 ndim, i64 dims[ndim]
//     u64 payload_bytes, payload (row-major), u32 crc32(payload)
struct Checkpoint {
  nlohmann::json metadata = nlohmann::json::object();
  std::map<std::string, torch::Tensor> tensors;

  bool has_prefix(const std::string& prefix) const;
  /// Drops every tensor whose name starts with `prefix`.
  void erase_prefix(const std::string& prefix);
};

/// Writes to a temporary sibling and renames it over `path`.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);

/// Throws CheckpointError on bad magic, truncation or CRC mismatch (naming
/// the tensor).
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies parameters and buffers of `module` into `out` as "<prefix>.<name>".
void export_module(const torch::nn::Module& module, const std::string& prefix,
                   std::map<std::string, torch::Tensor>& out);

/// Loads "<prefix>.*" tensors into `module`. Missing tensors, unknown names
/// under the prefix and shape mismatches throw CheckpointError naming the
/// tensor.
void import_module(torch::nn::Module& module, const std::string& prefix,
                   const std::map<std::string, torch::Tensor>& tensors);

}  // namespace veil
