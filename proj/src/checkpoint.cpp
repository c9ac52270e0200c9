#include "veil/checkpoint.h"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <set>

#include "veil/errors.h"

namespace veil {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[8] = {'V', 'E', 'I', 'L', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::string& context) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw CheckpointError("checkpoint truncated while reading " + context);
  return value;
}

uint8_t dtype_code(torch::ScalarType t) {
  switch (t) {
    case torch::kFloat32: return 0;
    case torch::kFloat64: return 1;
    case torch::kInt64: return 2;
    default: throw CheckpointError("unsupported tensor dtype in checkpoint");
  }
}

torch::ScalarType dtype_from(uint8_t code, const std::string& name) {
  switch (code) {
    case 0: return torch::kFloat32;
    case 1: return torch::kFloat64;
    case 2: return torch::kInt64;
    default: throw CheckpointError("tensor '" + name + "' has unknown dtype code");
  }
}

bool starts_with(const std::string& s, const std::string& prefix) {
  return s.size() >= prefix.size() && s.compare(0, prefix.size(), prefix) == 0;
}

}  // namespace

bool Checkpoint::has_prefix(const std::string& prefix) const {
  for (const auto& [name, t] : tensors)
    if (starts_with(name, prefix)) return true;
  return false;
}

void Checkpoint::erase_prefix(const std::string& prefix) {
  for (auto it = tensors.begin(); it != tensors.end();) {
    if (starts_with(it->first, prefix)) it = tensors.erase(it);
    else ++it;
  }
}

void save_checkpoint(const Checkpoint& checkpoint, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot open " + tmp.string() + " for writing");
    out.write(kMagic, sizeof(kMagic));
    put<uint32_t>(out, kVersion);
    const auto meta = checkpoint.metadata.dump();
    put<uint64_t>(out, meta.size());
    out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
    put<uint32_t>(out, static_cast<uint32_t>(checkpoint.tensors.size()));
    for (const auto& [name, tensor] : checkpoint.tensors) {
      auto t = tensor.detach().to(torch::kCPU).contiguous();
      put<uint32_t>(out, static_cast<uint32_t>(name.size()));
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      put<uint8_t>(out, dtype_code(t.scalar_type()));
      put<uint32_t>(out, static_cast<uint32_t>(t.dim()));
      for (int64_t d = 0; d < t.dim(); ++d) put<int64_t>(out, t.size(d));
      const uint64_t bytes = t.numel() * t.element_size();
      put<uint64_t>(out, bytes);
      const auto* data = static_cast<const char*>(t.data_ptr());
      out.write(data, static_cast<std::streamsize>(bytes));
      const auto crc = crc32(0L, reinterpret_cast<const Bytef*>(data), static_cast<uInt>(bytes));
      put<uint32_t>(out, static_cast<uint32_t>(crc));
    }
    if (!out) throw CheckpointError("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError(path.string() + " is not a checkpoint (bad magic)");
  }
  const auto version = get<uint32_t>(in, "version");
  if (version != kVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  const auto meta_bytes = get<uint64_t>(in, "metadata length");
  std::string meta(meta_bytes, '\0');
  in.read(meta.data(), static_cast<std::streamsize>(meta_bytes));
  if (!in) throw CheckpointError("checkpoint truncated in metadata");
  Checkpoint ck;
  try {
    ck.metadata = nlohmann::json::parse(meta);
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("checkpoint metadata is not valid JSON: ") + e.what());
  }
  const auto count = get<uint32_t>(in, "tensor count");
  for (uint32_t i = 0; i < count; ++i) {
    const auto name_len = get<uint32_t>(in, "tensor name length");
    if (name_len > 4096) throw CheckpointError("corrupt tensor name length at entry " + std::to_string(i));
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) throw CheckpointError("checkpoint truncated in tensor name");
    const auto dtype = dtype_from(get<uint8_t>(in, "dtype of '" + name + "'"), name);
    const auto ndim = get<uint32_t>(in, "rank of '" + name + "'");
    if (ndim > 8) throw CheckpointError("tensor '" + name + "' has corrupt rank");
    std::vector<int64_t> dims(ndim);
    for (auto& d : dims) d = get<int64_t>(in, "dims of '" + name + "'");
    const auto bytes = get<uint64_t>(in, "size of '" + name + "'");
    auto t = torch::empty(dims, torch::TensorOptions().dtype(dtype));
    if (static_cast<uint64_t>(t.numel() * t.element_size()) != bytes) {
      throw CheckpointError("tensor '" + name + "' payload size does not match its shape");
    }
    in.read(static_cast<char*>(t.data_ptr()), static_cast<std::streamsize>(bytes));
    if (!in) throw CheckpointError("checkpoint truncated in payload of '" + name + "'");
    const auto stored = get<uint32_t>(in, "checksum of '" + name + "'");
    const auto crc = crc32(0L, static_cast<const Bytef*>(t.data_ptr()), static_cast<uInt>(bytes));
    if (static_cast<uint32_t>(crc) != stored) {
      throw CheckpointError("checksum mismatch in tensor '" + name + "'");
    }
    if (!ck.tensors.emplace(name, t).second) {
      throw CheckpointError("duplicate tensor '" + name + "' in checkpoint");
    }
  }
  return ck;
}

void export_module(const torch::nn::Module& module, const std::string& prefix,
                   std::map<std::string, torch::Tensor>& out) {
  for (const auto& item : module.named_parameters(true)) {
    out[prefix + "." + item.key()] = item.value().detach().clone();
  }
  for (const auto& item : module.named_buffers(true)) {
    out[prefix + "." + item.key()] = item.value().detach().clone();
  }
}

void import_module(torch::nn::Module& module, const std::string& prefix,
                   const std::map<std::string, torch::Tensor>& tensors) {
  torch::NoGradGuard no_grad;
  std::vector<std::pair<std::string, torch::Tensor>> targets;
  for (auto& item : module.named_parameters(true)) targets.emplace_back(item.key(), item.value());
  for (auto& item : module.named_buffers(true)) targets.emplace_back(item.key(), item.value());

  std::set<std::string> expected;
  for (const auto& [key, target] : targets) expected.insert(prefix + "." + key);
  const auto scope = prefix + ".";
  for (const auto& [name, t] : tensors) {
    if (starts_with(name, scope) && !expected.count(name)) {
      throw CheckpointError("checkpoint has unknown tensor '" + name + "'");
    }
  }
  for (auto& [key, target] : targets) {
    const auto full = prefix + "." + key;
    auto it = tensors.find(full);
    if (it == tensors.end()) throw CheckpointError("checkpoint is missing tensor '" + full + "'");
    if (it->second.sizes() != target.sizes()) {
      throw CheckpointError("tensor '" + full + "' has " + std::to_string(it->second.numel()) +
                            " elements in an incompatible shape (expected " +
                            std::to_string(target.numel()) + ")");
    }
    target.copy_(it->second);
  }
}

}  // namespace veil
