// Versioned binary container for named tensors plus a config snapshot.
// The byte layout is documented in docs/checkpoint-format.md.
#pragma once

#include "maven/nn/graph.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace maven::nn {

inline constexpr char kCheckpointMagic[8] = {'M', 'A', 'V', 'E', 'N', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor value;
};

struct Checkpoint {
  std::uint64_t seed = 0;
  std::string config_text;
  std::vector<NamedTensor> tensors;

  const NamedTensor* find(const std::string& name) const;
};

std::vector<std::uint8_t> serialize(const Checkpoint& ckpt);
/// Throws std::runtime_error on bad magic, unsupported version, truncation
/// or checksum mismatch.
Checkpoint deserialize(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::span<const std::uint8_t> bytes, std::uint64_t h = 0xcbf29ce484222325ull);
/// FNV-1a over the names and raw little-endian values of `params`, in order.
std::uint64_t parameter_checksum(std::span<const Parameter* const> params);

}  // namespace maven::nn
