#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fisale/autodiff.hpp"

namespace fisale {

/// Checkpoint layout: "FSCK", u32 version, u32 header length, JSON header
/// (ordered list of {name, shape, dtype}), then raw little-endian arrays in
/// header order.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor value;
  bool trainable = true;
};

void write_checkpoint(const std::filesystem::path& path, const ParameterStore& store);
std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path);

/// Overwrites the values of `store` from a checkpoint. Names and shapes must match exactly.
void load_checkpoint(const std::filesystem::path& path, ParameterStore& store);

}  // namespace fisale
