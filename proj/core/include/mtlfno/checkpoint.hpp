#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "mtlfno/model.hpp"

namespace mtlfno {

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string model_config_to_json(const ModelConfig& cfg);
/// Missing keys keep their defaults. Throws ConfigError.
ModelConfig model_config_from_json(std::string_view text);

/// A trained model plus the dataset task names its task indices refer to.
struct Checkpoint {
  Model model;
  std::vector<std::string> task_names;
};

/// "MTLF", u32 version, u64 payload size, payload, u32 CRC-32 of everything
/// before it. Payload: u64 length + JSON block {"model", "tasks"}, u64 tensor
/// count, then per tensor u32 name length, name, u32 rank, u64 dims, f64 data.
/// All little-endian. Returns the stored CRC-32.
std::uint32_t save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);

/// Throws VersionError, TruncatedFileError, ChecksumError or LoadError.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mtlfno
