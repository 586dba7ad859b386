#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "sepbn/eval.hpp"

namespace sepbn {

// Little-endian binary layout:
//   magic "SEPBNCK\0", u32 version, u64 config digest, u64 seed,
//   model config (u32 depth, width, in_channels, classes, bn_mode),
//   standardization (u32 channels, f32 mean[], f32 std[]),
//   u32 param count, then per param: u32 name length, name bytes, u32 rank,
//     u32 dims[], f32 data[],
//   u32 norm layer count, then per layer: u32 name length, name bytes,
//     u32 store count, then per store: u64 updates, u32 channels, f32 mean[],
//     f32 var[],
//   u64 FNV-1a of every preceding byte.
constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  std::uint64_t config_digest = 0;
  std::uint64_t seed = 0;
  bool operator==(const CheckpointMeta&) const = default;
};

struct LoadedCheckpoint {
  Model model;
  CheckpointMeta meta;
};

std::vector<std::uint8_t> encode_checkpoint(const Model& model, const CheckpointMeta& meta);
// Throws CheckpointError on bad magic, version, checksum or layout.
LoadedCheckpoint decode_checkpoint(std::span<const std::uint8_t> bytes, const std::string& name = "checkpoint");

void save_checkpoint(const std::filesystem::path& path, const Model& model, const CheckpointMeta& meta);
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace sepbn
