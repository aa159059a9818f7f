#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rgcd/autodiff/array.hpp"

namespace rgcd {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Blob {
  std::string name;
  ad::Array value;
};

// Byte layout (all integers and reals little-endian):
//   "RGCDCKPT" | u32 version | u64 n, n bytes config text | u64 step |
//   u32 blob count | per blob: u32 n, n bytes name, u32 rank,
//   rank x u64 extents, numel x f64 values
struct CheckpointFile {
  std::uint32_t version = kCheckpointVersion;
  std::string config_text;
  std::uint64_t step = 0;
  std::vector<Blob> blobs;

  const ad::Array& get(const std::string& name) const;
  bool has(const std::string& name) const;
};

std::vector<unsigned char> encode_checkpoint(const CheckpointFile& file);
CheckpointFile decode_checkpoint(const std::vector<unsigned char>& bytes);

void write_checkpoint(const std::filesystem::path& path, const CheckpointFile& file);
CheckpointFile read_checkpoint(const std::filesystem::path& path);

}  // namespace rgcd
