#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "prunebench/tensor.hpp"

namespace prunebench {

// Binary layout, all integers little-endian:
//   "PBCKPT\0\0"            8-byte magic
//   u32 version             currently 1
//   records until EOF:
//     u32 name_length, name bytes
//     u32 rank, rank x u64 dims
//     numel x f32 values (IEEE-754 bit patterns)
// Records are written in name order, so equal tensor maps serialize to
// identical bytes.
inline constexpr std::string_view kCheckpointMagic{"PBCKPT\0\0", 8};
inline constexpr std::uint32_t kCheckpointVersion = 1;

using TensorMap = std::map<std::string, Tensor>;

std::string serialize_tensors(const TensorMap& tensors);
TensorMap deserialize_tensors(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const TensorMap& tensors);
TensorMap load_checkpoint(const std::filesystem::path& path);

}  // namespace prunebench
