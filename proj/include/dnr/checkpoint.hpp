#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "dnr/tensor.hpp"

namespace dnr {

/// Binary checkpoint, all integers little-endian:
///
///   "DNRC"                      4 bytes magic
///   version                     u32 (currently 1)
///   config length, config       u32 + UTF-8 bytes (model topology string)
///   tensor count                u32
///   per tensor:
///     name length, name         u32 + UTF-8 bytes
///     rank                      u32
///     extents                   rank x u64
///     elements                  prod(extents) x f32
struct Checkpoint {
  static constexpr char kMagic[4] = {'D', 'N', 'R', 'C'};
  static constexpr std::uint32_t kVersion = 1;

  std::string config;
  std::vector<std::pair<std::string, Tensor<float>>> tensors;

  const Tensor<float>* find(std::string_view name) const;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace dnr
