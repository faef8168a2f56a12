#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "dnr/tensor.hpp"

namespace dnr {

/// 8-bit RGB image, interleaved rows.
struct ImageBuffer {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> rgb;

  /// (3, H, W) tensor with values v / 255.
  Tensor<float> to_tensor() const;
  /// round(255 * clamp(v, 0, 1)) per element of a (3, H, W) tensor.
  template <class T>
  static ImageBuffer from_tensor(const Tensor<T>& image);

  bool operator==(const ImageBuffer&) const = default;
};

/// Reads PNG (any bit depth/color type, converted to 8-bit RGB) or binary PPM
/// (P6, maxval 255), chosen by file signature.
ImageBuffer read_image(const std::filesystem::path& path);
/// Writes PPM for a ".ppm" extension, PNG otherwise.
void write_image(const std::filesystem::path& path, const ImageBuffer& image);

}  // namespace dnr
