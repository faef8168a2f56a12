#include "dnr/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace dnr {

Tensor<float> ImageBuffer::to_tensor() const {
  Tensor<float> t(Shape{3, height, width});
  const std::size_t hw = height * width;
  for (std::size_t i = 0; i < hw; ++i) {
    for (std::size_t c = 0; c < 3; ++c) t[c * hw + i] = static_cast<float>(rgb[i * 3 + c]) / 255.0f;
  }
  return t;
}

template <class T>
ImageBuffer ImageBuffer::from_tensor(const Tensor<T>& image) {
  if (image.rank() != 3 || image.extent(0) != 3) {
    throw ShapeError("image export: expected (3,H,W), got " + shape_string(image.shape()));
  }
  ImageBuffer out;
  out.height = image.extent(1);
  out.width = image.extent(2);
  const std::size_t hw = out.height * out.width;
  out.rgb.resize(hw * 3);
  for (std::size_t i = 0; i < hw; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      const double v = std::clamp(static_cast<double>(image[c * hw + i]), 0.0, 1.0);
      out.rgb[i * 3 + c] = static_cast<std::uint8_t>(std::lround(255.0 * v));
    }
  }
  return out;
}

template ImageBuffer ImageBuffer::from_tensor(const Tensor<float>&);
template ImageBuffer ImageBuffer::from_tensor(const Tensor<double>&);

namespace {

std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open image '" + path.string() + "'");
  return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

ImageBuffer read_png(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
    throw IoError("cannot decode PNG '" + path.string() + "': " + img.message);
  }
  img.format = PNG_FORMAT_RGB;
  ImageBuffer out;
  out.width = img.width;
  out.height = img.height;
  out.rgb.resize(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, out.rgb.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw IoError("cannot decode PNG '" + path.string() + "': " + msg);
  }
  return out;
}

ImageBuffer read_ppm(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::size_t pos = 2;
  auto next_int = [&]() -> long {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    long v = 0;
    bool any = false;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos++] - '0');
      any = true;
      if (v > (1L << 24)) break;
    }
    if (!any) throw IoError("malformed PPM header in '" + path.string() + "'");
    return v;
  };
  const long w = next_int(), h = next_int(), maxval = next_int();
  if (w <= 0 || h <= 0 || maxval != 255) {
    throw IoError("unsupported PPM '" + path.string() + "' (need positive size and maxval 255)");
  }
  ++pos;  // single whitespace after maxval
  const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3;
  if (bytes.size() < pos + n) throw IoError("truncated PPM '" + path.string() + "'");
  ImageBuffer out;
  out.width = static_cast<std::size_t>(w);
  out.height = static_cast<std::size_t>(h);
  out.rgb.assign(bytes.begin() + static_cast<long>(pos), bytes.begin() + static_cast<long>(pos + n));
  return out;
}

}  // namespace

ImageBuffer read_image(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
  static const std::uint8_t png_sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (bytes.size() >= 8 && std::equal(png_sig, png_sig + 8, bytes.begin())) return read_png(path, bytes);
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') return read_ppm(path, bytes);
  throw IoError("unrecognised image format '" + path.string() + "' (expected PNG or binary PPM)");
}

void write_image(const std::filesystem::path& path, const ImageBuffer& image) {
  if (image.rgb.size() != image.width * image.height * 3 || image.width == 0 || image.height == 0) {
    throw ShapeError("write_image: buffer size does not match dimensions");
  }
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".ppm") {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write image '" + path.string() + "'");
    os << "P6\n" << image.width << ' ' << image.height << "\n255\n";
    os.write(reinterpret_cast<const char*>(image.rgb.data()), static_cast<std::streamsize>(image.rgb.size()));
    if (!os) throw IoError("failed writing image '" + path.string() + "'");
    return;
  }
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.c_str(), 0, image.rgb.data(), 0, nullptr)) {
    throw IoError("cannot write PNG '" + path.string() + "': " + img.message);
  }
}

}  // namespace dnr
