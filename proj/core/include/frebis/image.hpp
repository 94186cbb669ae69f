#pragma once

#include <array>
#include <filesystem>
#include <vector>

namespace frebis {

using Rgb = std::array<double, 3>;

/// Row-major RGB image, channel values nominally in [0, 1].
struct Image {
  int width = 0;
  int height = 0;
  std::vector<float> data;  // width * height * 3

  Image() = default;
  Image(int w, int h, const Rgb& fill = {0, 0, 0});

  float* pixel(int x, int y) { return data.data() + 3 * (static_cast<std::size_t>(y) * width + x); }
  const float* pixel(int x, int y) const { return data.data() + 3 * (static_cast<std::size_t>(y) * width + x); }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
};

/// Rounds to the nearest 8-bit level, clamping to [0, 1] first.
Image quantize8(const Image& img);

/// 8-bit RGB PNG.
void write_png(const std::filesystem::path& path, const Image& img);
/// Accepts 8-bit gray, RGB or RGBA PNGs; alpha is dropped.
Image read_png(const std::filesystem::path& path);

/// Raw float fallback: ASCII header "FREBIS-RAW <W> <H> 3\n" followed by
/// W*H*3 little-endian float32 values, row-major, channels interleaved.
void write_raw(const std::filesystem::path& path, const Image& img);
Image read_raw(const std::filesystem::path& path);

}  // namespace frebis
