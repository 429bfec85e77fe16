#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace pfpn {

/// Interleaved 8-bit image, row-major; channels is 1 (gray) or 3 (RGB).
struct ImageU8 {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(int y, int x, int c = 0) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

/// Reads a PNG (8-bit gray/RGB/with-alpha) or baseline JPEG, by extension.
ImageU8 read_image(const std::filesystem::path& path);

/// Writers emit non-interlaced 8-bit PNGs with an uncompressed deflate
/// stream, so identical pixels always produce identical bytes.
void write_png_gray(const std::filesystem::path& path,
                    const std::uint8_t* data, int width, int height);
void write_png_rgb(const std::filesystem::path& path, const std::uint8_t* data,
                   int width, int height);

}  // namespace pfpn
