#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace hei {

// Minimal 8-bit PNG support for the plot command and its tests.
// Pixel buffers are row-major, tightly packed (1 byte/px gray, 3 bytes/px rgb).

void write_png_gray8(const std::filesystem::path& path, int width, int height,
                     const std::vector<std::uint8_t>& pixels);
void write_png_rgb8(const std::filesystem::path& path, int width, int height,
                    const std::vector<std::uint8_t>& pixels);

struct PngImage {
  int width = 0;
  int height = 0;
  int channels = 0;  // 1 or 3
  std::vector<std::uint8_t> pixels;
};

PngImage read_png8(const std::filesystem::path& path);

}  // namespace hei
