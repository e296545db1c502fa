#include "hyperei/png_io.hpp"

#include <png.h>

#include <cstdio>
#include <memory>

#include "hyperei/errors.hpp"

namespace hei {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void write_png(const std::filesystem::path& path, int width, int height, int color_type,
               int bytes_per_px, const std::vector<std::uint8_t>& pixels) {
  if (width <= 0 || height <= 0) throw ConfigError("png: dimensions must be positive");
  if (pixels.size() != std::size_t(width) * height * bytes_per_px)
    throw ShapeError("png: pixel buffer size does not match dimensions");

  const std::filesystem::path tmp = path.string() + ".tmp";
  FilePtr f(std::fopen(tmp.c_str(), "wb"));
  if (!f) throw IoError("cannot open " + tmp.string() + " for writing");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("png: allocation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    f.reset();
    std::error_code ec;
    std::filesystem::remove(tmp, ec);
    throw IoError("png: encode failed for " + path.string());
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, png_uint_32(width), png_uint_32(height), 8, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int i = 0; i < height; ++i)
    png_write_row(png, const_cast<png_bytep>(pixels.data() + std::size_t(i) * width * bytes_per_px));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  f.reset();

  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " to " + path.string());
}

}  // namespace

void write_png_gray8(const std::filesystem::path& path, int width, int height,
                     const std::vector<std::uint8_t>& pixels) {
  write_png(path, width, height, PNG_COLOR_TYPE_GRAY, 1, pixels);
}

void write_png_rgb8(const std::filesystem::path& path, int width, int height,
                    const std::vector<std::uint8_t>& pixels) {
  write_png(path, width, height, PNG_COLOR_TYPE_RGB, 3, pixels);
}

PngImage read_png8(const std::filesystem::path& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw ConfigError("cannot open " + path.string() + " for reading");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("png: allocation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError(path.string() + ": not a decodable PNG", 0);
  }
  png_init_io(png, f.get());
  png_read_info(png, info);
  png_set_expand(png);
  png_set_strip_16(png);
  png_read_update_info(png, info);

  PngImage img;
  img.width = int(png_get_image_width(png, info));
  img.height = int(png_get_image_height(png, info));
  img.channels = int(png_get_channels(png, info));
  img.pixels.resize(std::size_t(img.width) * img.height * img.channels);
  for (int i = 0; i < img.height; ++i)
    png_read_row(png, img.pixels.data() + std::size_t(i) * img.width * img.channels, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

}  // namespace hei
