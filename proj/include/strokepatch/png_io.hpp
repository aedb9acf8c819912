#pragma once

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <memory>
#include <string>
#include <vector>

#include <png.h>

#include "strokepatch/common.hpp"
#include "strokepatch/tensor.hpp"

namespace strokepatch {

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FileHandle = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] inline void png_error_fn(png_structp png, png_const_charp msg) {
  // The message is copied before longjmp unwinds libpng's stack frames.
  auto* dest = static_cast<std::string*>(png_get_error_ptr(png));
  if (dest) *dest = msg ? msg : "unknown libpng error";
  std::longjmp(png_jmpbuf(png), 1);
}

inline void png_warning_fn(png_structp, png_const_charp) {}

}  // namespace detail

/// Decodes an 8-bit PNG into a 3xHxW float image in [0,1]. Gray and palette
/// images are expanded to RGB; 16-bit depth is reduced; alpha is
/// pre-composited over white.
inline Image read_png(const std::string& path) {
  detail::FileHandle file(std::fopen(path.c_str(), "rb"));
  if (!file) throw IoError("cannot open PNG '" + path + "'");

  std::string error_msg;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &error_msg,
                                           detail::png_error_fn, detail::png_warning_fn);
  if (!png) throw IoError("libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("libpng init failed");
  }

  std::vector<unsigned char> pixels;
  std::vector<png_bytep> rows;
  png_uint_32 width = 0, height = 0;

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("cannot decode PNG '" + path + "': " + error_msg);
  }

  png_init_io(png, file.get());
  png_read_info(png, info);
  width = png_get_image_width(png, info);
  height = png_get_image_height(png, info);
  const png_byte color_type = png_get_color_type(png, info);
  const png_byte bit_depth = png_get_bit_depth(png, info);

  if (bit_depth == 16) png_set_strip_16(png);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA)
    png_set_gray_to_rgb(png);
  png_set_filler(png, 0xFF, PNG_FILLER_AFTER);  // normalize to RGBA rows
  png_read_update_info(png, info);

  pixels.resize(static_cast<std::size_t>(width) * height * 4);
  rows.resize(height);
  for (png_uint_32 y = 0; y < height; ++y)
    rows[y] = pixels.data() + static_cast<std::size_t>(y) * width * 4;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Image img({3, height, width});
  for (std::size_t y = 0; y < height; ++y) {
    const unsigned char* src = pixels.data() + y * static_cast<std::size_t>(width) * 4;
    for (std::size_t x = 0; x < width; ++x) {
      const float a = static_cast<float>(src[4 * x + 3]) / 255.f;
      for (std::size_t c = 0; c < 3; ++c) {
        const float v = static_cast<float>(src[4 * x + c]) / 255.f;
        img.at(c, y, x) = a * v + (1.f - a);  // over white
      }
    }
  }
  return img;
}

/// Encodes a 3xHxW float image in [0,1] as 8-bit RGB. Values are scaled by
/// 255 and rounded half-to-even.
inline void write_png(const Image& img, const std::string& path, int compression_level = 6) {
  if (img.rank() != 3 || img.channels() != 3)
    throw ValueError("write_png: expected a 3xHxW image, got " + img.shape_str());
  detail::FileHandle file(std::fopen(path.c_str(), "wb"));
  if (!file) throw IoError("cannot write PNG '" + path + "'");

  std::string error_msg;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &error_msg,
                                            detail::png_error_fn, detail::png_warning_fn);
  if (!png) throw IoError("libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("libpng init failed");
  }

  const std::size_t h = img.height(), w = img.width();
  std::vector<unsigned char> row(w * 3);

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("cannot encode PNG '" + path + "': " + error_msg);
  }

  png_init_io(png, file.get());
  png_set_compression_level(png, compression_level);
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        const float v = std::clamp(img.at(c, y, x), 0.f, 1.f) * 255.f;
        row[3 * x + c] = static_cast<unsigned char>(std::nearbyintf(v));
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace strokepatch
