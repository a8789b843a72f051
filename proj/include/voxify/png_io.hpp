#pragma once

// 8-bit PNG reading/writing on top of libpng's simplified API.

#include <png.h>

#include <array>
#include <filesystem>
#include <string>

#include "common.hpp"

namespace voxify {

struct Rgba8 {
  uint8_t r = 0, g = 0, b = 0, a = 0;
  bool operator==(const Rgba8&) const = default;
};

struct PngImage {
  Image<Rgba8> pixels;
  bool has_alpha = false;
};

inline PngImage read_png(const std::filesystem::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str()))
    throw Error(ErrorCode::kUnreadableFile, path.string() + ": " + img.message);
  PngImage out;
  out.has_alpha = (img.format & PNG_FORMAT_FLAG_ALPHA) != 0;
  img.format = PNG_FORMAT_RGBA;
  out.pixels = Image<Rgba8>(static_cast<int>(img.width), static_cast<int>(img.height));
  if (!png_image_finish_read(&img, nullptr, out.pixels.data.data(), 0, nullptr)) {
    std::string msg = img.message;
    png_image_free(&img);
    throw Error(ErrorCode::kMalformedFile, path.string() + ": " + msg);
  }
  return out;
}

inline void write_png(const std::filesystem::path& path, const Image<Rgba8>& pixels) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(pixels.width);
  img.height = static_cast<png_uint_32>(pixels.height);
  img.format = PNG_FORMAT_RGBA;
  if (!png_image_write_to_file(&img, path.c_str(), 0, pixels.data.data(), 0, nullptr))
    throw Error(ErrorCode::kUnreadableFile, path.string() + ": " + img.message);
}

inline uint8_t to_byte(double v) { return static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

inline Rgba8 to_rgba8(const Rgb& c, double alpha = 1.0) { return {to_byte(c.x), to_byte(c.y), to_byte(c.z), to_byte(alpha)}; }

inline Rgb to_rgb(const Rgba8& p) { return {p.r / 255.0, p.g / 255.0, p.b / 255.0}; }

}  // namespace voxify
