#pragma once

#include <png.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "ctcbench/core/error.hpp"
#include "ctcbench/core/rng.hpp"

namespace ctcbench {

/// 8-bit single-channel image, row-major.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

  bool empty() const noexcept { return pixels.empty(); }
  std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }

  friend bool operator==(const Image&, const Image&) = default;
};

inline std::uint64_t image_hash(const Image& img, std::uint64_t h = 0xcbf29ce484222325ULL) {
  auto feed = [&h](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xffu;
      h *= 0x100000001b3ULL;
    }
  };
  feed(static_cast<std::uint64_t>(img.width));
  feed(static_cast<std::uint64_t>(img.height));
  for (auto p : img.pixels) {
    h ^= p;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Decodes any PNG into 8-bit grayscale.
inline Image read_png(const std::filesystem::path& path) {
  png_image desc;
  std::memset(&desc, 0, sizeof desc);
  desc.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&desc, path.string().c_str())) {
    throw IoError("cannot decode PNG '" + path.string() + "': " + desc.message);
  }
  desc.format = PNG_FORMAT_GRAY;
  Image img(static_cast<int>(desc.width), static_cast<int>(desc.height));
  if (!png_image_finish_read(&desc, nullptr, img.pixels.data(), 0, nullptr)) {
    png_image_free(&desc);
    throw IoError("cannot decode PNG '" + path.string() + "': " + desc.message);
  }
  return img;
}

/// Reads only the PNG header; true when the file exists and is a PNG.
inline bool png_readable(const std::filesystem::path& path) {
  png_image desc;
  std::memset(&desc, 0, sizeof desc);
  desc.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&desc, path.string().c_str())) return false;
  png_image_free(&desc);
  return true;
}

inline void write_png(const std::filesystem::path& path, const Image& img) {
  if (img.empty()) throw ValidationError("write_png: empty image");
  png_image desc;
  std::memset(&desc, 0, sizeof desc);
  desc.version = PNG_IMAGE_VERSION;
  desc.width = static_cast<png_uint_32>(img.width);
  desc.height = static_cast<png_uint_32>(img.height);
  desc.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&desc, path.string().c_str(), 0, img.pixels.data(), 0,
                               nullptr)) {
    throw IoError("cannot write PNG '" + path.string() + "': " + desc.message);
  }
}

}  // namespace ctcbench
