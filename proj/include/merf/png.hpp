#pragma once

#include <png.h>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "merf/errors.hpp"
#include "merf/render.hpp"

namespace merf {

namespace detail {

inline png_uint_32 png_format_for(int channels) {
  switch (channels) {
    case 1: return PNG_FORMAT_GRAY;
    case 3: return PNG_FORMAT_RGB;
    case 4: return PNG_FORMAT_RGBA;
    default: throw ValidationError("unsupported PNG channel count " + std::to_string(channels));
  }
}

}  // namespace detail

// Lossless 8-bit encode. Output bytes depend only on the pixels.
inline std::vector<std::uint8_t> encode_png(const Image& img) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = detail::png_format_for(img.channels);
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, img.pixels.data(), 0, nullptr)) {
    throw IoError(std::string("PNG encode failed: ") + image.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, img.pixels.data(), 0, nullptr)) {
    throw IoError(std::string("PNG encode failed: ") + image.message);
  }
  out.resize(size);
  return out;
}

inline Image decode_png(const std::vector<std::uint8_t>& bytes, const std::string& name) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw ValidationError(name + ": not a PNG file (" + image.message + ")");
  }
  int channels = 0;
  switch (image.format) {
    case PNG_FORMAT_GRAY: channels = 1; break;
    case PNG_FORMAT_RGB: channels = 3; break;
    case PNG_FORMAT_RGBA: channels = 4; break;
    default:
      png_image_free(&image);
      throw ValidationError(name + ": unsupported PNG pixel format");
  }
  Image img(static_cast<int>(image.width), static_cast<int>(image.height), channels);
  if (!png_image_finish_read(&image, nullptr, img.pixels.data(), 0, nullptr)) {
    throw ValidationError(name + ": PNG decode failed (" + image.message + ")");
  }
  return img;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::filesystem::path& path,
                             const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot create " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

inline void write_png(const std::filesystem::path& path, const Image& img) {
  write_file_bytes(path, encode_png(img));
}

inline Image read_png(const std::filesystem::path& path) {
  return decode_png(read_file_bytes(path), path.string());
}

}  // namespace merf
