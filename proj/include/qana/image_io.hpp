// Copyright 2026 The QANA Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Raw image decoding: 8-bit PNG through libpng and a minimal float tile
// format (.raw): "QRAW", u32 height, u32 width, u32 channels, then
// height*width*channels little-endian float32 samples on the 0..255 scale.

#pragma once

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "qana/error.hpp"

namespace qana {

/// Decoded image before preprocessing; samples on the 0..255 scale, HWC.
struct RawImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<float> data;

  float at(std::size_t y, std::size_t x, std::size_t c) const { return data[(y * width + x) * channels + c]; }
};

namespace detail {

template <class T>
void put_le(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  out.append(buf, sizeof(T));
}

template <class T>
T get_le(const char* p) {
  char buf[sizeof(T)];
  std::memcpy(buf, p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open '" + path.string() + "'");
  return std::string(std::istreambuf_iterator<char>(in), {});
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io, "cannot write '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(Errc::io, "short write to '" + path.string() + "'");
}

}  // namespace detail

inline RawImage decode_png(const std::string& bytes, const std::string& what = "png") {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size()))
    throw Error(Errc::decode, what + ": " + img.message);
  img.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw Error(Errc::decode, what + ": " + msg);
  }
  RawImage out{img.height, img.width, 3, std::vector<float>(buf.begin(), buf.end())};
  return out;
}

/// Rounds and clamps samples to 8 bits; channels must be 1 or 3.
inline std::string encode_png(const RawImage& image) {
  if (image.channels != 1 && image.channels != 3)
    throw Error(Errc::invalid_argument, "encode_png: unsupported channel count " + std::to_string(image.channels));
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = image.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<png_byte> buf(image.data.size());
  for (std::size_t i = 0; i < buf.size(); ++i)
    buf[i] = static_cast<png_byte>(std::clamp(std::lround(image.data[i]), 0L, 255L));
  png_alloc_size_t size = 0;
  if (!png_image_write_get_memory_size(img, size, 0, buf.data(), 0, nullptr))
    throw Error(Errc::io, std::string("encode_png: ") + img.message);
  std::string out(size, '\0');
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, buf.data(), 0, nullptr))
    throw Error(Errc::io, std::string("encode_png: ") + img.message);
  out.resize(size);
  return out;
}

inline std::string encode_raw(const RawImage& image) {
  std::string out = "QRAW";
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(image.height));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(image.width));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(image.channels));
  for (float v : image.data) detail::put_le<float>(out, v);
  return out;
}

inline RawImage decode_raw(const std::string& bytes, const std::string& what = "raw") {
  if (bytes.size() < 16 || bytes.compare(0, 4, "QRAW") != 0) throw Error(Errc::decode, what + ": missing QRAW header");
  RawImage img;
  img.height = detail::get_le<std::uint32_t>(bytes.data() + 4);
  img.width = detail::get_le<std::uint32_t>(bytes.data() + 8);
  img.channels = detail::get_le<std::uint32_t>(bytes.data() + 12);
  const std::size_t n = img.height * img.width * img.channels;
  if (n == 0 || bytes.size() != 16 + 4 * n) throw Error(Errc::decode, what + ": payload size does not match header");
  img.data.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    img.data[i] = detail::get_le<float>(bytes.data() + 16 + 4 * i);
    if (!std::isfinite(img.data[i])) throw Error(Errc::decode, what + ": non-finite sample");
  }
  return img;
}

/// Dispatches on the file extension (.png or .raw).
inline RawImage read_image(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  const auto ext = path.extension().string();
  if (ext == ".png") return decode_png(bytes, path.string());
  if (ext == ".raw") return decode_raw(bytes, path.string());
  throw Error(Errc::decode, path.string() + ": unsupported image extension '" + ext + "'");
}

inline void write_image(const std::filesystem::path& path, const RawImage& image) {
  const auto ext = path.extension().string();
  if (ext == ".png") return detail::write_file(path, encode_png(image));
  if (ext == ".raw") return detail::write_file(path, encode_raw(image));
  throw Error(Errc::invalid_argument, path.string() + ": unsupported image extension '" + ext + "'");
}

}  // namespace qana
