/*
 * Copyright 2026 The Loopmark Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "loopmark/raster.hpp"

#include <png.h>

#include <algorithm>
#include <cstring>
#include <string>
#include <string_view>

#include "loopmark/error.hpp"
#include "loopmark/fsutil.hpp"

namespace loopmark {

Raster::Raster(int w, int h, Rgb fill) : width(w), height(h) {
  if (w < 1 || h < 1) throw InvalidArgument("raster dims must be positive");
  pixels.resize(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3);
  for (std::size_t i = 0; i < pixels.size(); i += 3) {
    pixels[i] = fill[0];
    pixels[i + 1] = fill[1];
    pixels[i + 2] = fill[2];
  }
}

void Raster::fill_rect(int x0, int y0, int x1, int y1, Rgb c) {
  x0 = std::clamp(x0, 0, width);
  x1 = std::clamp(x1, 0, width);
  y0 = std::clamp(y0, 0, height);
  y1 = std::clamp(y1, 0, height);
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) set(x, y, c);
  }
}

Raster decode_png(std::span<const std::uint8_t> bytes) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw UserError(std::string("not a decodable PNG: ") + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  if (image.width == 0 || image.height == 0 || image.width > 1u << 16 ||
      image.height > 1u << 16) {
    png_image_free(&image);
    throw UserError("PNG dimensions out of range");
  }
  Raster out;
  out.width = static_cast<int>(image.width);
  out.height = static_cast<int>(image.height);
  out.pixels.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw UserError("PNG decode failed: " + msg);
  }
  return out;
}

std::vector<std::uint8_t> encode_png(const Raster& raster) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(raster.width);
  image.height = static_cast<png_uint_32>(raster.height);
  image.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0,
                                 raster.pixels.data(), 0, nullptr)) {
    throw Error(std::string("PNG sizing failed: ") + image.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0,
                                 raster.pixels.data(), 0, nullptr)) {
    throw Error(std::string("PNG encode failed: ") + image.message);
  }
  out.resize(size);
  return out;
}

Raster read_png(const std::filesystem::path& path) {
  try {
    return decode_png(read_bytes(path));
  } catch (const UserError& e) {
    throw UserError(path.string() + ": " + e.what());
  }
}

void write_png(const std::filesystem::path& path, const Raster& image) {
  auto bytes = encode_png(image);
  write_file_atomic(path, std::string_view(
                              reinterpret_cast<const char*>(bytes.data()),
                              bytes.size()));
}

}  // namespace loopmark
