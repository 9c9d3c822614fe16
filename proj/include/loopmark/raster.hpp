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

#ifndef LOOPMARK_RASTER_HPP_
#define LOOPMARK_RASTER_HPP_

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace loopmark {

using Rgb = std::array<std::uint8_t, 3>;

/// 8-bit RGB image, row-major, no padding.
struct Raster {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  Raster() = default;
  Raster(int w, int h, Rgb fill = {0, 0, 0});

  Rgb at(int x, int y) const {
    const std::uint8_t* p = &pixels[Offset(x, y)];
    return {p[0], p[1], p[2]};
  }
  void set(int x, int y, Rgb c) {
    std::uint8_t* p = &pixels[Offset(x, y)];
    p[0] = c[0];
    p[1] = c[1];
    p[2] = c[2];
  }
  /// Fills [x0, x1) x [y0, y1), clipped to the image.
  void fill_rect(int x0, int y0, int x1, int y1, Rgb c);

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  std::size_t Offset(int x, int y) const {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
            static_cast<std::size_t>(x)) *
           3;
  }
};

/// PNG codec (libpng). Any PNG color type is converted to 8-bit RGB on read.
/// Decode failures throw UserError.
Raster decode_png(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_png(const Raster& image);
Raster read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Raster& image);

}  // namespace loopmark

#endif  // LOOPMARK_RASTER_HPP_
