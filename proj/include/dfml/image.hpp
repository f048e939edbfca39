/*
 * Copyright 2026 The dfml Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dfml/tensor.hpp"

namespace dfml {

/// 8-bit RGB raster, interleaved row-major (y, x, channel).
struct Image8 {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;

  Image8() = default;
  Image8(std::size_t w, std::size_t h, std::uint8_t fill = 0)
      : width(w), height(h), pixels(w * h * 3, fill) {}

  std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c) {
    return pixels[(y * width + x) * 3 + c];
  }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t c) const {
    return pixels[(y * width + x) * 3 + c];
  }

  friend bool operator==(const Image8&, const Image8&) = default;
};

class ImageError : public Error {
 public:
  using Error::Error;
};

inline Image8 read_png(const std::filesystem::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw ImageError(path.string() + ": unreadable image (" + img.message + ")");
  }
  const auto fmt = img.format;
  if (!(fmt & PNG_FORMAT_FLAG_COLOR) || (fmt & PNG_FORMAT_FLAG_ALPHA) ||
      (fmt & PNG_FORMAT_FLAG_LINEAR)) {
    png_image_free(&img);
    throw ImageError(path.string() + ": not an 8-bit RGB image");
  }
  img.format = PNG_FORMAT_RGB;
  Image8 out(img.width, img.height);
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw ImageError(path.string() + ": corrupt image (" + msg + ")");
  }
  return out;
}

inline void write_png(const std::filesystem::path& path, const Image8& image) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.c_str(), 0, image.pixels.data(), 0, nullptr)) {
    throw ImageError(path.string() + ": cannot write image (" + img.message + ")");
  }
}

/// Planar 3 x H x W tensor with values scaled to [0, 1].
template <typename T = float>
Tensor<T> to_tensor(const Image8& image) {
  Tensor<T> t({3, image.height, image.width});
  const std::size_t area = image.width * image.height;
  for (std::size_t p = 0; p < area; ++p)
    for (std::size_t c = 0; c < 3; ++c)
      t[c * area + p] = static_cast<T>(image.pixels[p * 3 + c]) / T(255);
  return t;
}

/// Center-crops to a square, then bilinearly resizes to height x width
/// (half-pixel centers, edge clamped) and scales to [0, 1].
template <typename T = float>
Tensor<T> crop_and_resize(const Image8& image, std::size_t height, std::size_t width) {
  if (image.width == 0 || image.height == 0) throw ImageError("empty image");
  if (height == 0 || width == 0) throw ImageError("target size must be positive");
  const std::size_t side = std::min(image.width, image.height);
  const std::size_t x0 = (image.width - side) / 2, y0 = (image.height - side) / 2;
  const double sy = static_cast<double>(side) / static_cast<double>(height);
  const double sx = static_cast<double>(side) / static_cast<double>(width);

  struct Tap {
    std::size_t lo, hi;
    T frac;
  };
  const auto taps = [side](std::size_t n, double scale) {
    std::vector<Tap> out(n);
    for (std::size_t i = 0; i < n; ++i) {
      double src = (static_cast<double>(i) + 0.5) * scale - 0.5;
      src = std::clamp(src, 0.0, static_cast<double>(side - 1));
      const auto lo = static_cast<std::size_t>(std::floor(src));
      const std::size_t hi = std::min(lo + 1, side - 1);
      out[i] = {lo, hi, static_cast<T>(src - static_cast<double>(lo))};
    }
    return out;
  };
  const auto ty = taps(height, sy), tx = taps(width, sx);

  Tensor<T> out({3, height, width});
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) {
        const auto px = [&](std::size_t yy, std::size_t xx) {
          return static_cast<T>(image.at(x0 + xx, y0 + yy, c));
        };
        const T a = px(ty[y].lo, tx[x].lo), b = px(ty[y].lo, tx[x].hi);
        const T cc = px(ty[y].hi, tx[x].lo), d = px(ty[y].hi, tx[x].hi);
        const T top = a + tx[x].frac * (b - a);
        const T bottom = cc + tx[x].frac * (d - cc);
        const T v = top + ty[y].frac * (bottom - top);
        out[(c * height + y) * width + x] = std::clamp(v / T(255), T(0), T(1));
      }
    }
  }
  return out;
}

}  // namespace dfml
