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

#include <cstddef>
#include <limits>
#include <vector>

#include "dfml/conv.hpp"
#include "dfml/tensor.hpp"

namespace dfml {

template <typename T>
struct MaxPoolResult {
  Tensor<T> output;
  // Flat index into the input buffer of each output's maximum.
  std::vector<std::size_t> argmax;
};

/// Max pooling over NCHW planes. Padded cells never win; ties resolve to the
/// lowest flat input index.
template <typename T>
MaxPoolResult<T> max_pool2d(const Tensor<T>& x, std::size_t window = 2,
                            std::size_t stride = 2, std::size_t pad = 0) {
  detail::require_rank(x, 4, "max_pool2d input");
  if (pad >= window) {
    throw ShapeError("max_pool2d: padding must be smaller than the window");
  }
  const auto& s = x.shape();
  const std::size_t planes = s[0] * s[1], h = s[2], w = s[3];
  const std::size_t oh = conv_output_extent(h, window, stride, pad, "height");
  const std::size_t ow = conv_output_extent(w, window, stride, pad, "width");
  MaxPoolResult<T> r{Tensor<T>({s[0], s[1], oh, ow}),
                     std::vector<std::size_t>(planes * oh * ow)};
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = x.raw() + p * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        T best = -std::numeric_limits<T>::infinity();
        std::size_t best_idx = std::numeric_limits<std::size_t>::max();
        for (std::size_t ky = 0; ky < window; ++ky) {
          const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                   static_cast<std::ptrdiff_t>(pad);
          if (y < 0 || y >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t kx = 0; kx < window; ++kx) {
            const std::ptrdiff_t xx = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                      static_cast<std::ptrdiff_t>(pad);
            if (xx < 0 || xx >= static_cast<std::ptrdiff_t>(w)) continue;
            const std::size_t idx = static_cast<std::size_t>(y) * w +
                                    static_cast<std::size_t>(xx);
            if (best_idx == std::numeric_limits<std::size_t>::max() ||
                src[idx] > best) {
              best = src[idx];
              best_idx = idx;
            }
          }
        }
        const std::size_t o = (p * oh + oy) * ow + ox;
        r.output[o] = best;
        r.argmax[o] = p * h * w + best_idx;
      }
    }
  }
  return r;
}

template <typename T>
Tensor<T> max_pool2d_backward(const Tensor<T>& grad_out,
                              const std::vector<std::size_t>& argmax,
                              const Shape& input_shape) {
  if (grad_out.size() != argmax.size()) {
    throw ShapeError("max_pool2d_backward: gradient shape " +
                     shape_str(grad_out.shape()) +
                     " does not match the recorded argmax count");
  }
  Tensor<T> gx(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) {
    if (argmax[i] >= gx.size()) {
      throw ShapeError("max_pool2d_backward: argmax outside input shape " +
                       shape_str(input_shape));
    }
    gx[argmax[i]] += grad_out[i];
  }
  return gx;
}

/// Mean over the spatial axes: N x C x H x W -> N x C.
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  detail::require_rank(x, 4, "global_avg_pool input");
  const auto& s = x.shape();
  const std::size_t planes = s[0] * s[1], area = s[2] * s[3];
  Tensor<T> out({s[0], s[1]});
  for (std::size_t p = 0; p < planes; ++p) {
    T acc{0};
    const T* src = x.raw() + p * area;
    for (std::size_t i = 0; i < area; ++i) acc += src[i];
    out[p] = acc / static_cast<T>(area);
  }
  return out;
}

template <typename T>
Tensor<T> global_avg_pool_backward(const Tensor<T>& grad_out,
                                   const Shape& input_shape) {
  if (input_shape.size() != 4 || grad_out.shape() != Shape{input_shape[0], input_shape[1]}) {
    throw ShapeError("global_avg_pool_backward: gradient shape " +
                     shape_str(grad_out.shape()) + " does not match input " +
                     shape_str(input_shape));
  }
  const std::size_t area = input_shape[2] * input_shape[3];
  const T inv = T{1} / static_cast<T>(area);
  Tensor<T> gx(input_shape);
  for (std::size_t p = 0; p < grad_out.size(); ++p) {
    const T v = grad_out[p] * inv;
    std::fill_n(gx.raw() + p * area, area, v);
  }
  return gx;
}

}  // namespace dfml
