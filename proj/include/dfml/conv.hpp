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
#include <string>

#include "dfml/linalg.hpp"
#include "dfml/tensor.hpp"

namespace dfml {

/// Stride and zero padding of a 2-d sliding window.
struct ConvGeometry {
  std::size_t stride_h = 1;
  std::size_t stride_w = 1;
  std::size_t pad_h = 0;
  std::size_t pad_w = 0;

  static constexpr ConvGeometry square(std::size_t stride, std::size_t pad) {
    return {stride, stride, pad, pad};
  }
};

/// floor((in + 2 pad - kernel) / stride) + 1, rejecting kernels that do not
/// fit the padded input.
inline std::size_t conv_output_extent(std::size_t in, std::size_t kernel,
                                      std::size_t stride, std::size_t pad,
                                      const char* axis) {
  if (stride == 0) {
    throw ShapeError(std::string("conv: stride along ") + axis +
                     " must be positive");
  }
  if (in + 2 * pad < kernel) {
    throw ShapeError(std::string("conv: kernel ") + axis + " " +
                     std::to_string(kernel) + " exceeds padded input " +
                     axis + " " + std::to_string(in + 2 * pad));
  }
  return (in + 2 * pad - kernel) / stride + 1;
}

namespace detail {

// cols[(c, ki, kj), (oy, ox)] = img[c, oy*s - p + ki, ox*s - p + kj]
template <typename T>
void im2col(const T* img, std::size_t channels, std::size_t h, std::size_t w,
            std::size_t kh, std::size_t kw, const ConvGeometry& g,
            std::size_t oh, std::size_t ow, T* cols) {
  for (std::size_t c = 0; c < channels; ++c) {
    const T* plane = img + c * h * w;
    for (std::size_t ki = 0; ki < kh; ++ki) {
      for (std::size_t kj = 0; kj < kw; ++kj) {
        T* row = cols + ((c * kh + ki) * kw + kj) * oh * ow;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(oy * g.stride_h + ki) -
                                   static_cast<std::ptrdiff_t>(g.pad_h);
          T* dst = row + oy * ow;
          if (y < 0 || y >= static_cast<std::ptrdiff_t>(h)) {
            std::fill_n(dst, ow, T{0});
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(y) * w;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const std::ptrdiff_t x = static_cast<std::ptrdiff_t>(ox * g.stride_w + kj) -
                                     static_cast<std::ptrdiff_t>(g.pad_w);
            dst[ox] = (x < 0 || x >= static_cast<std::ptrdiff_t>(w))
                          ? T{0}
                          : src[static_cast<std::size_t>(x)];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: accumulates columns back into img.
template <typename T>
void col2im(const T* cols, std::size_t channels, std::size_t h, std::size_t w,
            std::size_t kh, std::size_t kw, const ConvGeometry& g,
            std::size_t oh, std::size_t ow, T* img) {
  for (std::size_t c = 0; c < channels; ++c) {
    T* plane = img + c * h * w;
    for (std::size_t ki = 0; ki < kh; ++ki) {
      for (std::size_t kj = 0; kj < kw; ++kj) {
        const T* row = cols + ((c * kh + ki) * kw + kj) * oh * ow;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(oy * g.stride_h + ki) -
                                   static_cast<std::ptrdiff_t>(g.pad_h);
          if (y < 0 || y >= static_cast<std::ptrdiff_t>(h)) continue;
          T* dst = plane + static_cast<std::size_t>(y) * w;
          const T* src = row + oy * ow;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const std::ptrdiff_t x = static_cast<std::ptrdiff_t>(ox * g.stride_w + kj) -
                                     static_cast<std::ptrdiff_t>(g.pad_w);
            if (x >= 0 && x < static_cast<std::ptrdiff_t>(w))
              dst[static_cast<std::size_t>(x)] += src[ox];
          }
        }
      }
    }
  }
}

inline bool is_pointwise(std::size_t kh, std::size_t kw, const ConvGeometry& g) {
  return kh == 1 && kw == 1 && g.stride_h == 1 && g.stride_w == 1 &&
         g.pad_h == 0 && g.pad_w == 0;
}

template <typename T>
void transpose_into(const T* src, std::size_t rows, std::size_t cols, T* dst) {
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
}

template <typename T>
Tensor<T> conv2d_impl(const Tensor<T>& input, const Tensor<T>& weight,
                      const Tensor<T>* bias, const ConvGeometry& g) {
  require_rank(input, 4, "conv2d input");
  require_rank(weight, 4, "conv2d weight");
  const auto& is = input.shape();
  const auto& ws = weight.shape();
  const std::size_t n = is[0], ci = is[1], h = is[2], w = is[3];
  const std::size_t co = ws[0], kh = ws[2], kw = ws[3];
  if (ws[1] != ci) {
    throw ShapeError("conv2d: input channel dimension " + std::to_string(ci) +
                     " does not match weight input channels " +
                     std::to_string(ws[1]));
  }
  if (bias && (bias->rank() != 1 || bias->shape()[0] != co)) {
    throw ShapeError("conv2d: bias shape " + shape_str(bias->shape()) +
                     " does not match output channels " + std::to_string(co));
  }
  const std::size_t oh = conv_output_extent(h, kh, g.stride_h, g.pad_h, "height");
  const std::size_t ow = conv_output_extent(w, kw, g.stride_w, g.pad_w, "width");
  const std::size_t patch = ci * kh * kw, plane = oh * ow;

  Tensor<T> out({n, co, oh, ow});
  const bool pointwise = is_pointwise(kh, kw, g);
  std::vector<T> cols(pointwise ? 0 : patch * plane);
  for (std::size_t s = 0; s < n; ++s) {
    const T* x = input.raw() + s * ci * h * w;
    const T* b = x;
    if (!pointwise) {
      im2col(x, ci, h, w, kh, kw, g, oh, ow, cols.data());
      b = cols.data();
    }
    T* y = out.raw() + s * co * plane;
    gemm_accumulate(co, plane, patch, weight.raw(), b, y);
    if (bias) {
      for (std::size_t o = 0; o < co; ++o) {
        const T bv = (*bias)[o];
        for (std::size_t p = 0; p < plane; ++p) y[o * plane + p] += bv;
      }
    }
  }
  return out;
}

}  // namespace detail

/// 2-d cross-correlation of an NCHW input with an OIKhKw weight.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight,
                 const ConvGeometry& geometry) {
  return detail::conv2d_impl<T>(input, weight, nullptr, geometry);
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight,
                 const Tensor<T>& bias, const ConvGeometry& geometry) {
  return detail::conv2d_impl<T>(input, weight, &bias, geometry);
}

template <typename T>
struct ConvGrads {
  Tensor<T> grad_input;
  Tensor<T> grad_weight;
  Tensor<T> grad_bias;
};

/// Gradients of sum(grad_out * conv2d(input, weight, bias)).
template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& weight,
                             const Tensor<T>& grad_out,
                             const ConvGeometry& g) {
  detail::require_rank(input, 4, "conv2d_backward input");
  detail::require_rank(weight, 4, "conv2d_backward weight");
  detail::require_rank(grad_out, 4, "conv2d_backward gradient");
  const auto& is = input.shape();
  const auto& ws = weight.shape();
  const std::size_t n = is[0], ci = is[1], h = is[2], w = is[3];
  const std::size_t co = ws[0], kh = ws[2], kw = ws[3];
  if (ws[1] != ci) {
    throw ShapeError("conv2d_backward: input channel dimension " +
                     std::to_string(ci) + " does not match weight input channels " +
                     std::to_string(ws[1]));
  }
  const std::size_t oh = conv_output_extent(h, kh, g.stride_h, g.pad_h, "height");
  const std::size_t ow = conv_output_extent(w, kw, g.stride_w, g.pad_w, "width");
  const Shape expected{n, co, oh, ow};
  if (grad_out.shape() != expected) {
    throw ShapeError("conv2d_backward: gradient shape " +
                     shape_str(grad_out.shape()) + " does not match forward output " +
                     shape_str(expected));
  }
  const std::size_t patch = ci * kh * kw, plane = oh * ow;
  const bool pointwise = detail::is_pointwise(kh, kw, g);

  ConvGrads<T> r{Tensor<T>(is), Tensor<T>(ws), Tensor<T>({co})};
  std::vector<T> weight_t(patch * co);
  detail::transpose_into(weight.raw(), co, patch, weight_t.data());
  std::vector<T> cols(patch * plane), cols_t(plane * patch),
      grad_cols(pointwise ? 0 : patch * plane);

  for (std::size_t s = 0; s < n; ++s) {
    const T* x = input.raw() + s * ci * h * w;
    const T* gy = grad_out.raw() + s * co * plane;
    for (std::size_t o = 0; o < co; ++o) {
      T acc{0};
      for (std::size_t p = 0; p < plane; ++p) acc += gy[o * plane + p];
      r.grad_bias[o] += acc;
    }
    const T* xcols = x;
    if (!pointwise) {
      detail::im2col(x, ci, h, w, kh, kw, g, oh, ow, cols.data());
      xcols = cols.data();
    }
    detail::transpose_into(xcols, patch, plane, cols_t.data());
    detail::gemm_accumulate(co, patch, plane, gy, cols_t.data(),
                            r.grad_weight.raw());
    T* gx = r.grad_input.raw() + s * ci * h * w;
    if (pointwise) {
      detail::gemm_accumulate(patch, plane, co, weight_t.data(), gy, gx);
    } else {
      std::fill(grad_cols.begin(), grad_cols.end(), T{0});
      detail::gemm_accumulate(patch, plane, co, weight_t.data(), gy,
                              grad_cols.data());
      detail::col2im(grad_cols.data(), ci, h, w, kh, kw, g, oh, ow, gx);
    }
  }
  return r;
}

/// Output extent of a transposed convolution:
/// (in - 1) * stride - 2 * pad + kernel + output_padding.
inline std::size_t conv_transpose_output_extent(std::size_t in, std::size_t kernel,
                                                std::size_t stride, std::size_t pad,
                                                std::size_t output_padding,
                                                const char* axis) {
  if (stride == 0) {
    throw ShapeError(std::string("conv_transpose: stride along ") + axis +
                     " must be positive");
  }
  if (output_padding >= stride) {
    throw ShapeError(std::string("conv_transpose: output padding along ") +
                     axis + " must be smaller than the stride");
  }
  const std::size_t full = (in - 1) * stride + kernel + output_padding;
  if (full <= 2 * pad) {
    throw ShapeError(std::string("conv_transpose: padding consumes the whole ") +
                     axis);
  }
  return full - 2 * pad;
}

/// Transposed convolution (adjoint of conv2d with respect to its input).
/// Weight layout is [in_channels, out_channels, Kh, Kw].
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& input, const Tensor<T>& weight,
                           const Tensor<T>* bias, const ConvGeometry& g,
                           std::size_t output_padding_h,
                           std::size_t output_padding_w) {
  detail::require_rank(input, 4, "conv_transpose2d input");
  detail::require_rank(weight, 4, "conv_transpose2d weight");
  const auto& is = input.shape();
  const auto& ws = weight.shape();
  const std::size_t n = is[0], ci = is[1], h = is[2], w = is[3];
  const std::size_t co = ws[1], kh = ws[2], kw = ws[3];
  if (ws[0] != ci) {
    throw ShapeError("conv_transpose2d: input channel dimension " +
                     std::to_string(ci) + " does not match weight input channels " +
                     std::to_string(ws[0]));
  }
  if (bias && (bias->rank() != 1 || bias->shape()[0] != co)) {
    throw ShapeError("conv_transpose2d: bias shape " + shape_str(bias->shape()) +
                     " does not match output channels " + std::to_string(co));
  }
  const std::size_t oh = conv_transpose_output_extent(h, kh, g.stride_h, g.pad_h,
                                                      output_padding_h, "height");
  const std::size_t ow = conv_transpose_output_extent(w, kw, g.stride_w, g.pad_w,
                                                      output_padding_w, "width");
  const std::size_t patch = co * kh * kw, plane = h * w;
  std::vector<T> weight_t(patch * ci);
  detail::transpose_into(weight.raw(), ci, patch, weight_t.data());
  std::vector<T> cols(patch * plane);
  Tensor<T> out({n, co, oh, ow});
  for (std::size_t s = 0; s < n; ++s) {
    std::fill(cols.begin(), cols.end(), T{0});
    detail::gemm_accumulate(patch, plane, ci, weight_t.data(),
                            input.raw() + s * ci * plane, cols.data());
    T* y = out.raw() + s * co * oh * ow;
    detail::col2im(cols.data(), co, oh, ow, kh, kw, g, h, w, y);
    if (bias) {
      for (std::size_t o = 0; o < co; ++o) {
        const T bv = (*bias)[o];
        for (std::size_t p = 0; p < oh * ow; ++p) y[o * oh * ow + p] += bv;
      }
    }
  }
  return out;
}

template <typename T>
ConvGrads<T> conv_transpose2d_backward(const Tensor<T>& input,
                                       const Tensor<T>& weight,
                                       const Tensor<T>& grad_out,
                                       const ConvGeometry& g) {
  detail::require_rank(input, 4, "conv_transpose2d_backward input");
  detail::require_rank(weight, 4, "conv_transpose2d_backward weight");
  detail::require_rank(grad_out, 4, "conv_transpose2d_backward gradient");
  const auto& is = input.shape();
  const auto& ws = weight.shape();
  const auto& gs = grad_out.shape();
  const std::size_t n = is[0], ci = is[1], h = is[2], w = is[3];
  const std::size_t co = ws[1], kh = ws[2], kw = ws[3];
  if (ws[0] != ci) {
    throw ShapeError("conv_transpose2d_backward: input channel dimension " +
                     std::to_string(ci) + " does not match weight input channels " +
                     std::to_string(ws[0]));
  }
  if (gs[0] != n || gs[1] != co) {
    throw ShapeError("conv_transpose2d_backward: gradient shape " + shape_str(gs) +
                     " does not match batch/out channels");
  }
  const std::size_t oh = gs[2], ow = gs[3];
  // The output extent must map back onto the input through the forward
  // convolution geometry.
  if (conv_output_extent(oh, kh, g.stride_h, g.pad_h, "height") != h ||
      conv_output_extent(ow, kw, g.stride_w, g.pad_w, "width") != w) {
    throw ShapeError("conv_transpose2d_backward: gradient shape " + shape_str(gs) +
                     " is not a valid output for input " + shape_str(is));
  }
  const std::size_t patch = co * kh * kw, plane = h * w;
  ConvGrads<T> r{Tensor<T>(is), Tensor<T>(ws), Tensor<T>({co})};
  std::vector<T> cols(patch * plane), cols_t(plane * patch);
  for (std::size_t s = 0; s < n; ++s) {
    const T* gy = grad_out.raw() + s * co * oh * ow;
    for (std::size_t o = 0; o < co; ++o) {
      T acc{0};
      for (std::size_t p = 0; p < oh * ow; ++p) acc += gy[o * oh * ow + p];
      r.grad_bias[o] += acc;
    }
    detail::im2col(gy, co, oh, ow, kh, kw, g, h, w, cols.data());
    detail::gemm_accumulate(ci, plane, patch, weight.raw(), cols.data(),
                            r.grad_input.raw() + s * ci * plane);
    detail::transpose_into(cols.data(), patch, plane, cols_t.data());
    detail::gemm_accumulate(ci, patch, plane, input.raw() + s * ci * plane,
                            cols_t.data(), r.grad_weight.raw());
  }
  return r;
}

}  // namespace dfml
