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

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dfml {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when tensor extents do not agree with an operation's contract.
class ShapeError : public Error {
 public:
  using Error::Error;
};

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline void check_extents(const Shape& shape) {
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == 0) {
      throw ShapeError("tensor extent " + std::to_string(i) +
                       " is zero in shape " + shape_str(shape));
    }
  }
}

/// Dense row-major array. An empty shape is a scalar holding one element.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() : data_(1, T{0}) {}

  explicit Tensor(Shape shape, T fill = T{0}) : shape_(std::move(shape)) {
    check_extents(shape_);
    data_.assign(numel(shape_), fill);
  }

  Tensor(Shape shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    check_extents(shape_);
    if (data_.size() != numel(shape_)) {
      throw ShapeError("buffer of " + std::to_string(data_.size()) +
                       " elements does not fill shape " + shape_str(shape_));
    }
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, T value) {
    return Tensor(std::move(shape), value);
  }
  static Tensor scalar(T value) {
    Tensor t;
    t.data_[0] = value;
    return t;
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }

  std::size_t dim(std::size_t axis) const {
    if (axis >= shape_.size()) {
      throw ShapeError("axis " + std::to_string(axis) +
                       " out of range for shape " + shape_str(shape_));
    }
    return shape_[axis];
  }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  T* raw() noexcept { return data_.data(); }
  const T* raw() const noexcept { return data_.data(); }
  const std::vector<T>& buffer() const noexcept { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::size_t offset(std::span<const std::size_t> index) const {
    if (index.size() != shape_.size()) {
      throw ShapeError("index of rank " + std::to_string(index.size()) +
                       " used on tensor of shape " + shape_str(shape_));
    }
    std::size_t flat = 0;
    for (std::size_t i = 0; i < index.size(); ++i) {
      if (index[i] >= shape_[i]) {
        throw ShapeError("index " + std::to_string(index[i]) +
                         " out of bounds on axis " + std::to_string(i) +
                         " of shape " + shape_str(shape_));
      }
      flat = flat * shape_[i] + index[i];
    }
    return flat;
  }

  T& at(std::initializer_list<std::size_t> index) {
    return data_[offset(std::span<const std::size_t>(index.begin(), index.size()))];
  }
  const T& at(std::initializer_list<std::size_t> index) const {
    return data_[offset(std::span<const std::size_t>(index.begin(), index.size()))];
  }

  Tensor reshape(Shape shape) const& {
    Tensor out = *this;
    return std::move(out).reshape(std::move(shape));
  }

  Tensor reshape(Shape shape) && {
    check_extents(shape);
    if (numel(shape) != data_.size()) {
      throw ShapeError("cannot reshape " + shape_str(shape_) + " to " +
                       shape_str(shape));
    }
    shape_ = std::move(shape);
    return std::move(*this);
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

namespace detail {

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b,
                        const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape " + shape_str(a.shape()) +
                     " does not match " + shape_str(b.shape()));
  }
}

template <typename T>
void require_rank(const Tensor<T>& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(what) + " must have rank " +
                     std::to_string(rank) + ", got shape " +
                     shape_str(t.shape()));
  }
}

template <typename T, typename F>
Tensor<T> map(const Tensor<T>& x, F f) {
  Tensor<T> out = x;
  for (auto& v : out.data()) v = f(v);
  return out;
}

template <typename T, typename F>
Tensor<T> zip(const Tensor<T>& a, const Tensor<T>& b, const char* op, F f) {
  require_same_shape(a, b, op);
  Tensor<T> out = a;
  auto o = out.data();
  auto bv = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = f(o[i], bv[i]);
  return out;
}

}  // namespace detail

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::zip(a, b, "add", [](T x, T y) { return x + y; });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::zip(a, b, "sub", [](T x, T y) { return x - y; });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::zip(a, b, "mul", [](T x, T y) { return x * y; });
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& a, T s) {
  return detail::map(a, [s](T x) { return x * s; });
}

/// acc += x, used for gradient accumulation.
template <typename T>
void add_inplace(Tensor<T>& acc, const Tensor<T>& x) {
  detail::require_same_shape(acc, x, "add_inplace");
  auto a = acc.data();
  auto b = x.data();
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return detail::map(x, [](T v) { return v > T{0} ? v : T{0}; });
}

/// Gradient of relu given its input; the subgradient at 0 is 0.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& grad_out) {
  return detail::zip(grad_out, x, "relu_backward",
                     [](T g, T v) { return v > T{0} ? g : T{0}; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return detail::map(x, [](T v) {
    if (v >= T{0}) return T{1} / (T{1} + std::exp(-v));
    const T e = std::exp(v);
    return e / (T{1} + e);
  });
}

/// Gradient of sigmoid expressed through its output y.
template <typename T>
Tensor<T> sigmoid_backward(const Tensor<T>& y, const Tensor<T>& grad_out) {
  return detail::zip(grad_out, y, "sigmoid_backward",
                     [](T g, T s) { return g * s * (T{1} - s); });
}

template <typename T>
T sum(const Tensor<T>& x) {
  T acc{0};
  for (T v : x.data()) acc += v;
  return acc;
}

template <typename T>
T mean(const Tensor<T>& x) {
  return sum(x) / static_cast<T>(x.size());
}

/// Sum over one axis; the axis is removed from the result shape.
template <typename T>
Tensor<T> sum(const Tensor<T>& x, std::size_t axis) {
  const Shape& s = x.shape();
  if (axis >= s.size()) {
    throw ShapeError("sum: axis " + std::to_string(axis) +
                     " out of range for shape " + shape_str(s));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t n = s[axis];
  Shape out_shape;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (i != axis) out_shape.push_back(s[i]);
  Tensor<T> out(out_shape);
  const T* src = x.raw();
  T* dst = out.raw();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t i = 0; i < inner; ++i)
        dst[o * inner + i] += src[(o * n + k) * inner + i];
  return out;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x, std::size_t axis) {
  const std::size_t n = x.dim(axis);
  return mul_scalar(sum(x, axis), T{1} / static_cast<T>(n));
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  return x.reshape(std::move(shape));
}

template <typename T>
Tensor<T> transpose2d(const Tensor<T>& x) {
  detail::require_rank(x, 2, "transpose2d input");
  const std::size_t rows = x.shape()[0], cols = x.shape()[1];
  Tensor<T> out({cols, rows});
  const T* src = x.raw();
  T* dst = out.raw();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
  return out;
}

/// Zero-pads the two spatial axes of an NCHW tensor.
template <typename T>
Tensor<T> pad2d(const Tensor<T>& x, std::size_t pad_h, std::size_t pad_w) {
  detail::require_rank(x, 4, "pad2d input");
  const auto& s = x.shape();
  const std::size_t planes = s[0] * s[1], h = s[2], w = s[3];
  const std::size_t oh = h + 2 * pad_h, ow = w + 2 * pad_w;
  Tensor<T> out({s[0], s[1], oh, ow});
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t y = 0; y < h; ++y)
      std::copy_n(x.raw() + (p * h + y) * w, w,
                  out.raw() + (p * oh + y + pad_h) * ow + pad_w);
  return out;
}

/// Extracts an h x w window at (top, left) from each NCHW plane.
template <typename T>
Tensor<T> crop2d(const Tensor<T>& x, std::size_t top, std::size_t left,
                 std::size_t h, std::size_t w) {
  detail::require_rank(x, 4, "crop2d input");
  const auto& s = x.shape();
  if (top + h > s[2]) {
    throw ShapeError("crop2d: rows [" + std::to_string(top) + ", " +
                     std::to_string(top + h) + ") exceed height " +
                     std::to_string(s[2]));
  }
  if (left + w > s[3]) {
    throw ShapeError("crop2d: columns [" + std::to_string(left) + ", " +
                     std::to_string(left + w) + ") exceed width " +
                     std::to_string(s[3]));
  }
  const std::size_t planes = s[0] * s[1];
  Tensor<T> out({s[0], s[1], h, w});
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t y = 0; y < h; ++y)
      std::copy_n(x.raw() + (p * s[2] + top + y) * s[3] + left, w,
                  out.raw() + (p * h + y) * w);
  return out;
}

/// Adjoint of crop2d: scatters the window back into a zero tensor of `full`.
template <typename T>
Tensor<T> crop2d_backward(const Tensor<T>& grad_out, const Shape& full,
                          std::size_t top, std::size_t left) {
  detail::require_rank(grad_out, 4, "crop2d_backward gradient");
  Tensor<T> out(full);
  const auto& g = grad_out.shape();
  if (full.size() != 4 || g[0] != full[0] || g[1] != full[1] ||
      top + g[2] > full[2] || left + g[3] > full[3]) {
    throw ShapeError("crop2d_backward: window " + shape_str(g) +
                     " does not fit " + shape_str(full));
  }
  const std::size_t planes = g[0] * g[1];
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t y = 0; y < g[2]; ++y)
      std::copy_n(grad_out.raw() + (p * g[2] + y) * g[3], g[3],
                  out.raw() + (p * full[2] + top + y) * full[3] + left);
  return out;
}

template <typename T>
Tensor<T> pad2d_backward(const Tensor<T>& grad_out, std::size_t pad_h,
                         std::size_t pad_w) {
  detail::require_rank(grad_out, 4, "pad2d_backward gradient");
  const auto& s = grad_out.shape();
  if (s[2] <= 2 * pad_h || s[3] <= 2 * pad_w) {
    throw ShapeError("pad2d_backward: padding exceeds " + shape_str(s));
  }
  return crop2d(grad_out, pad_h, pad_w, s[2] - 2 * pad_h, s[3] - 2 * pad_w);
}

}  // namespace dfml
