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
#include <cstddef>
#include <string>

#include "dfml/tensor.hpp"

namespace dfml {

namespace detail {

// C[m x n] += A[m x k] * B[k x n], all row-major and densely packed.
//
// Every C element accumulates its k products in ascending k order starting
// from its current value, so for a zeroed C the result equals the textbook
// triple loop bit for bit (with floating-point contraction disabled).
template <typename T>
void gemm_accumulate(std::size_t m, std::size_t n, std::size_t k, const T* a,
                     const T* b, T* c) {
  constexpr std::size_t kRowBlock = 4;
  constexpr std::size_t kColBlock = 512;
  for (std::size_t j0 = 0; j0 < n; j0 += kColBlock) {
    const std::size_t j1 = std::min(n, j0 + kColBlock);
    std::size_t i = 0;
    for (; i + kRowBlock <= m; i += kRowBlock) {
      T* c0 = c + (i + 0) * n;
      T* c1 = c + (i + 1) * n;
      T* c2 = c + (i + 2) * n;
      T* c3 = c + (i + 3) * n;
      const T* a0 = a + (i + 0) * k;
      const T* a1 = a + (i + 1) * k;
      const T* a2 = a + (i + 2) * k;
      const T* a3 = a + (i + 3) * k;
      for (std::size_t p = 0; p < k; ++p) {
        const T* brow = b + p * n;
        const T s0 = a0[p], s1 = a1[p], s2 = a2[p], s3 = a3[p];
        for (std::size_t j = j0; j < j1; ++j) {
          const T bv = brow[j];
          c0[j] += s0 * bv;
          c1[j] += s1 * bv;
          c2[j] += s2 * bv;
          c3[j] += s3 * bv;
        }
      }
    }
    for (; i < m; ++i) {
      T* crow = c + i * n;
      const T* arow = a + i * k;
      for (std::size_t p = 0; p < k; ++p) {
        const T* brow = b + p * n;
        const T s = arow[p];
        for (std::size_t j = j0; j < j1; ++j) crow[j] += s * brow[j];
      }
    }
  }
}

}  // namespace detail

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_rank(a, 2, "matmul left operand");
  detail::require_rank(b, 2, "matmul right operand");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw ShapeError("matmul: inner dimensions disagree, " +
                     shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  Tensor<T> out({m, n});
  detail::gemm_accumulate(m, n, k, a.raw(), b.raw(), out.raw());
  return out;
}

}  // namespace dfml
