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

// Independent reference implementations used as test oracles. Everything
// here is written as directly as possible and shares no code with the
// optimized library paths.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "dfml/dfml.hpp"

namespace oracle {

using dfml::Shape;
using dfml::Tensor;

template <typename T>
Tensor<T> random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(std::move(shape));
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.data()) v = static_cast<T>(u(rng));
  return t;
}

// Six nested loops over (n, o, y, x, c, ky, kx), cross-correlation.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias, std::size_t sh,
                 std::size_t sw, std::size_t ph, std::size_t pw) {
  const auto N = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  const auto O = w.shape()[0], KH = w.shape()[2], KW = w.shape()[3];
  const auto OH = (H + 2 * ph - KH) / sh + 1, OW = (W + 2 * pw - KW) / sw + 1;
  Tensor<T> out({N, O, OH, OW});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t oy = 0; oy < OH; ++oy)
        for (std::size_t ox = 0; ox < OW; ++ox) {
          double acc = bias ? static_cast<double>((*bias)[o]) : 0.0;
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t ky = 0; ky < KH; ++ky)
              for (std::size_t kx = 0; kx < KW; ++kx) {
                const long iy = static_cast<long>(oy * sh + ky) - static_cast<long>(ph);
                const long ix = static_cast<long>(ox * sw + kx) - static_cast<long>(pw);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(H) || ix >= static_cast<long>(W))
                  continue;
                acc += static_cast<double>(x.at({n, c, static_cast<std::size_t>(iy),
                                                 static_cast<std::size_t>(ix)})) *
                       static_cast<double>(w.at({o, c, ky, kx}));
              }
          out.at({n, o, oy, ox}) = static_cast<T>(acc);
        }
  return out;
}

// Scatter form of the transposed convolution; weight is [Cin, Cout, K, K].
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias,
                           std::size_t stride, std::size_t pad, std::size_t out_h,
                           std::size_t out_w) {
  const auto N = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  const auto O = w.shape()[1], K = w.shape()[2];
  Tensor<T> out({N, O, out_h, out_w});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t y = 0; y < out_h; ++y)
        for (std::size_t xx = 0; xx < out_w; ++xx)
          out.at({n, o, y, xx}) = bias ? (*bias)[o] : T(0);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t iy = 0; iy < H; ++iy)
        for (std::size_t ix = 0; ix < W; ++ix)
          for (std::size_t o = 0; o < O; ++o)
            for (std::size_t ky = 0; ky < K; ++ky)
              for (std::size_t kx = 0; kx < K; ++kx) {
                const long y = static_cast<long>(iy * stride + ky) - static_cast<long>(pad);
                const long xo = static_cast<long>(ix * stride + kx) - static_cast<long>(pad);
                if (y < 0 || xo < 0 || y >= static_cast<long>(out_h) ||
                    xo >= static_cast<long>(out_w))
                  continue;
                out.at({n, o, static_cast<std::size_t>(y), static_cast<std::size_t>(xo)}) +=
                    x.at({n, c, iy, ix}) * w.at({c, o, ky, kx});
              }
  return out;
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  const auto M = a.shape()[0], K = a.shape()[1], N = b.shape()[1];
  Tensor<T> c({M, N});
  for (std::size_t i = 0; i < M; ++i)
    for (std::size_t j = 0; j < N; ++j) {
      T acc = 0;
      for (std::size_t k = 0; k < K; ++k) acc += a[i * K + k] * b[k * N + j];
      c[i * N + j] = acc;
    }
  return c;
}

// Central finite difference of a scalar function with respect to every
// element of `x` (restored afterwards).
inline Tensor<double> numeric_gradient(const std::function<double()>& f, Tensor<double>& x,
                                       double step = 1e-3) {
  Tensor<double> g(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + step;
    const double up = f();
    x[i] = keep - step;
    const double down = f();
    x[i] = keep;
    g[i] = (up - down) / (2 * step);
  }
  return g;
}

// Norm-wise relative error ||a - b|| / max(||a||, ||b||).
template <typename A, typename B>
double relative_error(const A& a, const B& b) {
  double diff = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (static_cast<double>(a[i]) - static_cast<double>(b[i])) *
            (static_cast<double>(a[i]) - static_cast<double>(b[i]));
    na += static_cast<double>(a[i]) * static_cast<double>(a[i]);
    nb += static_cast<double>(b[i]) * static_cast<double>(b[i]);
  }
  const double scale = std::max({std::sqrt(na), std::sqrt(nb), 1e-300});
  return std::sqrt(diff) / scale;
}

// Elementwise |a - b| / max(|a|, |b|, floor), maximized.
template <typename A, typename B>
double max_elementwise_relative(const A& a, const B& b, double floor = 1e-12) {
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = static_cast<double>(a[i]), y = static_cast<double>(b[i]);
    worst = std::max(worst, std::abs(x - y) / std::max({std::abs(x), std::abs(y), floor}));
  }
  return worst;
}

// Weighted sum <w, x>, the scalar probe used by gradient checks.
template <typename T>
double dot(const Tensor<T>& a, const Tensor<T>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

// P(score_pos > score_neg) + 0.5 P(tie) over all pairs.
inline double mann_whitney(const std::vector<double>& scores,
                           const std::vector<dfml::Label>& labels) {
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != dfml::Label::septic) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != dfml::Label::non_septic) continue;
      pairs += 1;
      if (scores[i] > scores[j]) wins += 1;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

// Smallest |val_frames - target| over every subset of patients that leaves
// both sides non-empty.
inline double best_split_gap(const std::vector<std::size_t>& frames, double val_fraction) {
  const std::size_t n = frames.size();
  double total = 0;
  for (auto f : frames) total += static_cast<double>(f);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t mask = 1; mask + 1 < (std::size_t{1} << n); ++mask) {
    double v = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (mask >> i & 1) v += static_cast<double>(frames[i]);
    best = std::min(best, std::abs(v - val_fraction * total));
  }
  return best;
}

// Bilinear sample of an 8-bit channel at continuous source coordinates with
// half-pixel centers, edge clamped, evaluated from the textbook formula.
inline double bilinear(const dfml::Image8& img, std::size_t c, double sy, double sx) {
  const double maxy = static_cast<double>(img.height - 1);
  const double maxx = static_cast<double>(img.width - 1);
  sy = std::clamp(sy, 0.0, maxy);
  sx = std::clamp(sx, 0.0, maxx);
  const double y0 = std::floor(sy), x0 = std::floor(sx);
  const double y1 = std::min(y0 + 1, maxy), x1 = std::min(x0 + 1, maxx);
  const double wy = sy - y0, wx = sx - x0;
  const auto p = [&](double y, double x) {
    return static_cast<double>(img.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y), c));
  };
  return (1 - wy) * (1 - wx) * p(y0, x0) + (1 - wy) * wx * p(y0, x1) +
         wy * (1 - wx) * p(y1, x0) + wy * wx * p(y1, x1);
}

// Inertia of a fixed assignment with centroids at the cluster means.
inline double assignment_inertia(const Tensor<double>& x, const std::vector<std::size_t>& a,
                                 std::size_t k) {
  const std::size_t n = x.shape()[0], d = x.shape()[1];
  std::vector<double> c(k * d, 0.0);
  std::vector<double> cnt(k, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    cnt[a[i]] += 1;
    for (std::size_t t = 0; t < d; ++t) c[a[i] * d + t] += x[i * d + t];
  }
  double s = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t t = 0; t < d; ++t) {
      const double m = c[a[i] * d + t] / cnt[a[i]];
      s += (x[i * d + t] - m) * (x[i * d + t] - m);
    }
  return s;
}

// Plain Lloyd iterations from k distinct random points; the brute-force
// restart baseline for k-means.
inline double random_restart_kmeans(const Tensor<double>& x, std::size_t k,
                                    std::mt19937_64& rng) {
  const std::size_t n = x.shape()[0], d = x.shape()[1];
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<double> c(k * d);
  for (std::size_t j = 0; j < k; ++j)
    for (std::size_t t = 0; t < d; ++t) c[j * d + t] = x[idx[j] * d + t];
  std::vector<std::size_t> a(n, k);
  for (int it = 0; it < 300; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < k; ++j) {
        double s = 0;
        for (std::size_t t = 0; t < d; ++t) s += (x[i * d + t] - c[j * d + t]) * (x[i * d + t] - c[j * d + t]);
        if (s < bd) {
          bd = s;
          best = j;
        }
      }
      changed |= a[i] != best;
      a[i] = best;
    }
    std::vector<double> cnt(k, 0.0), sum(k * d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      cnt[a[i]] += 1;
      for (std::size_t t = 0; t < d; ++t) sum[a[i] * d + t] += x[i * d + t];
    }
    for (std::size_t j = 0; j < k; ++j)
      if (cnt[j] > 0)
        for (std::size_t t = 0; t < d; ++t) c[j * d + t] = sum[j * d + t] / cnt[j];
    if (!changed) break;
  }
  double s = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t t = 0; t < d; ++t)
      s += (x[i * d + t] - c[a[i] * d + t]) * (x[i * d + t] - c[a[i] * d + t]);
  return s;
}

// Best accuracy over every bijection between cluster ids and class ids.
inline double bijection_accuracy(const std::vector<std::size_t>& clusters,
                                 const std::vector<std::size_t>& classes, std::size_t k) {
  std::vector<std::size_t> perm(k);
  for (std::size_t i = 0; i < k; ++i) perm[i] = i;
  double best = 0;
  do {
    std::size_t hit = 0;
    for (std::size_t i = 0; i < clusters.size(); ++i) hit += perm[clusters[i]] == classes[i];
    best = std::max(best, static_cast<double>(hit) / static_cast<double>(clusters.size()));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

// Compares analytic gradients of a scalar loss with central differences at
// `samples` randomly chosen scalar parameters (tensor uniformly, then index
// uniformly). `loss` must evaluate the model without touching gradients;
// `params` must already hold the analytic gradients. Returns the norm-wise
// relative error over the sampled vector.
inline double sampled_parameter_check(const std::function<double()>& loss,
                                      const std::vector<dfml::Parameter<double>*>& params,
                                      std::size_t samples, std::mt19937_64& rng,
                                      double step = 1e-5) {
  std::vector<double> analytic, numeric;
  std::uniform_int_distribution<std::size_t> pick(0, params.size() - 1);
  for (std::size_t s = 0; s < samples; ++s) {
    auto* p = params[pick(rng)];
    const std::size_t i = std::uniform_int_distribution<std::size_t>(0, p->value.size() - 1)(rng);
    const double keep = p->value[i];
    p->value[i] = keep + step;
    const double up = loss();
    p->value[i] = keep - step;
    const double down = loss();
    p->value[i] = keep;
    analytic.push_back(p->grad[i]);
    numeric.push_back((up - down) / (2 * step));
  }
  return relative_error(analytic, numeric);
}

}  // namespace oracle
