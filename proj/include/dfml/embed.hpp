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
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dfml/labels.hpp"
#include "dfml/rng.hpp"
#include "dfml/tensor.hpp"

namespace dfml {

// ---------------------------------------------------------------------------
// Exact t-SNE
// ---------------------------------------------------------------------------

struct TsneConfig {
  double perplexity = 30.0;
  std::size_t iterations = 1000;
  double learning_rate = 200.0;
  double initial_momentum = 0.5;
  double final_momentum = 0.8;
  std::size_t momentum_switch = 250;
  double exaggeration = 12.0;
  std::size_t exaggeration_iterations = 250;
  std::uint64_t seed = 0;
};

struct Embedding2D {
  std::vector<std::array<double, 2>> points;
  std::vector<double> kl_trace;  // KL(P || Q) after every iteration
};

struct RowAffinity {
  double beta = 1.0;   // precision 1 / (2 sigma^2)
  double sigma = 0.0;
  double perplexity = 0.0;  // achieved
  std::vector<double> p;    // conditional p_{j|i}, zero at i
};

/// Binary search for the Gaussian precision whose conditional distribution
/// over the other points has the requested perplexity. `sq_distances` holds
/// squared distances from point `self` to every point.
inline RowAffinity perplexity_calibration(std::span<const double> sq_distances,
                                          std::size_t self, double perplexity) {
  const std::size_t n = sq_distances.size();
  if (n < 2) throw Error("perplexity calibration needs at least two points");
  if (self >= n) throw Error("perplexity calibration: self index out of range");
  if (!(perplexity > 0.0) || perplexity >= static_cast<double>(n)) {
    throw Error("perplexity " + std::to_string(perplexity) + " must lie in (0, " +
                std::to_string(n) + ")");
  }
  double d_min = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j) {
    if (!std::isfinite(sq_distances[j]) || sq_distances[j] < 0) {
      throw Error("perplexity calibration: non-finite or negative distance");
    }
    if (j != self) d_min = std::min(d_min, sq_distances[j]);
  }
  const double target = std::log2(perplexity);
  RowAffinity r;
  r.p.assign(n, 0.0);
  double lo = 0.0, hi = std::numeric_limits<double>::infinity();
  double entropy_bits = 0.0;
  // Distances are shifted by their minimum so exp() never underflows entirely.
  const auto evaluate = [&](double beta) {
    double z = 0.0, weighted = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == self) {
        r.p[j] = 0.0;
        continue;
      }
      const double shifted = sq_distances[j] - d_min;
      r.p[j] = std::exp(-beta * shifted);
      z += r.p[j];
      weighted += r.p[j] * shifted;
    }
    for (auto& v : r.p) v /= z;
    // Entropy in nats of p_j = exp(-beta d_j) / z.
    const double h = std::log(z) + beta * weighted / z;
    return h / std::log(2.0);
  };
  double beta = 1.0;
  for (int it = 0; it < 100; ++it) {
    entropy_bits = evaluate(beta);
    const double gap = entropy_bits - target;
    if (std::abs(gap) <= 1e-5) break;
    if (gap > 0) {
      lo = beta;
      beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
    } else {
      hi = beta;
      beta = 0.5 * (beta + lo);
    }
  }
  r.beta = beta;
  r.sigma = beta > 0 ? std::sqrt(1.0 / (2.0 * beta)) : std::numeric_limits<double>::infinity();
  r.perplexity = std::exp2(entropy_bits);
  return r;
}

namespace detail {

inline std::vector<double> pairwise_sq_distances(const Tensor<double>& x) {
  require_rank(x, 2, "pairwise distance input");
  const std::size_t n = x.shape()[0], d = x.shape()[1];
  std::vector<double> out(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = x[i * d + k] - x[j * d + k];
        s += diff * diff;
      }
      out[i * n + j] = out[j * n + i] = s;
    }
  }
  return out;
}

}  // namespace detail

/// Symmetrized affinities P = (p_{j|i} + p_{i|j}) / 2N as a dense N x N matrix.
inline std::vector<double> joint_probabilities(const Tensor<double>& x, double perplexity) {
  detail::require_rank(x, 2, "t-SNE input");
  const std::size_t n = x.shape()[0];
  for (double v : x.data())
    if (!std::isfinite(v)) throw Error("t-SNE input contains non-finite values");
  if (static_cast<double>(n) <= perplexity) {
    throw Error("t-SNE needs more points (" + std::to_string(n) + ") than the perplexity (" +
                std::to_string(perplexity) + ")");
  }
  const auto d2 = detail::pairwise_sq_distances(x);
  if (*std::max_element(d2.begin(), d2.end()) == 0.0) {
    throw Error("t-SNE input points are all identical");
  }
  std::vector<double> cond(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = perplexity_calibration(std::span<const double>(d2).subspan(i * n, n), i,
                                            perplexity);
    std::copy(row.p.begin(), row.p.end(), cond.begin() + static_cast<std::ptrdiff_t>(i * n));
  }
  std::vector<double> p(n * n);
  const double denom = 2.0 * static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) p[i * n + j] = (cond[i * n + j] + cond[j * n + i]) / denom;
  return p;
}

/// KL(P || Q) for a flat N x 2 embedding under the Student-t kernel.
inline double kl_divergence(std::span<const double> p, std::span<const double> y) {
  const std::size_t n = y.size() / 2;
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double dx = y[2 * i] - y[2 * j], dy = y[2 * i + 1] - y[2 * j + 1];
      z += 1.0 / (1.0 + dx * dx + dy * dy);
    }
  double kl = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double pij = p[i * n + j];
      if (i == j || pij <= 0.0) continue;
      const double dx = y[2 * i] - y[2 * j], dy = y[2 * i + 1] - y[2 * j + 1];
      const double q = 1.0 / (1.0 + dx * dx + dy * dy) / z;
      kl += pij * std::log(pij / q);
    }
  return kl;
}

/// Gradient of KL(exaggeration * P || Q) with respect to the embedding:
/// 4 sum_j (a p_ij - q_ij) (y_i - y_j) / (1 + |y_i - y_j|^2).
inline std::vector<double> kl_gradient(std::span<const double> p, std::span<const double> y,
                                       double exaggeration = 1.0) {
  const std::size_t n = y.size() / 2;
  std::vector<double> num(n * n, 0.0);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dx = y[2 * i] - y[2 * j], dy = y[2 * i + 1] - y[2 * j + 1];
      const double k = 1.0 / (1.0 + dx * dx + dy * dy);
      num[i * n + j] = num[j * n + i] = k;
      z += 2.0 * k;
    }
  std::vector<double> grad(2 * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double gx = 0.0, gy = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double k = num[i * n + j];
      const double mult = (exaggeration * p[i * n + j] - k / z) * k;
      gx += mult * (y[2 * i] - y[2 * j]);
      gy += mult * (y[2 * i + 1] - y[2 * j + 1]);
    }
    grad[2 * i] = 4.0 * gx;
    grad[2 * i + 1] = 4.0 * gy;
  }
  return grad;
}

/// Exact O(N^2) t-SNE into two dimensions: early exaggeration, momentum
/// switch and per-coordinate adaptive gains.
inline Embedding2D tsne(const Tensor<double>& codes, const TsneConfig& config) {
  if (config.iterations == 0) throw Error("t-SNE needs at least one iteration");
  const auto p = joint_probabilities(codes, config.perplexity);
  const std::size_t n = codes.shape()[0];

  Rng rng(derive_seed(config.seed, "tsne.init"));
  std::normal_distribution<double> init(0.0, 1e-4);
  std::vector<double> y(2 * n), velocity(2 * n, 0.0), gains(2 * n, 1.0);
  for (auto& v : y) v = init(rng);

  Embedding2D out;
  out.kl_trace.reserve(config.iterations);
  double momentum = config.initial_momentum;
  for (std::size_t it = 0; it < config.iterations; ++it) {
    if (it == config.momentum_switch) momentum = config.final_momentum;
    const double exag = it < config.exaggeration_iterations ? config.exaggeration : 1.0;
    const auto grad = kl_gradient(p, y, exag);
    for (std::size_t i = 0; i < 2 * n; ++i) {
      const bool same_sign = (grad[i] > 0) == (velocity[i] > 0);
      gains[i] = same_sign ? gains[i] * 0.8 : gains[i] + 0.2;
      gains[i] = std::max(gains[i], 0.01);
      velocity[i] = momentum * velocity[i] - config.learning_rate * gains[i] * grad[i];
      y[i] += velocity[i];
    }
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      mx += y[2 * i];
      my += y[2 * i + 1];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[2 * i] -= mx;
      y[2 * i + 1] -= my;
    }
    out.kl_trace.push_back(kl_divergence(p, y));
  }
  out.points.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.points[i] = {y[2 * i], y[2 * i + 1]};
  for (const auto& pt : out.points)
    if (!std::isfinite(pt[0]) || !std::isfinite(pt[1])) throw Error("t-SNE diverged");
  return out;
}

/// Fraction of points whose nearest other point shares their label.
template <typename L>
double nearest_neighbor_purity(const std::vector<std::array<double, 2>>& points,
                               std::span<const L> labels) {
  if (points.size() != labels.size() || points.size() < 2) {
    throw Error("nearest_neighbor_purity needs at least two labelled points");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t nn = i;
    for (std::size_t j = 0; j < points.size(); ++j) {
      if (j == i) continue;
      const double dx = points[i][0] - points[j][0], dy = points[i][1] - points[j][1];
      const double d = dx * dx + dy * dy;
      if (d < best) {
        best = d;
        nn = j;
      }
    }
    hits += labels[nn] == labels[i];
  }
  return static_cast<double>(hits) / static_cast<double>(points.size());
}

// ---------------------------------------------------------------------------
// k-means
// ---------------------------------------------------------------------------

struct KMeansResult {
  Tensor<double> centroids;  // k x D
  std::vector<std::size_t> assignment;
  double inertia = 0.0;
  std::size_t iterations = 0;
  std::vector<double> inertia_trace;  // after every Lloyd update
};

namespace detail {

inline double sq_dist(const double* a, const double* b, std::size_t d) {
  double s = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double diff = a[i] - b[i];
    s += diff * diff;
  }
  return s;
}

inline std::vector<std::size_t> assign_nearest(const Tensor<double>& x, const Tensor<double>& c) {
  const std::size_t n = x.shape()[0], d = x.shape()[1], k = c.shape()[0];
  std::vector<std::size_t> a(n);
  for (std::size_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k; ++j) {
      const double dist = sq_dist(x.raw() + i * d, c.raw() + j * d, d);
      if (dist < best) {
        best = dist;
        a[i] = j;
      }
    }
  }
  return a;
}

inline Tensor<double> cluster_means(const Tensor<double>& x, const std::vector<std::size_t>& a,
                                    std::size_t k) {
  const std::size_t n = x.shape()[0], d = x.shape()[1];
  Tensor<double> c({k, d});
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < n; ++i) {
    ++counts[a[i]];
    for (std::size_t t = 0; t < d; ++t) c[a[i] * d + t] += x[i * d + t];
  }
  for (std::size_t j = 0; j < k; ++j)
    for (std::size_t t = 0; t < d; ++t) c[j * d + t] /= static_cast<double>(counts[j]);
  return c;
}

inline double inertia_of(const Tensor<double>& x, const Tensor<double>& c,
                         const std::vector<std::size_t>& a) {
  const std::size_t n = x.shape()[0], d = x.shape()[1];
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += sq_dist(x.raw() + i * d, c.raw() + a[i] * d, d);
  return s;
}

// Refills empty clusters with the point farthest from its centroid in the
// currently largest cluster.
inline void repair_empty(const Tensor<double>& x, const Tensor<double>& c,
                         std::vector<std::size_t>& a, std::size_t k) {
  const std::size_t d = x.shape()[1];
  while (true) {
    std::vector<std::size_t> counts(k, 0);
    for (auto j : a) ++counts[j];
    const auto empty = std::find(counts.begin(), counts.end(), std::size_t{0});
    if (empty == counts.end()) return;
    const auto largest = static_cast<std::size_t>(
        std::max_element(counts.begin(), counts.end()) - counts.begin());
    std::size_t far = a.size();
    double far_d = -1.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a[i] != largest) continue;
      const double dist = sq_dist(x.raw() + i * d, c.raw() + largest * d, d);
      if (dist > far_d) {
        far_d = dist;
        far = i;
      }
    }
    a[far] = static_cast<std::size_t>(empty - counts.begin());
  }
}

}  // namespace detail

/// Greedy k-means++ seeding followed by Lloyd iterations until the assignment is
/// stable or `max_iterations` is reached. Inertia is checked to be
/// nonincreasing at every iteration.
inline KMeansResult kmeans(const Tensor<double>& x, std::size_t k, std::uint64_t seed,
                           std::size_t max_iterations = 300) {
  detail::require_rank(x, 2, "k-means input");
  const std::size_t n = x.shape()[0], d = x.shape()[1];
  if (k == 0 || k > n) {
    throw Error("k-means: k = " + std::to_string(k) + " must lie in [1, " +
                std::to_string(n) + "]");
  }
  Rng rng(seed);
  Tensor<double> c({k, d});
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  // Greedy k-means++: each new centre is the best of a few D^2 samples,
  // judged by the potential it leaves behind.
  const std::size_t trials = 2 + static_cast<std::size_t>(std::log(static_cast<double>(k)));
  const auto sample = [&](double total) {
    double r = std::uniform_real_distribution<double>(0.0, total)(rng);
    std::size_t p = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      if (d2[i] <= 0.0) continue;
      if (r < d2[i]) {
        p = i;
        break;
      }
      r -= d2[i];
    }
    while (d2[p] <= 0.0) --p;
    return p;
  };
  std::size_t pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  for (std::size_t j = 0; j < k; ++j) {
    if (j > 0) {
      const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
      if (total > 0.0) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t t = 0; t < trials; ++t) {
          const std::size_t cand = sample(total);
          double potential = 0.0;
          for (std::size_t i = 0; i < n; ++i)
            potential += std::min(d2[i], detail::sq_dist(x.raw() + i * d, x.raw() + cand * d, d));
          if (potential < best) {
            best = potential;
            pick = cand;
          }
        }
      } else {
        pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
      }
    }
    std::copy_n(x.raw() + pick * d, d, c.raw() + j * d);
    for (std::size_t i = 0; i < n; ++i)
      d2[i] = std::min(d2[i], detail::sq_dist(x.raw() + i * d, c.raw() + j * d, d));
  }

  KMeansResult r;
  auto a = detail::assign_nearest(x, c);
  detail::repair_empty(x, c, a, k);
  bool converged = false;
  for (std::size_t it = 0; it < max_iterations; ++it) {
    c = detail::cluster_means(x, a, k);
    const double j = detail::inertia_of(x, c, a);
    if (!r.inertia_trace.empty() && j > r.inertia_trace.back() * (1.0 + 1e-12) + 1e-300) {
      throw Error("k-means inertia increased from " + std::to_string(r.inertia_trace.back()) +
                  " to " + std::to_string(j));
    }
    r.inertia_trace.push_back(j);
    r.iterations = it + 1;
    auto next = detail::assign_nearest(x, c);
    detail::repair_empty(x, c, next, k);
    if (next == a) {
      converged = true;
      break;
    }
    a = std::move(next);
  }
  if (!converged) {
    auto next = detail::assign_nearest(x, c);
    std::vector<std::size_t> counts(k, 0);
    for (auto j : next) ++counts[j];
    if (std::find(counts.begin(), counts.end(), std::size_t{0}) == counts.end()) a = next;
  }
  r.centroids = std::move(c);
  r.assignment = std::move(a);
  r.inertia = detail::inertia_of(x, r.centroids, r.assignment);
  return r;
}

/// Lowest-inertia result over `restarts` independently seeded runs.
inline KMeansResult kmeans_best_of(const Tensor<double>& x, std::size_t k, std::uint64_t seed,
                                   std::size_t restarts, std::size_t max_iterations = 300) {
  if (restarts == 0) throw Error("k-means needs at least one restart");
  KMeansResult best;
  for (std::size_t r = 0; r < restarts; ++r) {
    auto run = kmeans(x, k, derive_seed(seed, r), max_iterations);
    if (r == 0 || run.inertia < best.inertia) best = std::move(run);
  }
  return best;
}

/// Accuracy of a clustering under the cluster -> class bijection that matches
/// the most points. Cluster ids and class ids must be below 8.
inline double cluster_label_accuracy(std::span<const std::size_t> clusters,
                                     std::span<const std::size_t> classes) {
  if (clusters.empty()) throw Error("cluster_label_accuracy: empty input");
  if (clusters.size() != classes.size()) {
    throw Error("cluster_label_accuracy: " + std::to_string(clusters.size()) +
                " assignments for " + std::to_string(classes.size()) + " labels");
  }
  const std::size_t k = std::max(*std::max_element(clusters.begin(), clusters.end()),
                                 *std::max_element(classes.begin(), classes.end())) + 1;
  if (k > 8) throw Error("cluster_label_accuracy supports at most 8 clusters");
  std::vector<std::size_t> table(k * k, 0);
  for (std::size_t i = 0; i < clusters.size(); ++i) ++table[clusters[i] * k + classes[i]];
  std::vector<std::size_t> perm(k);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::size_t best = 0;
  do {
    std::size_t hits = 0;
    for (std::size_t c = 0; c < k; ++c) hits += table[c * k + perm[c]];
    best = std::max(best, hits);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return static_cast<double>(best) / static_cast<double>(clusters.size());
}

inline double cluster_label_accuracy(std::span<const std::size_t> clusters,
                                     std::span<const Label> labels) {
  std::vector<std::size_t> classes(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) classes[i] = class_index(labels[i]);
  return cluster_label_accuracy(clusters, std::span<const std::size_t>(classes));
}

}  // namespace dfml
