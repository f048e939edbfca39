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

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"

using namespace dfml;

namespace {

// Two well separated Gaussian blobs in `dim` dimensions.
Tensor<double> two_blobs(std::size_t per_blob, std::size_t dim, double gap, std::uint64_t seed,
                         std::vector<std::size_t>& classes) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Tensor<double> x({2 * per_blob, dim});
  classes.assign(2 * per_blob, 0);
  for (std::size_t i = 0; i < 2 * per_blob; ++i) {
    classes[i] = i < per_blob ? 0 : 1;
    for (std::size_t d = 0; d < dim; ++d)
      x[i * dim + d] = g(rng) + (classes[i] == 1 && d == 0 ? gap : 0.0);
  }
  return x;
}

double entropy_bits(const std::vector<double>& p) {
  double h = 0;
  for (double v : p)
    if (v > 0) h -= v * std::log2(v);
  return h;
}

}  // namespace

TEST(Perplexity, EquidistantNeighboursShareMassEqually) {
  const std::vector<double> d2 = {0.0, 1.0, 1.0};
  const auto r = perplexity_calibration(d2, 0, 2.0);
  EXPECT_EQ(r.p[0], 0.0);
  EXPECT_NEAR(r.p[1], 0.5, 1e-12);
  EXPECT_NEAR(r.p[2], 0.5, 1e-12);
}

TEST(Perplexity, TwoPointsGiveCertainNeighbour) {
  const std::vector<double> d2 = {4.0, 0.0};
  const auto r = perplexity_calibration(d2, 1, 1.0);
  EXPECT_NEAR(r.p[0], 1.0, 1e-12);
  EXPECT_EQ(r.p[1], 0.0);
}

TEST(Perplexity, CalibratedRowsReachTargetEntropy) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    auto x = oracle::random_tensor<double>({10, 4}, rng, -3, 3);
    const std::size_t self = trial % 10;
    std::vector<double> d2(10);
    for (std::size_t j = 0; j < 10; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < 4; ++k) s += std::pow(x[self * 4 + k] - x[j * 4 + k], 2);
      d2[j] = s;
    }
    const auto r = perplexity_calibration(d2, self, 5.0);
    double sum = 0;
    for (double v : r.p) sum += v;
    EXPECT_NEAR(sum, 1.0, 1e-12);
    // Recompute the conditional distribution from the returned precision.
    std::vector<double> q(10, 0.0);
    double z = 0;
    for (std::size_t j = 0; j < 10; ++j)
      if (j != self) z += q[j] = std::exp(-r.beta * d2[j]);
    for (auto& v : q) v /= z;
    EXPECT_NEAR(std::exp2(entropy_bits(q)), 5.0, 1e-3);
    for (std::size_t j = 0; j < 10; ++j) EXPECT_NEAR(q[j], r.p[j], 1e-9);
  }
}

TEST(Perplexity, RejectsInvalidTargets) {
  const std::vector<double> d2 = {0.0, 1.0, 2.0};
  EXPECT_THROW(perplexity_calibration(d2, 0, 3.0), Error);
  EXPECT_THROW(perplexity_calibration(d2, 0, 0.0), Error);
  EXPECT_THROW(perplexity_calibration(d2, 5, 1.5), Error);
}

TEST(JointProbabilities, SymmetricAndNormalised) {
  std::mt19937_64 rng(2);
  const auto x = oracle::random_tensor<double>({25, 6}, rng);
  const auto p = joint_probabilities(x, 5.0);
  double sum = 0;
  for (std::size_t i = 0; i < 25; ++i) {
    EXPECT_EQ(p[i * 25 + i], 0.0);
    for (std::size_t j = 0; j < 25; ++j) {
      EXPECT_DOUBLE_EQ(p[i * 25 + j], p[j * 25 + i]);
      sum += p[i * 25 + j];
    }
  }
  EXPECT_NEAR(sum, 1.0, 1e-12);
}

TEST(JointProbabilities, RejectsDegenerateInput) {
  std::mt19937_64 rng(3);
  auto x = oracle::random_tensor<double>({10, 3}, rng);
  EXPECT_THROW(joint_probabilities(x, 10.0), Error);
  Tensor<double> same({12, 3});
  same.fill(1.5);
  EXPECT_THROW(joint_probabilities(same, 5.0), Error);
  x[4] = std::nan("");
  EXPECT_THROW(joint_probabilities(x, 3.0), Error);
}

TEST(Kl, GradientMatchesCentralDifferences) {
  std::mt19937_64 rng(4);
  for (double exag : {1.0, 12.0}) {
    const auto x = oracle::random_tensor<double>({15, 5}, rng);
    const auto p = joint_probabilities(x, 4.0);
    auto y = oracle::random_tensor<double>({15, 2}, rng, -2, 2);
    // The exaggerated update descends -a sum p log k + log Z, which reduces to
    // KL(P || Q) up to a constant when a = 1.
    const auto objective = [&] {
      std::vector<double> yy(y.data().begin(), y.data().end());
      double z = 0;
      for (std::size_t i = 0; i < 15; ++i)
        for (std::size_t j = 0; j < 15; ++j)
          if (i != j)
            z += 1.0 / (1.0 + std::pow(yy[2 * i] - yy[2 * j], 2) +
                        std::pow(yy[2 * i + 1] - yy[2 * j + 1], 2));
      double s = std::log(z);
      for (std::size_t i = 0; i < 15; ++i)
        for (std::size_t j = 0; j < 15; ++j) {
          if (i == j) continue;
          const double k = 1.0 / (1.0 + std::pow(yy[2 * i] - yy[2 * j], 2) +
                                  std::pow(yy[2 * i + 1] - yy[2 * j + 1], 2));
          s -= exag * p[i * 15 + j] * std::log(k);
        }
      return s;
    };
    const auto analytic = kl_gradient(p, y.data(), exag);
    const auto numeric = oracle::numeric_gradient(objective, y, 1e-5);
    EXPECT_LT(oracle::relative_error(analytic, numeric.data()), 1e-6) << exag;
    if (exag == 1.0) {
      const auto kl_fd = oracle::numeric_gradient([&] { return kl_divergence(p, y.data()); }, y, 1e-5);
      EXPECT_LT(oracle::relative_error(analytic, kl_fd.data()), 1e-6);
    }
  }
}

TEST(Kl, IsZeroOnlyWhenDistributionsAgree) {
  std::mt19937_64 rng(5);
  const auto x = oracle::random_tensor<double>({12, 3}, rng);
  const auto p = joint_probabilities(x, 3.0);
  const auto y = oracle::random_tensor<double>({12, 2}, rng);
  EXPECT_GT(kl_divergence(p, y.data()), 0.0);
  // Feed Q back in as P: the divergence vanishes.
  std::vector<double> q(144, 0.0);
  double z = 0;
  for (std::size_t i = 0; i < 12; ++i)
    for (std::size_t j = 0; j < 12; ++j)
      if (i != j)
        z += q[i * 12 + j] = 1.0 / (1.0 + std::pow(y[2 * i] - y[2 * j], 2) +
                                    std::pow(y[2 * i + 1] - y[2 * j + 1], 2));
  for (auto& v : q) v /= z;
  EXPECT_NEAR(kl_divergence(q, y.data()), 0.0, 1e-12);
}

TEST(Tsne, SeparatesBlobsAndKeepsDescendingAfterExaggeration) {
  std::vector<std::size_t> classes;
  const auto x = two_blobs(40, 10, 12.0, 6, classes);
  TsneConfig cfg;
  cfg.perplexity = 10;
  cfg.iterations = 500;
  cfg.seed = 7;
  const auto e = tsne(x, cfg);
  ASSERT_EQ(e.kl_trace.size(), 500u);
  EXPECT_LT(e.kl_trace.back(), e.kl_trace[cfg.exaggeration_iterations]);
  for (double v : e.kl_trace) EXPECT_TRUE(std::isfinite(v));
  EXPECT_GE(nearest_neighbor_purity(e.points, std::span<const std::size_t>(classes)), 0.9);
  double mx = 0, my = 0;
  for (const auto& pt : e.points) {
    mx += pt[0];
    my += pt[1];
  }
  EXPECT_NEAR(mx / 80, 0.0, 1e-9);
  EXPECT_NEAR(my / 80, 0.0, 1e-9);
}

TEST(Tsne, SameSeedSameEmbedding) {
  std::vector<std::size_t> classes;
  const auto x = two_blobs(15, 4, 5.0, 8, classes);
  TsneConfig cfg;
  cfg.perplexity = 5;
  cfg.iterations = 120;
  cfg.seed = 9;
  const auto a = tsne(x, cfg), b = tsne(x, cfg);
  EXPECT_EQ(a.points, b.points);
  EXPECT_EQ(a.kl_trace, b.kl_trace);
  cfg.seed = 10;
  EXPECT_NE(tsne(x, cfg).points, a.points);
}

TEST(Purity, CountsNearestNeighbourAgreement) {
  const std::vector<std::array<double, 2>> pts = {{0, 0}, {0, 1}, {10, 0}, {10, 1}};
  const std::vector<int> good = {0, 0, 1, 1}, mixed = {0, 1, 0, 1}, three = {0, 0, 1, 0};
  EXPECT_EQ(nearest_neighbor_purity(pts, std::span<const int>(good)), 1.0);
  EXPECT_EQ(nearest_neighbor_purity(pts, std::span<const int>(mixed)), 0.0);
  EXPECT_EQ(nearest_neighbor_purity(pts, std::span<const int>(three)), 0.5);
}

TEST(KMeans, FourPointExample) {
  Tensor<double> x({4, 2}, {0, 0, 0, 1, 10, 0, 10, 1});
  const auto r = kmeans(x, 2, 1);
  EXPECT_NEAR(r.inertia, 1.0, 1e-12);
  EXPECT_EQ(r.assignment[0], r.assignment[1]);
  EXPECT_EQ(r.assignment[2], r.assignment[3]);
  EXPECT_NE(r.assignment[0], r.assignment[2]);
}

TEST(KMeans, EdgeCases) {
  std::mt19937_64 rng(11);
  const auto x = oracle::random_tensor<double>({7, 3}, rng);
  EXPECT_NEAR(kmeans(x, 7, 2).inertia, 0.0, 1e-15);
  EXPECT_THROW(kmeans(x, 8, 2), Error);
  EXPECT_THROW(kmeans(x, 0, 2), Error);
  Tensor<double> dup({6, 2});
  dup.fill(3.0);
  const auto r = kmeans(dup, 3, 2);
  EXPECT_EQ(r.inertia, 0.0);
}

TEST(KMeans, InertiaNeverIncreasesAndMatchesAssignment) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 20 + rng() % 60, d = 1 + rng() % 6, k = 2 + rng() % 5;
    const auto x = oracle::random_tensor<double>({n, d}, rng, -5, 5);
    const auto r = kmeans(x, k, trial);
    for (std::size_t i = 1; i < r.inertia_trace.size(); ++i)
      EXPECT_LE(r.inertia_trace[i], r.inertia_trace[i - 1] * (1 + 1e-12));
    EXPECT_NEAR(r.inertia, oracle::assignment_inertia(x, r.assignment, k), 1e-9 * (1 + r.inertia));
    std::vector<std::size_t> counts(k, 0);
    for (auto a : r.assignment) ++counts[a];
    for (auto c : counts) EXPECT_GT(c, 0u);
  }
}

TEST(KMeans, BestOfTenIsCloseToManyRandomRestarts) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 3; ++trial) {
    const auto x = oracle::random_tensor<double>({60, 3}, rng, -4, 4);
    const double ours = kmeans_best_of(x, 4, trial, 10).inertia;
    double best = std::numeric_limits<double>::infinity();
    for (int r = 0; r < 1000; ++r) best = std::min(best, oracle::random_restart_kmeans(x, 4, rng));
    EXPECT_LE(ours, best * 1.05);
  }
}

TEST(KMeans, Deterministic) {
  std::mt19937_64 rng(14);
  const auto x = oracle::random_tensor<double>({50, 4}, rng);
  const auto a = kmeans_best_of(x, 3, 5, 4), b = kmeans_best_of(x, 3, 5, 4);
  EXPECT_EQ(a.assignment, b.assignment);
  EXPECT_EQ(a.inertia, b.inertia);
}

TEST(ClusterAccuracy, Examples) {
  const std::vector<std::size_t> swapped = {1, 1, 0, 0}, classes = {0, 0, 1, 1};
  EXPECT_EQ(cluster_label_accuracy(swapped, classes), 1.0);
  const std::vector<std::size_t> half = {0, 1, 0, 1};
  EXPECT_EQ(cluster_label_accuracy(half, classes), 0.5);
  // One cluster swallowing everything can only be credited to one class.
  const std::vector<std::size_t> lumped = {0, 0, 0, 0};
  EXPECT_EQ(cluster_label_accuracy(lumped, classes), 0.5);
  const std::vector<Label> labels = {Label::non_septic, Label::septic};
  const std::vector<std::size_t> two = {1, 0};
  EXPECT_EQ(cluster_label_accuracy(two, std::span<const Label>(labels)), 1.0);
  EXPECT_THROW(cluster_label_accuracy(std::vector<std::size_t>{}, std::vector<std::size_t>{}), Error);
}

TEST(ClusterAccuracy, MatchesBijectionOracleAndIgnoresRelabelling) {
  std::mt19937_64 rng(15);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 2 + rng() % 4, n = 5 + rng() % 40;
    std::vector<std::size_t> clusters(n), classes(n);
    for (std::size_t i = 0; i < n; ++i) {
      clusters[i] = rng() % k;
      classes[i] = rng() % k;
    }
    clusters[0] = classes[0] = k - 1;
    const double got = cluster_label_accuracy(clusters, classes);
    EXPECT_DOUBLE_EQ(got, oracle::bijection_accuracy(clusters, classes, k));
    std::vector<std::size_t> perm(k);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    for (auto& c : clusters) c = perm[c];
    EXPECT_DOUBLE_EQ(cluster_label_accuracy(clusters, classes), got);
  }
}
