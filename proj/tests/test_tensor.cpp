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
#include <numeric>
#include <random>

#include "oracles.hpp"

using namespace dfml;
using oracle::random_tensor;

TEST(Tensor, ShapeAndIndexing) {
  Tensor<double> t({2, 3});
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.rank(), 2u);
  t.at({1, 2}) = 5;
  EXPECT_EQ(t[5], 5);
  EXPECT_THROW(t.at({2, 0}), ShapeError);
  EXPECT_THROW(t.dim(2), ShapeError);
  EXPECT_THROW(Tensor<double>({2, 0}), ShapeError);
  EXPECT_THROW(Tensor<double>({2, 2}, std::vector<double>(3)), ShapeError);
  Tensor<float> s;
  EXPECT_EQ(s.rank(), 0u);
  EXPECT_EQ(s.size(), 1u);
}

TEST(Tensor, ReshapeRoundTripIsIdentity) {
  std::mt19937_64 rng(1);
  const auto x = random_tensor<double>({2, 3, 4}, rng);
  const auto back = reshape(reshape(x, {6, 4}), {2, 3, 4});
  EXPECT_EQ(back, x);
  EXPECT_THROW(reshape(x, {5, 5}), ShapeError);
}

TEST(Tensor, Elementwise) {
  const Tensor<double> a({3}, {-1, 0, 2});
  EXPECT_EQ(relu(a), Tensor<double>({3}, {0, 0, 2}));
  EXPECT_EQ(add(a, a), Tensor<double>({3}, {-2, 0, 4}));
  EXPECT_EQ(sub(a, a), Tensor<double>({3}, {0, 0, 0}));
  EXPECT_EQ(mul_scalar(a, 3.0), Tensor<double>({3}, {-3, 0, 6}));
  EXPECT_THROW(add(a, Tensor<double>({2})), ShapeError);
  const auto s = sigmoid(Tensor<double>({3}, {-1000, 0, 1000}));
  EXPECT_DOUBLE_EQ(s[0], 0.0);
  EXPECT_DOUBLE_EQ(s[1], 0.5);
  EXPECT_DOUBLE_EQ(s[2], 1.0);
}

TEST(Tensor, Reductions) {
  std::mt19937_64 rng(2);
  const auto x = random_tensor<double>({3, 4, 5}, rng);
  double direct = 0;
  for (double v : x.data()) direct += v;
  EXPECT_NEAR(sum(x), direct, 1e-6 * std::abs(direct));
  const auto s1 = sum(x, 1);
  ASSERT_EQ(s1.shape(), (Shape{3, 5}));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t k = 0; k < 5; ++k) {
      double acc = 0;
      for (std::size_t j = 0; j < 4; ++j) acc += x.at({i, j, k});
      EXPECT_NEAR(s1.at({i, k}), acc, 1e-12);
    }
  EXPECT_NEAR(mean(x, 2)[0], sum(x, 2)[0] / 5, 1e-15);
  EXPECT_THROW(sum(x, 3), ShapeError);
}

TEST(Tensor, TransposePadCrop) {
  const Tensor<double> m({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(transpose2d(m), Tensor<double>({3, 2}, {1, 4, 2, 5, 3, 6}));
  const Tensor<double> img({1, 1, 2, 2}, {1, 2, 3, 4});
  const auto p = pad2d(img, 1, 1);
  EXPECT_EQ(p.shape(), (Shape{1, 1, 4, 4}));
  EXPECT_EQ(p.at({0, 0, 1, 1}), 1);
  EXPECT_EQ(p.at({0, 0, 0, 0}), 0);
  EXPECT_EQ(crop2d(p, 1, 1, 2, 2), img);
  EXPECT_THROW(crop2d(p, 3, 0, 2, 2), ShapeError);
}

TEST(Matmul, Examples) {
  const Tensor<double> id({2, 2}, {1, 0, 0, 1});
  const Tensor<double> b({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(matmul(id, b), b);
  EXPECT_EQ(matmul(Tensor<double>({2, 2}, {1, 2, 3, 4}), Tensor<double>({2, 1}, {1, 1})),
            Tensor<double>({2, 1}, {3, 7}));
  EXPECT_THROW(matmul(b, b), ShapeError);
}

TEST(Matmul, MatchesTripleLoopExactly) {
  std::mt19937_64 rng(3);
  const auto a = random_tensor<double>({7, 5}, rng);
  const auto b = random_tensor<double>({5, 3}, rng);
  EXPECT_EQ(matmul(a, b), oracle::matmul(a, b));
  const auto big_a = random_tensor<double>({37, 129}, rng);
  const auto big_b = random_tensor<double>({129, 600}, rng);
  EXPECT_EQ(matmul(big_a, big_b), oracle::matmul(big_a, big_b));
}

TEST(Conv2d, Examples) {
  const Tensor<double> ones({1, 1, 3, 3}, 1.0);
  const auto y = conv2d(ones, Tensor<double>({1, 1, 1, 1}, 2.0), ConvGeometry::square(1, 0));
  EXPECT_EQ(y, Tensor<double>({1, 1, 3, 3}, 2.0));
  const auto z = conv2d(Tensor<double>({1, 1, 2, 2}, {1, 2, 3, 4}),
                        Tensor<double>({1, 1, 2, 2}, 1.0), ConvGeometry::square(1, 0));
  EXPECT_EQ(z, Tensor<double>({1, 1, 1, 1}, 10.0));
}

TEST(Conv2d, SeededCaseMatchesDirectLoops) {
  std::mt19937_64 rng(4);
  const auto x = random_tensor<double>({1, 2, 5, 5}, rng);
  const auto w = random_tensor<double>({3, 2, 3, 3}, rng);
  const auto y = conv2d(x, w, ConvGeometry::square(2, 1));
  ASSERT_EQ(y.shape(), (Shape{1, 3, 3, 3}));
  EXPECT_LE(oracle::max_elementwise_relative(y, oracle::conv2d<double>(x, w, nullptr, 2, 2, 1, 1), 1e-9),
            1e-5);
}

TEST(Conv2d, RandomGeometriesMatchDirectLoops) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::size_t> n(1, 2), c(1, 4), hw(1, 9), k(1, 4), s(1, 3),
      p(0, 2);
  int checked = 0;
  while (checked < 200) {
    const std::size_t kh = k(rng), kw = k(rng), ph = p(rng), pw = p(rng);
    const std::size_t H = hw(rng), W = hw(rng);
    if (H + 2 * ph < kh || W + 2 * pw < kw) continue;
    const ConvGeometry g{s(rng), s(rng), ph, pw};
    const auto x = random_tensor<double>({n(rng), c(rng), H, W}, rng);
    const auto w = random_tensor<double>({c(rng), x.shape()[1], kh, kw}, rng);
    const auto b = random_tensor<double>({w.shape()[0]}, rng);
    const auto got = conv2d(x, w, b, g);
    const auto want = oracle::conv2d(x, w, &b, g.stride_h, g.stride_w, ph, pw);
    ASSERT_EQ(got.shape(), want.shape());
    ASSERT_LE(oracle::max_elementwise_relative(got, want, 1e-9), 1e-5);
    ++checked;
  }
}

TEST(Conv2d, RejectsMismatchedChannels) {
  const Tensor<double> x({1, 3, 4, 4});
  const Tensor<double> w({2, 2, 3, 3});
  try {
    conv2d(x, w, ConvGeometry::square(1, 0));
    FAIL() << "expected a shape error";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("channel"), std::string::npos);
  }
  EXPECT_THROW(conv2d(Tensor<double>({1, 1, 2, 2}), Tensor<double>({1, 1, 3, 3}),
                      ConvGeometry::square(1, 0)),
               ShapeError);
}

TEST(Conv2dBackward, ZeroCotangentGivesZeroGradients) {
  std::mt19937_64 rng(6);
  const auto x = random_tensor<double>({2, 3, 5, 5}, rng);
  const auto w = random_tensor<double>({4, 3, 3, 3}, rng);
  const auto g = conv2d_backward(x, w, Tensor<double>({2, 4, 5, 5}), ConvGeometry::square(1, 1));
  for (const auto* t : {&g.grad_input, &g.grad_weight, &g.grad_bias})
    for (double v : t->data()) EXPECT_EQ(v, 0.0);
}

TEST(Conv2dBackward, PointwiseWeightGradientIsInputSum) {
  std::mt19937_64 rng(7);
  const auto x = random_tensor<double>({2, 1, 3, 4}, rng);
  const Tensor<double> w({1, 1, 1, 1}, 0.5);
  const auto g = conv2d_backward(x, w, Tensor<double>({2, 1, 3, 4}, 1.0),
                                 ConvGeometry::square(1, 0));
  EXPECT_NEAR(g.grad_weight[0], sum(x), 1e-12);
  EXPECT_NEAR(g.grad_bias[0], 24.0, 1e-12);
}

TEST(Conv2dBackward, MatchesFiniteDifferences) {
  std::mt19937_64 rng(8);
  for (const auto& g : {ConvGeometry::square(1, 1), ConvGeometry::square(2, 1),
                        ConvGeometry{2, 1, 0, 2}}) {
    auto x = random_tensor<double>({2, 2, 5, 6}, rng);
    auto w = random_tensor<double>({3, 2, 3, 3}, rng);
    auto b = random_tensor<double>({3}, rng);
    const auto r = random_tensor<double>(conv2d(x, w, b, g).shape(), rng);
    const auto f = [&] { return oracle::dot(conv2d(x, w, b, g), r); };
    const auto grads = conv2d_backward(x, w, r, g);
    EXPECT_LE(oracle::relative_error(grads.grad_input, oracle::numeric_gradient(f, x)), 1e-4);
    EXPECT_LE(oracle::relative_error(grads.grad_weight, oracle::numeric_gradient(f, w)), 1e-4);
    EXPECT_LE(oracle::relative_error(grads.grad_bias, oracle::numeric_gradient(f, b)), 1e-4);
  }
}

TEST(ConvTranspose2d, MatchesScatterOracle) {
  std::mt19937_64 rng(9);
  for (std::size_t out : {11u, 12u}) {
    const auto x = random_tensor<double>({2, 3, 6, 6}, rng);
    const auto w = random_tensor<double>({3, 4, 3, 3}, rng);
    const auto b = random_tensor<double>({4}, rng);
    const std::size_t op = out - 11;
    const auto got = conv_transpose2d(x, w, &b, ConvGeometry::square(2, 1), op, op);
    const auto want = oracle::conv_transpose2d(x, w, &b, 2, 1, out, out);
    ASSERT_EQ(got.shape(), want.shape());
    EXPECT_LE(oracle::max_elementwise_relative(got, want, 1e-9), 1e-10);
  }
}

TEST(ConvTranspose2d, BackwardMatchesFiniteDifferences) {
  std::mt19937_64 rng(10);
  auto x = random_tensor<double>({2, 2, 3, 3}, rng);
  auto w = random_tensor<double>({2, 3, 3, 3}, rng);
  auto b = random_tensor<double>({3}, rng);
  const auto g = ConvGeometry::square(2, 1);
  const auto r = random_tensor<double>({2, 3, 6, 6}, rng);
  const auto f = [&] { return oracle::dot(conv_transpose2d(x, w, &b, g, 1, 1), r); };
  const auto grads = conv_transpose2d_backward(x, w, r, g);
  EXPECT_LE(oracle::relative_error(grads.grad_input, oracle::numeric_gradient(f, x)), 1e-4);
  EXPECT_LE(oracle::relative_error(grads.grad_weight, oracle::numeric_gradient(f, w)), 1e-4);
  EXPECT_LE(oracle::relative_error(grads.grad_bias, oracle::numeric_gradient(f, b)), 1e-4);
}

TEST(Pooling, MaxPoolExamplesAndTies) {
  const auto r = max_pool2d(Tensor<double>({1, 1, 2, 2}, {1, 2, 3, 4}));
  EXPECT_EQ(r.output, Tensor<double>({1, 1, 1, 1}, 4.0));
  const auto tie = max_pool2d(Tensor<double>({1, 1, 2, 2}, 7.0));
  EXPECT_EQ(tie.argmax[0], 0u);
  const auto back = max_pool2d_backward(Tensor<double>({1, 1, 1, 1}, 1.0), tie.argmax,
                                        Shape{1, 1, 2, 2});
  EXPECT_EQ(back, Tensor<double>({1, 1, 2, 2}, {1, 0, 0, 0}));
}

TEST(Pooling, BackwardMatchesFiniteDifferences) {
  std::mt19937_64 rng(11);
  auto x = random_tensor<double>({2, 3, 7, 7}, rng);
  const auto fwd = max_pool2d(x, 3, 2, 1);
  const auto r = random_tensor<double>(fwd.output.shape(), rng);
  const auto f = [&] { return oracle::dot(max_pool2d(x, 3, 2, 1).output, r); };
  const auto g = max_pool2d_backward(r, fwd.argmax, x.shape());
  EXPECT_LE(oracle::relative_error(g, oracle::numeric_gradient(f, x)), 1e-4);

  auto y = random_tensor<double>({2, 3, 4, 5}, rng);
  const auto ry = random_tensor<double>({2, 3}, rng);
  const auto fy = [&] { return oracle::dot(global_avg_pool(y), ry); };
  EXPECT_LE(oracle::relative_error(global_avg_pool_backward(ry, y.shape()),
                                   oracle::numeric_gradient(fy, y)),
            1e-4);
}

TEST(Pooling, GlobalAveragePoolOfConstantField) {
  const auto g = global_avg_pool(Tensor<double>({1, 128, 7, 7}, 3.0));
  EXPECT_EQ(g, Tensor<double>({1, 128}, 3.0));
}

TEST(Activations, BackwardMatchesFiniteDifferences) {
  std::mt19937_64 rng(12);
  auto x = random_tensor<double>({4, 5}, rng, -2, 2);
  const auto r = random_tensor<double>({4, 5}, rng);
  const auto fr = [&] { return oracle::dot(relu(x), r); };
  EXPECT_LE(oracle::relative_error(relu_backward(x, r), oracle::numeric_gradient(fr, x)), 1e-4);
  const auto fs = [&] { return oracle::dot(sigmoid(x), r); };
  EXPECT_LE(oracle::relative_error(sigmoid_backward(sigmoid(x), r),
                                   oracle::numeric_gradient(fs, x)),
            1e-4);
}
