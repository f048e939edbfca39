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
#include <vector>

#include "oracles.hpp"

using namespace dfml;
using oracle::random_tensor;

namespace {

// Gradient check of every parameter of a layer against finite differences of
// <r, forward_train(x)>.
template <typename Layer, typename Fwd>
void check_layer(Layer& layer, Tensor<double>& x, Fwd fwd, std::mt19937_64& rng,
                 double tol = 1e-4) {
  const auto r = random_tensor<double>(fwd(layer, x).shape(), rng);
  std::vector<Parameter<double>*> params;
  layer.parameters(params);
  for (auto* p : params) p->zero_grad();
  fwd(layer, x);
  const auto gx = layer.backward(r);
  const auto f = [&] { return oracle::dot(fwd(layer, x), r); };
  EXPECT_LE(oracle::relative_error(gx, oracle::numeric_gradient(f, x)), tol) << "input";
  for (auto* p : params) {
    const auto analytic = p->grad;
    EXPECT_LE(oracle::relative_error(analytic, oracle::numeric_gradient(f, p->value)), tol)
        << p->name;
  }
}

}  // namespace

TEST(BatchNorm, TwoValueExample) {
  BatchNorm2d<double> bn("bn", 1);
  const auto y = bn.forward_train(Tensor<double>({2, 1, 1, 1}, {1, 3}));
  EXPECT_NEAR(y[0], -0.999995, 1e-6);
  EXPECT_NEAR(y[1], 0.999995, 1e-6);
  EXPECT_NEAR(y[0], -1.0 / std::sqrt(1.0 + 1e-5), 1e-15);
}

TEST(BatchNorm, ConstantChannelGivesBeta) {
  BatchNorm2d<double> bn("bn", 2);
  bn.beta.value = Tensor<double>({2}, {0.25, -0.5});
  const auto y = bn.forward_train(Tensor<double>({3, 2, 2, 2}, 4.0));
  for (std::size_t i = 0; i < y.size(); ++i) {
    const std::size_t c = (i / 4) % 2;
    EXPECT_NEAR(y[i], c == 0 ? 0.25 : -0.5, 1e-12);
  }
}

TEST(BatchNorm, EvalModeIsIdentityWithUnitStatistics) {
  BatchNorm2d<double> bn("bn", 3);
  bn.mode = Mode::eval;
  std::mt19937_64 rng(1);
  const auto x = random_tensor<double>({2, 3, 4, 4}, rng);
  const auto y = bn.forward(x);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(y[i], x[i] / std::sqrt(1 + 1e-5), 1e-15);
}

TEST(BatchNorm, TrainModeNormalizesAndTracksRunningStatistics) {
  std::mt19937_64 rng(2);
  BatchNorm2d<double> bn("bn", 4);
  const auto x = random_tensor<double>({5, 4, 3, 3}, rng, 2.0, 6.0);
  const auto y = bn.forward_train(x);
  for (std::size_t c = 0; c < 4; ++c) {
    double m = 0, v = 0, xm = 0, xv = 0;
    std::vector<double> vals, xs;
    for (std::size_t n = 0; n < 5; ++n)
      for (std::size_t i = 0; i < 9; ++i) {
        vals.push_back(y[(n * 4 + c) * 9 + i]);
        xs.push_back(x[(n * 4 + c) * 9 + i]);
      }
    for (std::size_t i = 0; i < vals.size(); ++i) {
      m += vals[i];
      xm += xs[i];
    }
    m /= 45;
    xm /= 45;
    for (std::size_t i = 0; i < vals.size(); ++i) {
      v += (vals[i] - m) * (vals[i] - m);
      xv += (xs[i] - xm) * (xs[i] - xm);
    }
    v /= 45;
    xv /= 45;
    EXPECT_LE(std::abs(m), 1e-5);
    EXPECT_NEAR(v, 1.0, 1e-3);
    EXPECT_NEAR(bn.running_mean[c], 0.1 * xm, 1e-12);
    EXPECT_NEAR(bn.running_var[c], 0.9 + 0.1 * xv, 1e-12);
    EXPECT_GT(bn.running_var[c], 0.0);
  }
}

TEST(BatchNorm, RejectsSingleElementBatches) {
  BatchNorm2d<double> bn("bn", 2);
  EXPECT_THROW(bn.forward_train(Tensor<double>({1, 2, 1, 1})), Error);
  EXPECT_THROW(bn.forward_train(Tensor<double>({2, 3, 1, 1})), ShapeError);
}

TEST(BatchNorm, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(3);
  for (Mode mode : {Mode::train, Mode::eval}) {
    BatchNorm2d<double> bn("bn", 3);
    bn.mode = mode;
    bn.gamma.value = random_tensor<double>({3}, rng, 0.5, 1.5);
    bn.beta.value = random_tensor<double>({3}, rng);
    bn.running_mean = random_tensor<double>({3}, rng);
    bn.running_var = random_tensor<double>({3}, rng, 0.5, 2.0);
    auto x = random_tensor<double>({2, 3, 3, 3}, rng);
    check_layer(bn, x, [](auto& l, const auto& in) { return l.forward_train(in); }, rng);
  }
}

TEST(Linear, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(4);
  Rng init(5);
  LinearLayer<double> fc("fc", 6, 3, init);
  fc.bias.value = random_tensor<double>({3}, rng);
  auto x = random_tensor<double>({4, 6}, rng);
  check_layer(fc, x, [](auto& l, const auto& in) { return l.forward_train(in); }, rng);
  EXPECT_THROW(fc.forward(Tensor<double>({4, 5})), ShapeError);
}

TEST(ConvLayers, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(6);
  Rng init(7);
  Conv2dLayer<double> conv("c", 2, 3, 3, ConvGeometry::square(2, 1), true, init);
  auto x = random_tensor<double>({2, 2, 5, 5}, rng);
  check_layer(conv, x, [](auto& l, const auto& in) { return l.forward_train(in); }, rng);

  ConvTranspose2dLayer<double> deconv("d", 3, 2, 3, ConvGeometry::square(2, 1), true, init);
  auto z = random_tensor<double>({2, 3, 3, 3}, rng);
  check_layer(deconv, z, [](auto& l, const auto& in) { return l.forward_train(in, 6, 6); }, rng);
  EXPECT_EQ(deconv.forward(z, 5, 5).shape(), (Shape{2, 2, 5, 5}));
  EXPECT_THROW(deconv.forward(z, 8, 8), ShapeError);
}

TEST(CrossEntropy, Examples) {
  const std::vector<std::size_t> t0{0}, t1{1};
  EXPECT_NEAR(cross_entropy(Tensor<double>({1, 2}, {0, 0}), std::span<const std::size_t>(t0)).loss,
              std::log(2.0), 1e-12);
  EXPECT_NEAR(cross_entropy(Tensor<double>({1, 2}, {1, 2}), std::span<const std::size_t>(t1)).loss,
              0.313262, 1e-6);
  const auto big = cross_entropy(Tensor<double>({1, 2}, {1000, 0}), std::span<const std::size_t>(t0));
  EXPECT_TRUE(std::isfinite(big.loss));
  EXPECT_NEAR(big.loss, 0.0, 1e-12);
  const std::vector<std::size_t> bad{2};
  EXPECT_THROW(cross_entropy(Tensor<double>({1, 2}), std::span<const std::size_t>(bad)), Error);
}

TEST(CrossEntropy, GradientRowsSumToZeroAndMatchFiniteDifferences) {
  std::mt19937_64 rng(8);
  auto logits = random_tensor<double>({5, 3}, rng, -3, 3);
  const std::vector<std::size_t> t{0, 2, 1, 1, 0};
  const auto r = cross_entropy(logits, std::span<const std::size_t>(t));
  EXPECT_GE(r.loss, 0.0);
  for (std::size_t i = 0; i < 5; ++i)
    EXPECT_NEAR(r.grad[i * 3] + r.grad[i * 3 + 1] + r.grad[i * 3 + 2], 0.0, 1e-15);
  const auto f = [&] { return cross_entropy(logits, std::span<const std::size_t>(t)).loss; };
  EXPECT_LE(oracle::relative_error(r.grad, oracle::numeric_gradient(f, logits)), 1e-4);
}

TEST(Mse, ExamplesAndOracle) {
  const Tensor<double> a({2}, {0, 0});
  EXPECT_EQ(mse_loss(a, a).loss, 0.0);
  EXPECT_DOUBLE_EQ(mse_loss(a, Tensor<double>({2}, {1, 1})).loss, 1.0);
  EXPECT_THROW(mse_loss(a, Tensor<double>({3})), ShapeError);
  std::mt19937_64 rng(9);
  auto p = random_tensor<double>({3, 7}, rng);
  const auto q = random_tensor<double>({3, 7}, rng);
  double direct = 0;
  for (std::size_t i = 0; i < p.size(); ++i) direct += (p[i] - q[i]) * (p[i] - q[i]);
  direct /= 21;
  const auto r = mse_loss(p, q);
  EXPECT_NEAR(r.loss, direct, 1e-6 * direct);
  const auto f = [&] { return mse_loss(p, q).loss; };
  EXPECT_LE(oracle::relative_error(r.grad, oracle::numeric_gradient(f, p)), 1e-4);
}

TEST(Adam, ZeroGradientLeavesParametersAndCountsStep) {
  Parameter<double> p("p", Tensor<double>({3}, {1, 2, 3}));
  AdamState<double> st;
  adam_step<double>(std::vector<Parameter<double>*>{&p}, st);
  EXPECT_EQ(p.value, Tensor<double>({3}, {1, 2, 3}));
  EXPECT_EQ(st.step, 1u);
  adam_step<double>(std::vector<Parameter<double>*>{&p}, st);
  EXPECT_EQ(st.step, 2u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Parameter<double> p("p", Tensor<double>::scalar(0.0));
  p.grad = Tensor<double>::scalar(1.0);
  AdamState<double> st;
  st.config.lr = 0.1;
  adam_step<double>(std::vector<Parameter<double>*>{&p}, st);
  EXPECT_NEAR(p.value[0], -0.1 / (1 + 1e-8), 1e-15);
  const double after_one = p.value[0];
  adam_step<double>(std::vector<Parameter<double>*>{&p}, st);
  EXPECT_LT(p.value[0], after_one);
}

TEST(Adam, ZeroLearningRateIsIdentityAndShapesAreChecked) {
  std::mt19937_64 rng(10);
  Parameter<double> p("p", random_tensor<double>({4}, rng));
  p.grad = random_tensor<double>({4}, rng);
  const auto keep = p.value;
  AdamState<double> st;
  st.config.lr = 0.0;
  adam_step<double>(std::vector<Parameter<double>*>{&p}, st);
  EXPECT_EQ(p.value, keep);
  p.grad = Tensor<double>({5});
  EXPECT_THROW(adam_step<double>(std::vector<Parameter<double>*>{&p}, st), ShapeError);
}

TEST(ResidualBlock, VanishingBranchGivesRelu) {
  Rng init(11);
  ResidualBlock<double> block("b", 4, 4, 1, false, init);
  block.conv1.weight.value.fill(0.0);
  block.conv2.weight.value.fill(0.0);
  std::mt19937_64 rng(12);
  const auto x = random_tensor<double>({2, 4, 5, 5}, rng);
  EXPECT_EQ(block.forward_train(x), relu(x));
  block.set_mode(Mode::eval);
  EXPECT_EQ(block.forward(x), relu(x));
}

TEST(ResidualBlock, ProjectionShapeRuleAndRejection) {
  Rng init(13);
  ResidualBlock<double> block("b", 64, 128, 2, true, init);
  block.set_mode(Mode::eval);
  EXPECT_EQ(block.forward(Tensor<double>({1, 64, 16, 16})).shape(), (Shape{1, 128, 8, 8}));
  EXPECT_THROW(ResidualBlock<double>("c", 64, 128, 2, false, init), ShapeError);
  EXPECT_THROW(ResidualBlock<double>("d", 64, 64, 2, false, init), ShapeError);
}

TEST(ResidualBlock, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(14);
  for (bool projection : {false, true}) {
    Rng init(15);
    ResidualBlock<double> block("b", 4, projection ? 6 : 4, projection ? 2 : 1, projection,
                                init);
    auto x = random_tensor<double>({1, 4, 6, 6}, rng);
    check_layer(block, x, [](auto& l, const auto& in) { return l.forward_train(in); }, rng);
  }
}
