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

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dfml/nn.hpp"
#include "dfml/pool.hpp"
#include "dfml/rng.hpp"
#include "dfml/tensor.hpp"

namespace dfml {

/// Named view over every tensor a model persists: trainables, then buffers.
template <typename T>
using StateList = std::vector<std::pair<std::string, Tensor<T>*>>;

// ---------------------------------------------------------------------------
// Classifier: ResNet18 truncated after its second stage.
//
//   stem   conv7x7/2 (3->64) + BN + ReLU + maxpool3x3/2
//   layer1 two identity blocks at 64 channels
//   layer2 projection block 64->128 stride 2, identity block at 128
//   head   global average pool -> 128-d code -> linear 128->2
//
// Weighted layers: 1 stem + 4 blocks x 2 convs + 1 linear = 10. The 1x1
// projection shortcut is not counted.
// ---------------------------------------------------------------------------

struct ClassifierConfig {
  std::size_t input_height = 224;
  std::size_t input_width = 224;
  std::size_t stem_channels = 64;
  std::size_t code_channels = 128;
  std::size_t classes = 2;

  static constexpr std::size_t kMinInput = 32;
  static constexpr std::size_t kCodeWidth = 128;
  static constexpr std::size_t kWeightedLayers = 10;

  void validate() const {
    if (input_height < kMinInput || input_width < kMinInput) {
      throw Error("classifier input must be at least 32x32, got " +
                  std::to_string(input_height) + "x" + std::to_string(input_width));
    }
    if (code_channels != kCodeWidth) {
      throw Error("classifier code width must be 128, got " +
                  std::to_string(code_channels));
    }
    if (classes != 2) {
      throw Error("classifier is binary, got " + std::to_string(classes) + " classes");
    }
    if (stem_channels == 0) throw Error("classifier stem width must be positive");
  }
};

template <typename T>
struct ClassifierOutput {
  Tensor<T> logits;    // N x 2
  Tensor<T> codes;     // N x 128
  Tensor<T> features;  // last conv activation, N x 128 x h x w
};

template <typename T>
class ClassifierModel {
 public:
  explicit ClassifierModel(const ClassifierConfig& config, std::uint64_t seed = 0)
      : config_(config) {
    config_.validate();
    Rng rng(derive_seed(seed, "classifier.init"));
    const std::size_t c1 = config_.stem_channels, c2 = config_.code_channels;
    stem_conv_ = Conv2dLayer<T>("stem.conv", 3, c1, 7, ConvGeometry::square(2, 3), false, rng);
    stem_bn_ = BatchNorm2d<T>("stem.bn", c1);
    blocks_.emplace_back("layer1.0", c1, c1, 1, false, rng);
    blocks_.emplace_back("layer1.1", c1, c1, 1, false, rng);
    blocks_.emplace_back("layer2.0", c1, c2, 2, true, rng);
    blocks_.emplace_back("layer2.1", c2, c2, 1, false, rng);
    fc_ = LinearLayer<T>("fc", c2, config_.classes, rng);
  }

  const ClassifierConfig& config() const { return config_; }

  static constexpr std::size_t weighted_layer_count() {
    return ClassifierConfig::kWeightedLayers;
  }

  ClassifierOutput<T> forward(const Tensor<T>& batch) const {
    check_input(batch);
    Tensor<T> h = relu(stem_bn_.forward(stem_conv_.forward(batch)));
    h = max_pool2d(h, 3, 2, 1).output;
    for (const auto& b : blocks_) h = b.forward(h);
    Tensor<T> codes = global_avg_pool(h);
    Tensor<T> logits = fc_.forward(codes);
    return {std::move(logits), std::move(codes), std::move(h)};
  }

  ClassifierOutput<T> forward_train(const Tensor<T>& batch) {
    check_input(batch);
    stem_pre_ = stem_bn_.forward_train(stem_conv_.forward_train(batch));
    auto pooled = max_pool2d(relu(stem_pre_), 3, 2, 1);
    pool_argmax_ = std::move(pooled.argmax);
    Tensor<T> h = std::move(pooled.output);
    for (auto& b : blocks_) h = b.forward_train(h);
    feature_shape_ = h.shape();
    Tensor<T> codes = global_avg_pool(h);
    Tensor<T> logits = fc_.forward_train(codes);
    return {std::move(logits), std::move(codes), std::move(h)};
  }

  /// Backpropagates d(loss)/d(logits) and optionally an extra gradient on the
  /// codes; returns d(loss)/d(input).
  Tensor<T> backward(const Tensor<T>& grad_logits, const Tensor<T>* grad_codes = nullptr) {
    Tensor<T> g = fc_.backward(grad_logits);
    if (grad_codes) add_inplace(g, *grad_codes);
    g = global_avg_pool_backward(g, feature_shape_);
    for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) g = it->backward(g);
    g = max_pool2d_backward(g, pool_argmax_, stem_pre_.shape());
    g = relu_backward(stem_pre_, g);
    return stem_conv_.backward(stem_bn_.backward(g));
  }

  void set_mode(Mode m) {
    stem_bn_.mode = m;
    for (auto& b : blocks_) b.set_mode(m);
  }

  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> out;
    stem_conv_.parameters(out);
    stem_bn_.parameters(out);
    for (auto& b : blocks_) b.parameters(out);
    fc_.parameters(out);
    return out;
  }

  std::vector<Buffer<T>> buffers() {
    std::vector<Buffer<T>> out;
    stem_bn_.buffers(out);
    for (auto& b : blocks_) b.buffers(out);
    return out;
  }

  StateList<T> state() {
    StateList<T> out;
    for (auto* p : parameters()) out.emplace_back(p->name, &p->value);
    for (auto& b : buffers()) out.emplace_back(b.name, b.value);
    return out;
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    for (auto* p : parameters()) n += p->value.size();
    return n;
  }

  void zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
  }

 private:
  void check_input(const Tensor<T>& x) const {
    detail::require_rank(x, 4, "classifier input");
    if (x.shape()[1] != 3) {
      throw ShapeError("classifier input must have 3 channels, got shape " +
                       shape_str(x.shape()));
    }
    if (x.shape()[2] < ClassifierConfig::kMinInput ||
        x.shape()[3] < ClassifierConfig::kMinInput) {
      throw ShapeError("classifier input must be at least 32x32, got " +
                       std::to_string(x.shape()[2]) + "x" + std::to_string(x.shape()[3]));
    }
  }

  ClassifierConfig config_;
  Conv2dLayer<T> stem_conv_;
  BatchNorm2d<T> stem_bn_;
  std::vector<ResidualBlock<T>> blocks_;
  LinearLayer<T> fc_;

  Tensor<T> stem_pre_;
  std::vector<std::size_t> pool_argmax_;
  Shape feature_shape_;
};

// ---------------------------------------------------------------------------
// Convolutional autoencoder, no skip connections.
//
//   encoder  3 x [conv3x3/2 pad 1 + BN + ReLU]   3 -> 16 -> 32 -> 32
//   decoder  2 x [deconv3x3/2 + BN + ReLU], deconv3x3/2 + sigmoid
//                                               32 -> 32 -> 16 -> 3
//
// At 48x48 the encoder leaves 32 x 6 x 6 = 1152 bottleneck features.
// ---------------------------------------------------------------------------

struct AutoencoderConfig {
  std::size_t input_height = 48;
  std::size_t input_width = 48;
  std::array<std::size_t, 3> channels{16, 32, 32};

  static constexpr std::size_t kReferenceSize = 48;
  static constexpr std::size_t kReferenceBottleneck = 1152;

  static constexpr std::size_t encoded_extent(std::size_t in) {
    for (int i = 0; i < 3; ++i) in = (in + 2 - 3) / 2 + 1;
    return in;
  }

  std::size_t bottleneck_size() const {
    return channels[2] * encoded_extent(input_height) * encoded_extent(input_width);
  }

  void validate() const {
    if (input_height < 2 || input_width < 2) {
      throw Error("autoencoder input must be at least 2x2");
    }
    for (auto c : channels)
      if (c == 0) throw Error("autoencoder channel widths must be positive");
  }
};

template <typename T>
struct AutoencoderOutput {
  Tensor<T> reconstruction;  // N x 3 x H x W, in (0, 1)
  Tensor<T> bottleneck;      // N x D
};

template <typename T>
class AutoencoderModel {
 public:
  explicit AutoencoderModel(const AutoencoderConfig& config, std::uint64_t seed = 0)
      : config_(config) {
    config_.validate();
    Rng rng(derive_seed(seed, "autoencoder.init"));
    const auto g = ConvGeometry::square(2, 1);
    const std::array<std::size_t, 4> widths{3, config_.channels[0], config_.channels[1],
                                            config_.channels[2]};
    for (std::size_t i = 0; i < 3; ++i) {
      const std::string n = "enc" + std::to_string(i + 1);
      enc_conv_[i] = Conv2dLayer<T>(n + ".conv", widths[i], widths[i + 1], 3, g, false, rng);
      enc_bn_[i] = BatchNorm2d<T>(n + ".bn", widths[i + 1]);
    }
    for (std::size_t i = 0; i < 3; ++i) {
      const std::string n = "dec" + std::to_string(i + 1);
      const std::size_t from = widths[3 - i], to = widths[2 - i];
      dec_conv_[i] = ConvTranspose2dLayer<T>(n + ".deconv", from, to, 3, g, i == 2, rng);
      if (i < 2) dec_bn_[i] = BatchNorm2d<T>(n + ".bn", to);
    }
  }

  const AutoencoderConfig& config() const { return config_; }

  /// Bottleneck features, N x D. In strict mode inputs other than 48x48 are
  /// rejected so the width is guaranteed to be 1152.
  Tensor<T> encode(const Tensor<T>& batch, bool strict = false) const {
    check_input(batch, strict);
    Tensor<T> h = batch;
    for (std::size_t i = 0; i < 3; ++i) h = relu(enc_bn_[i].forward(enc_conv_[i].forward(h)));
    const std::size_t n = h.shape()[0];
    return std::move(h).reshape({n, h.size() / n});
  }

  AutoencoderOutput<T> forward(const Tensor<T>& batch, bool strict = false) const {
    check_input(batch, strict);
    const auto sizes = extents(batch);
    Tensor<T> h = batch;
    for (std::size_t i = 0; i < 3; ++i) h = relu(enc_bn_[i].forward(enc_conv_[i].forward(h)));
    const std::size_t n = h.shape()[0];
    Tensor<T> code = h.reshape({n, h.size() / n});
    for (std::size_t i = 0; i < 3; ++i) {
      h = dec_conv_[i].forward(h, sizes[2 - i].first, sizes[2 - i].second);
      h = i < 2 ? relu(dec_bn_[i].forward(h)) : sigmoid(h);
    }
    return {std::move(h), std::move(code)};
  }

  AutoencoderOutput<T> forward_train(const Tensor<T>& batch) {
    check_input(batch, false);
    const auto sizes = extents(batch);
    Tensor<T> h = batch;
    for (std::size_t i = 0; i < 3; ++i) {
      enc_pre_[i] = enc_bn_[i].forward_train(enc_conv_[i].forward_train(h));
      h = relu(enc_pre_[i]);
    }
    const std::size_t n = h.shape()[0];
    Tensor<T> code = h.reshape({n, h.size() / n});
    for (std::size_t i = 0; i < 3; ++i) {
      h = dec_conv_[i].forward_train(h, sizes[2 - i].first, sizes[2 - i].second);
      if (i < 2) {
        dec_pre_[i] = dec_bn_[i].forward_train(h);
        h = relu(dec_pre_[i]);
      } else {
        h = sigmoid(h);
        output_ = h;
      }
    }
    return {std::move(h), std::move(code)};
  }

  /// Backpropagates d(loss)/d(reconstruction); returns d(loss)/d(input).
  Tensor<T> backward(const Tensor<T>& grad_reconstruction) {
    Tensor<T> g = sigmoid_backward(output_, grad_reconstruction);
    for (std::size_t i = 3; i-- > 0;) {
      if (i < 2) g = dec_bn_[i].backward(relu_backward(dec_pre_[i], g));
      g = dec_conv_[i].backward(g);
    }
    for (std::size_t i = 3; i-- > 0;) {
      g = enc_conv_[i].backward(enc_bn_[i].backward(relu_backward(enc_pre_[i], g)));
    }
    return g;
  }

  void set_mode(Mode m) {
    for (auto& b : enc_bn_) b.mode = m;
    for (auto& b : dec_bn_) b.mode = m;
  }

  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> out;
    for (std::size_t i = 0; i < 3; ++i) {
      enc_conv_[i].parameters(out);
      enc_bn_[i].parameters(out);
    }
    for (std::size_t i = 0; i < 3; ++i) {
      dec_conv_[i].parameters(out);
      if (i < 2) dec_bn_[i].parameters(out);
    }
    return out;
  }

  std::vector<Buffer<T>> buffers() {
    std::vector<Buffer<T>> out;
    for (auto& b : enc_bn_) b.buffers(out);
    for (auto& b : dec_bn_) b.buffers(out);
    return out;
  }

  StateList<T> state() {
    StateList<T> out;
    for (auto* p : parameters()) out.emplace_back(p->name, &p->value);
    for (auto& b : buffers()) out.emplace_back(b.name, b.value);
    return out;
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    for (auto* p : parameters()) n += p->value.size();
    return n;
  }

  void zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
  }

 private:
  void check_input(const Tensor<T>& x, bool strict) const {
    detail::require_rank(x, 4, "autoencoder input");
    if (x.shape()[1] != 3) {
      throw ShapeError("autoencoder input must have 3 channels, got shape " +
                       shape_str(x.shape()));
    }
    if (strict && (x.shape()[2] != AutoencoderConfig::kReferenceSize ||
                   x.shape()[3] != AutoencoderConfig::kReferenceSize)) {
      throw ShapeError("autoencoder strict mode requires 48x48 input, got " +
                       std::to_string(x.shape()[2]) + "x" + std::to_string(x.shape()[3]));
    }
  }

  // Spatial extents at the input and after each encoder stage.
  static std::array<std::pair<std::size_t, std::size_t>, 4> extents(const Tensor<T>& x) {
    std::array<std::pair<std::size_t, std::size_t>, 4> e{};
    e[0] = {x.shape()[2], x.shape()[3]};
    for (std::size_t i = 1; i < 4; ++i)
      e[i] = {(e[i - 1].first - 1) / 2 + 1, (e[i - 1].second - 1) / 2 + 1};
    return e;
  }

  AutoencoderConfig config_;
  std::array<Conv2dLayer<T>, 3> enc_conv_;
  std::array<BatchNorm2d<T>, 3> enc_bn_;
  std::array<ConvTranspose2dLayer<T>, 3> dec_conv_;
  std::array<BatchNorm2d<T>, 2> dec_bn_;

  std::array<Tensor<T>, 3> enc_pre_;
  std::array<Tensor<T>, 2> dec_pre_;
  Tensor<T> output_;
};

}  // namespace dfml
