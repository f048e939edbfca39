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

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dfml/conv.hpp"
#include "dfml/linalg.hpp"
#include "dfml/pool.hpp"
#include "dfml/rng.hpp"
#include "dfml/tensor.hpp"

namespace dfml {

enum class Mode { train, eval };

/// A trainable tensor with its accumulated gradient.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void zero_grad() { grad.fill(T{0}); }
};

/// Non-trainable state that still belongs in a checkpoint.
template <typename T>
struct Buffer {
  std::string name;
  Tensor<T>* value;
};

/// Fan-in scaled normal, std = sqrt(2 / fan_in).
template <typename T>
Tensor<T> kaiming_normal(Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor<T> t(std::move(shape));
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  for (auto& v : t.data()) v = static_cast<T>(dist(rng));
  return t;
}

template <typename T>
class Conv2dLayer {
 public:
  Conv2dLayer() = default;
  Conv2dLayer(const std::string& name, std::size_t in_channels,
              std::size_t out_channels, std::size_t kernel,
              ConvGeometry geometry, bool with_bias, Rng& rng)
      : weight(name + ".weight",
               kaiming_normal<T>({out_channels, in_channels, kernel, kernel},
                                 in_channels * kernel * kernel, rng)),
        geometry(geometry) {
    if (with_bias) bias.emplace(name + ".bias", Tensor<T>({out_channels}));
  }

  std::size_t in_channels() const { return weight.value.shape()[1]; }
  std::size_t out_channels() const { return weight.value.shape()[0]; }

  Tensor<T> forward(const Tensor<T>& x) const {
    return bias ? conv2d(x, weight.value, bias->value, geometry)
                : conv2d(x, weight.value, geometry);
  }

  Tensor<T> forward_train(const Tensor<T>& x) {
    input_ = x;
    return forward(x);
  }

  Tensor<T> backward(const Tensor<T>& grad_out) {
    auto g = conv2d_backward(input_, weight.value, grad_out, geometry);
    add_inplace(weight.grad, g.grad_weight);
    if (bias) add_inplace(bias->grad, g.grad_bias);
    return std::move(g.grad_input);
  }

  void parameters(std::vector<Parameter<T>*>& out) {
    out.push_back(&weight);
    if (bias) out.push_back(&*bias);
  }

  Parameter<T> weight;
  std::optional<Parameter<T>> bias;
  ConvGeometry geometry;

 private:
  Tensor<T> input_;
};

/// Transposed convolution with weight layout [in, out, K, K].
template <typename T>
class ConvTranspose2dLayer {
 public:
  ConvTranspose2dLayer() = default;
  ConvTranspose2dLayer(const std::string& name, std::size_t in_channels,
                       std::size_t out_channels, std::size_t kernel,
                       ConvGeometry geometry, bool with_bias, Rng& rng)
      : weight(name + ".weight",
               kaiming_normal<T>({in_channels, out_channels, kernel, kernel},
                                 in_channels * kernel * kernel, rng)),
        geometry(geometry) {
    if (with_bias) bias.emplace(name + ".bias", Tensor<T>({out_channels}));
  }

  /// Forward pass producing exactly `out_h` x `out_w`; the output padding is
  /// derived from the requested size.
  Tensor<T> forward(const Tensor<T>& x, std::size_t out_h, std::size_t out_w) const {
    const auto [ph, pw] = output_padding(x, out_h, out_w);
    return conv_transpose2d(x, weight.value, bias ? &bias->value : nullptr,
                            geometry, ph, pw);
  }

  Tensor<T> forward_train(const Tensor<T>& x, std::size_t out_h, std::size_t out_w) {
    input_ = x;
    return forward(x, out_h, out_w);
  }

  Tensor<T> backward(const Tensor<T>& grad_out) {
    auto g = conv_transpose2d_backward(input_, weight.value, grad_out, geometry);
    add_inplace(weight.grad, g.grad_weight);
    if (bias) add_inplace(bias->grad, g.grad_bias);
    return std::move(g.grad_input);
  }

  void parameters(std::vector<Parameter<T>*>& out) {
    out.push_back(&weight);
    if (bias) out.push_back(&*bias);
  }

  Parameter<T> weight;
  std::optional<Parameter<T>> bias;
  ConvGeometry geometry;

 private:
  std::pair<std::size_t, std::size_t> output_padding(const Tensor<T>& x,
                                                     std::size_t out_h,
                                                     std::size_t out_w) const {
    detail::require_rank(x, 4, "conv_transpose input");
    const std::size_t k = weight.value.shape()[2];
    const auto pad = [&](std::size_t in, std::size_t target, std::size_t s,
                         std::size_t p, const char* axis) {
      const std::size_t base = (in - 1) * s + k;
      if (target + 2 * p < base || target + 2 * p - base >= s) {
        throw ShapeError(std::string("conv_transpose: cannot reach ") + axis +
                         " " + std::to_string(target) + " from " +
                         std::to_string(in));
      }
      return target + 2 * p - base;
    };
    return {pad(x.shape()[2], out_h, geometry.stride_h, geometry.pad_h, "height"),
            pad(x.shape()[3], out_w, geometry.stride_w, geometry.pad_w, "width")};
  }

  Tensor<T> input_;
};

template <typename T>
class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  BatchNorm2d(const std::string& name, std::size_t channels, T eps = T(1e-5),
              T momentum = T(0.1))
      : gamma(name + ".gamma", Tensor<T>({channels}, T{1})),
        beta(name + ".beta", Tensor<T>({channels})),
        running_mean({channels}),
        running_var({channels}, T{1}),
        eps(eps),
        momentum(momentum),
        name_(name) {}

  std::size_t channels() const { return gamma.value.size(); }

  /// Inference: normalizes with the running statistics.
  Tensor<T> forward(const Tensor<T>& x) const {
    check_input(x);
    const auto& s = x.shape();
    const std::size_t c_count = s[1], area = s[2] * s[3];
    Tensor<T> y(s);
    for (std::size_t c = 0; c < c_count; ++c) {
      const T inv = T{1} / std::sqrt(running_var[c] + eps);
      const T scale = gamma.value[c] * inv;
      const T shift = beta.value[c] - running_mean[c] * scale;
      for (std::size_t n = 0; n < s[0]; ++n) {
        const T* src = x.raw() + (n * c_count + c) * area;
        T* dst = y.raw() + (n * c_count + c) * area;
        for (std::size_t i = 0; i < area; ++i) dst[i] = src[i] * scale + shift;
      }
    }
    return y;
  }

  /// Training forward. In train mode normalizes with the batch mean and biased
  /// variance and folds them into the running statistics; in eval mode behaves
  /// like forward() but keeps what backward() needs.
  Tensor<T> forward_train(const Tensor<T>& x) {
    check_input(x);
    const auto& s = x.shape();
    const std::size_t c_count = s[1], area = s[2] * s[3], count = s[0] * area;
    cached_shape_ = s;
    inv_std_.assign(c_count, T{0});
    if (mode == Mode::eval) {
      cached_mode_ = Mode::eval;
      x_hat_ = Tensor<T>(s);
      for (std::size_t c = 0; c < c_count; ++c) {
        inv_std_[c] = T{1} / std::sqrt(running_var[c] + eps);
        for (std::size_t n = 0; n < s[0]; ++n) {
          const std::size_t off = (n * c_count + c) * area;
          for (std::size_t i = 0; i < area; ++i)
            x_hat_.raw()[off + i] = (x.raw()[off + i] - running_mean[c]) * inv_std_[c];
        }
      }
      return forward(x);
    }
    if (count < 2) {
      throw ShapeError("batchnorm " + name_ +
                       ": train mode needs at least two values per channel, got "
                       "shape " + shape_str(s));
    }
    cached_mode_ = Mode::train;
    x_hat_ = Tensor<T>(s);
    Tensor<T> y(s);
    for (std::size_t c = 0; c < c_count; ++c) {
      T acc{0};
      for (std::size_t n = 0; n < s[0]; ++n) {
        const T* src = x.raw() + (n * c_count + c) * area;
        for (std::size_t i = 0; i < area; ++i) acc += src[i];
      }
      const T mu = acc / static_cast<T>(count);
      T sq{0};
      for (std::size_t n = 0; n < s[0]; ++n) {
        const T* src = x.raw() + (n * c_count + c) * area;
        for (std::size_t i = 0; i < area; ++i) sq += (src[i] - mu) * (src[i] - mu);
      }
      const T var = sq / static_cast<T>(count);
      const T inv = T{1} / std::sqrt(var + eps);
      inv_std_[c] = inv;
      for (std::size_t n = 0; n < s[0]; ++n) {
        const std::size_t off = (n * c_count + c) * area;
        for (std::size_t i = 0; i < area; ++i) {
          const T xh = (x.raw()[off + i] - mu) * inv;
          x_hat_.raw()[off + i] = xh;
          y.raw()[off + i] = gamma.value[c] * xh + beta.value[c];
        }
      }
      running_mean[c] = (T{1} - momentum) * running_mean[c] + momentum * mu;
      running_var[c] = (T{1} - momentum) * running_var[c] + momentum * var;
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& grad_out) {
    if (grad_out.shape() != cached_shape_) {
      throw ShapeError("batchnorm " + name_ + ": gradient shape " +
                       shape_str(grad_out.shape()) + " does not match forward " +
                       shape_str(cached_shape_));
    }
    const auto& s = cached_shape_;
    const std::size_t c_count = s[1], area = s[2] * s[3], count = s[0] * area;
    Tensor<T> gx(s);
    for (std::size_t c = 0; c < c_count; ++c) {
      T sum_g{0}, sum_gx{0};
      for (std::size_t n = 0; n < s[0]; ++n) {
        const std::size_t off = (n * c_count + c) * area;
        for (std::size_t i = 0; i < area; ++i) {
          sum_g += grad_out.raw()[off + i];
          sum_gx += grad_out.raw()[off + i] * x_hat_.raw()[off + i];
        }
      }
      gamma.grad[c] += sum_gx;
      beta.grad[c] += sum_g;
      const T scale = gamma.value[c] * inv_std_[c];
      if (cached_mode_ == Mode::eval) {
        // Running statistics are constants: the map is affine per channel.
        for (std::size_t n = 0; n < s[0]; ++n) {
          const std::size_t off = (n * c_count + c) * area;
          for (std::size_t i = 0; i < area; ++i) gx.raw()[off + i] = grad_out.raw()[off + i] * scale;
        }
        continue;
      }
      const T inv_count = T{1} / static_cast<T>(count);
      for (std::size_t n = 0; n < s[0]; ++n) {
        const std::size_t off = (n * c_count + c) * area;
        for (std::size_t i = 0; i < area; ++i) {
          gx.raw()[off + i] = scale * (grad_out.raw()[off + i] - sum_g * inv_count -
                                       x_hat_.raw()[off + i] * sum_gx * inv_count);
        }
      }
    }
    return gx;
  }

  void parameters(std::vector<Parameter<T>*>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
  }

  void buffers(std::vector<Buffer<T>>& out) {
    out.push_back({name_ + ".running_mean", &running_mean});
    out.push_back({name_ + ".running_var", &running_var});
  }

  Parameter<T> gamma;
  Parameter<T> beta;
  Tensor<T> running_mean;
  Tensor<T> running_var;
  T eps = T(1e-5);
  T momentum = T(0.1);
  Mode mode = Mode::train;

 private:
  void check_input(const Tensor<T>& x) const {
    detail::require_rank(x, 4, "batchnorm input");
    if (x.shape()[1] != channels()) {
      throw ShapeError("batchnorm " + name_ + ": channel dimension " +
                       std::to_string(x.shape()[1]) + " does not match layer width " +
                       std::to_string(channels()));
    }
  }

  std::string name_;
  Shape cached_shape_;
  Mode cached_mode_ = Mode::train;
  Tensor<T> x_hat_;
  std::vector<T> inv_std_;
};

template <typename T>
class LinearLayer {
 public:
  LinearLayer() = default;
  LinearLayer(const std::string& name, std::size_t in_features,
              std::size_t out_features, Rng& rng)
      : weight(name + ".weight",
               kaiming_normal<T>({out_features, in_features}, in_features, rng)),
        bias(name + ".bias", Tensor<T>({out_features})) {}

  std::size_t in_features() const { return weight.value.shape()[1]; }
  std::size_t out_features() const { return weight.value.shape()[0]; }

  Tensor<T> forward(const Tensor<T>& x) const {
    detail::require_rank(x, 2, "linear input");
    if (x.shape()[1] != in_features()) {
      throw ShapeError("linear: input features " + std::to_string(x.shape()[1]) +
                       " do not match layer width " + std::to_string(in_features()));
    }
    Tensor<T> y = matmul(x, transpose2d(weight.value));
    const std::size_t out = out_features();
    for (std::size_t n = 0; n < x.shape()[0]; ++n)
      for (std::size_t o = 0; o < out; ++o) y[n * out + o] += bias.value[o];
    return y;
  }

  Tensor<T> forward_train(const Tensor<T>& x) {
    input_ = x;
    return forward(x);
  }

  Tensor<T> backward(const Tensor<T>& grad_out) {
    add_inplace(weight.grad, matmul(transpose2d(grad_out), input_));
    add_inplace(bias.grad, sum(grad_out, 0));
    return matmul(grad_out, weight.value);
  }

  void parameters(std::vector<Parameter<T>*>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }

  Parameter<T> weight;
  Parameter<T> bias;

 private:
  Tensor<T> input_;
};

template <typename T>
struct LossResult {
  T loss;
  Tensor<T> grad;
};

/// Mean softmax cross-entropy with log-sum-exp stabilization.
template <typename T>
LossResult<T> cross_entropy(const Tensor<T>& logits,
                            std::span<const std::size_t> targets) {
  detail::require_rank(logits, 2, "cross_entropy logits");
  const std::size_t n = logits.shape()[0], k = logits.shape()[1];
  if (targets.size() != n) {
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) +
                     " targets for " + std::to_string(n) + " rows");
  }
  LossResult<T> r{T{0}, Tensor<T>(logits.shape())};
  const T inv_n = T{1} / static_cast<T>(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (targets[i] >= k) {
      throw Error("cross_entropy: target " + std::to_string(targets[i]) +
                  " outside [0, " + std::to_string(k) + ")");
    }
    const T* row = logits.raw() + i * k;
    T m = row[0];
    for (std::size_t j = 1; j < k; ++j) m = std::max(m, row[j]);
    T z{0};
    for (std::size_t j = 0; j < k; ++j) z += std::exp(row[j] - m);
    const T lse = m + std::log(z);
    r.loss += (lse - row[targets[i]]) * inv_n;
    T* g = r.grad.raw() + i * k;
    for (std::size_t j = 0; j < k; ++j) {
      const T p = std::exp(row[j] - lse);
      g[j] = (p - (j == targets[i] ? T{1} : T{0})) * inv_n;
    }
  }
  return r;
}

template <typename T>
LossResult<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  detail::require_same_shape(pred, target, "mse_loss");
  LossResult<T> r{T{0}, Tensor<T>(pred.shape())};
  const T inv = T{1} / static_cast<T>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const T d = pred[i] - target[i];
    r.loss += d * d;
    r.grad[i] = T{2} * d * inv;
  }
  r.loss *= inv;
  return r;
}

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
};

/// Bias-corrected Adam update; moments are allocated on the first call.
template <typename T>
void adam_step(std::span<Tensor<T>* const> params,
               std::span<const Tensor<T>* const> grads, AdamState<T>& state) {
  if (params.size() != grads.size()) {
    throw ShapeError("adam_step: " + std::to_string(params.size()) +
                     " parameters but " + std::to_string(grads.size()) + " gradients");
  }
  if (state.m.empty() && state.step == 0) {
    for (const auto* p : params) {
      state.m.emplace_back(p->shape());
      state.v.emplace_back(p->shape());
    }
  }
  if (state.m.size() != params.size()) {
    throw ShapeError("adam_step: optimizer state tracks " +
                     std::to_string(state.m.size()) + " tensors, got " +
                     std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->shape() != grads[i]->shape() ||
        params[i]->shape() != state.m[i].shape()) {
      throw ShapeError("adam_step: parameter " + std::to_string(i) + " shape " +
                       shape_str(params[i]->shape()) + " disagrees with gradient " +
                       shape_str(grads[i]->shape()) + " or state " +
                       shape_str(state.m[i].shape()));
    }
  }
  state.step += 1;
  const auto& c = state.config;
  const double t = static_cast<double>(state.step);
  const T b1 = static_cast<T>(c.beta1), b2 = static_cast<T>(c.beta2);
  const T one_b1 = static_cast<T>(1.0 - c.beta1), one_b2 = static_cast<T>(1.0 - c.beta2);
  const T corr1 = static_cast<T>(1.0 / (1.0 - std::pow(c.beta1, t)));
  const T corr2 = static_cast<T>(1.0 / (1.0 - std::pow(c.beta2, t)));
  const T lr = static_cast<T>(c.lr), eps = static_cast<T>(c.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    T* p = params[i]->raw();
    const T* g = grads[i]->raw();
    T* m = state.m[i].raw();
    T* v = state.v[i].raw();
    for (std::size_t j = 0; j < params[i]->size(); ++j) {
      m[j] = b1 * m[j] + one_b1 * g[j];
      v[j] = b2 * v[j] + one_b2 * g[j] * g[j];
      const T m_hat = m[j] * corr1;
      const T v_hat = v[j] * corr2;
      p[j] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

template <typename T>
void adam_step(const std::vector<Parameter<T>*>& params, AdamState<T>& state) {
  std::vector<Tensor<T>*> values;
  std::vector<const Tensor<T>*> grads;
  for (auto* p : params) {
    values.push_back(&p->value);
    grads.push_back(&p->grad);
  }
  adam_step<T>(std::span<Tensor<T>* const>(values),
               std::span<const Tensor<T>* const>(grads), state);
}

/// Basic residual block:
/// out = relu(bn2(conv2(relu(bn1(conv1(x))))) + shortcut(x)).
/// The shortcut is the identity, or a 1x1 strided conv + batchnorm projection.
template <typename T>
class ResidualBlock {
 public:
  ResidualBlock() = default;
  ResidualBlock(const std::string& name, std::size_t in_channels,
                std::size_t out_channels, std::size_t stride, bool projection,
                Rng& rng)
      : conv1(name + ".conv1", in_channels, out_channels, 3,
              ConvGeometry::square(stride, 1), false, rng),
        bn1(name + ".bn1", out_channels),
        conv2(name + ".conv2", out_channels, out_channels, 3,
              ConvGeometry::square(1, 1), false, rng),
        bn2(name + ".bn2", out_channels) {
    if (!projection && (in_channels != out_channels || stride != 1)) {
      throw ShapeError("residual block " + name + ": " +
                       std::to_string(in_channels) + "->" +
                       std::to_string(out_channels) + " stride " +
                       std::to_string(stride) +
                       " needs a projection shortcut");
    }
    if (projection) {
      proj_conv.emplace(name + ".proj", in_channels, out_channels, 1,
                        ConvGeometry::square(stride, 0), false, rng);
      proj_bn.emplace(name + ".proj_bn", out_channels);
    }
  }

  bool has_projection() const { return proj_conv.has_value(); }

  Tensor<T> forward(const Tensor<T>& x) const {
    check_input(x);
    Tensor<T> h = relu(bn1.forward(conv1.forward(x)));
    Tensor<T> out = bn2.forward(conv2.forward(h));
    add_inplace(out, proj_conv ? proj_bn->forward(proj_conv->forward(x)) : x);
    return relu(out);
  }

  Tensor<T> forward_train(const Tensor<T>& x) {
    check_input(x);
    pre1_ = bn1.forward_train(conv1.forward_train(x));
    Tensor<T> out = bn2.forward_train(conv2.forward_train(relu(pre1_)));
    add_inplace(out, proj_conv ? proj_bn->forward_train(proj_conv->forward_train(x)) : x);
    pre_out_ = out;
    return relu(out);
  }

  Tensor<T> backward(const Tensor<T>& grad_out) {
    Tensor<T> g = relu_backward(pre_out_, grad_out);
    Tensor<T> gb = conv2.backward(bn2.backward(g));
    Tensor<T> gx = conv1.backward(bn1.backward(relu_backward(pre1_, gb)));
    if (proj_conv) {
      add_inplace(gx, proj_conv->backward(proj_bn->backward(g)));
    } else {
      add_inplace(gx, g);
    }
    return gx;
  }

  void set_mode(Mode m) {
    bn1.mode = m;
    bn2.mode = m;
    if (proj_bn) proj_bn->mode = m;
  }

  void parameters(std::vector<Parameter<T>*>& out) {
    conv1.parameters(out);
    bn1.parameters(out);
    conv2.parameters(out);
    bn2.parameters(out);
    if (proj_conv) {
      proj_conv->parameters(out);
      proj_bn->parameters(out);
    }
  }

  void buffers(std::vector<Buffer<T>>& out) {
    bn1.buffers(out);
    bn2.buffers(out);
    if (proj_bn) proj_bn->buffers(out);
  }

  Conv2dLayer<T> conv1;
  BatchNorm2d<T> bn1;
  Conv2dLayer<T> conv2;
  BatchNorm2d<T> bn2;
  std::optional<Conv2dLayer<T>> proj_conv;
  std::optional<BatchNorm2d<T>> proj_bn;

 private:
  void check_input(const Tensor<T>& x) const {
    detail::require_rank(x, 4, "residual block input");
    if (x.shape()[1] != conv1.in_channels()) {
      throw ShapeError("residual block: input channel dimension " +
                       std::to_string(x.shape()[1]) + " does not match block input " +
                       std::to_string(conv1.in_channels()));
    }
  }

  Tensor<T> pre1_;
  Tensor<T> pre_out_;
};

}  // namespace dfml
