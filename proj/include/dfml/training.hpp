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
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "dfml/checkpoint.hpp"
#include "dfml/data.hpp"
#include "dfml/eval.hpp"
#include "dfml/models.hpp"
#include "dfml/nn.hpp"
#include "dfml/rng.hpp"

namespace dfml {

/// Preprocessed frames with their clinical labels and patient identities.
template <typename T>
struct LabeledImages {
  std::vector<Tensor<T>> images;  // each 3 x H x W
  std::vector<Label> labels;
  std::vector<std::string> patients;

  std::size_t size() const { return images.size(); }
};

/// Frames only. The autoencoder consumes this type, so it cannot see labels.
template <typename T>
struct Images {
  std::vector<Tensor<T>> images;

  std::size_t size() const { return images.size(); }
};

template <typename T>
Images<T> strip_labels(const LabeledImages<T>& set) {
  return Images<T>{set.images};
}

/// Loads every record of `cohort` from disk at height x width.
template <typename T = float>
LabeledImages<T> load_cohort(const Manifest& manifest, Cohort cohort,
                             const std::filesystem::path& root, std::size_t height,
                             std::size_t width) {
  LabeledImages<T> out;
  for (const auto& r : manifest.records) {
    if (r.cohort != cohort) continue;
    out.images.push_back(load_and_preprocess<T>(r, root, height, width));
    out.labels.push_back(r.label);
    out.patients.push_back(r.patient_id);
  }
  return out;
}

/// Stacks images[order[begin..end)] into an N x 3 x H x W batch.
template <typename T>
Tensor<T> stack_batch(const std::vector<Tensor<T>>& images,
                      std::span<const std::size_t> order) {
  if (order.empty()) throw Error("cannot stack an empty batch");
  const Shape& s = images[order[0]].shape();
  Shape bs{order.size()};
  bs.insert(bs.end(), s.begin(), s.end());
  Tensor<T> batch(bs);
  const std::size_t per = images[order[0]].size();
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& img = images[order[i]];
    if (img.shape() != s) {
      throw ShapeError("batch mixes image shapes " + shape_str(s) + " and " +
                       shape_str(img.shape()));
    }
    std::copy(img.raw(), img.raw() + per, batch.raw() + i * per);
  }
  return batch;
}

namespace detail {

// Batch boundaries over n samples. A trailing batch of a single sample is
// merged into its predecessor because batch statistics need two values.
inline std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n,
                                                                     std::size_t batch) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t b = 0; b < n; b += batch) out.emplace_back(b, std::min(n, b + batch));
  if (out.size() > 1 && out.back().second - out.back().first == 1) {
    out[out.size() - 2].second = out.back().second;
    out.pop_back();
  }
  return out;
}

inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed,
                                            std::string_view stage, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(derive_seed(seed, stage), epoch));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

template <typename T>
void adam_update(const std::vector<Parameter<T>*>& params, AdamState<T>& state) {
  std::vector<Tensor<T>*> values;
  std::vector<const Tensor<T>*> grads;
  for (auto* p : params) {
    values.push_back(&p->value);
    grads.push_back(&p->grad);
  }
  adam_step<T>(std::span<Tensor<T>* const>(values), std::span<const Tensor<T>* const>(grads),
               state);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Classifier
// ---------------------------------------------------------------------------

struct ClassifierTrainConfig {
  ClassifierConfig model;
  std::size_t epochs = 5;
  std::size_t batch_size = 4;
  AdamConfig adam;
  std::size_t eval_batch_size = 32;
};

struct ClassifierEpoch {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  double val_auroc = 0.0;  // NaN when the validation set holds one class
};

template <typename T>
struct ClassifierTrainResult {
  ClassifierModel<T> model;
  Checkpoint checkpoint;
  std::vector<ClassifierEpoch> metrics;
};

/// Throws if any patient contributes frames to both sets.
inline void require_patient_disjoint(std::span<const std::string> a,
                                     std::span<const std::string> b) {
  const std::set<std::string> left(a.begin(), a.end());
  for (const auto& p : b) {
    if (left.count(p)) {
      throw Error("patient '" + p + "' appears in both the training and validation sets");
    }
  }
}

/// Softmax probability of the septic class for every frame, in eval mode.
template <typename T>
std::vector<double> septic_scores(const ClassifierModel<T>& model,
                                  const std::vector<Tensor<T>>& images,
                                  std::size_t batch_size = 32) {
  std::vector<double> scores;
  std::vector<std::size_t> idx(images.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t b = 0; b < images.size(); b += batch_size) {
    const std::size_t e = std::min(images.size(), b + batch_size);
    const auto out = model.forward(stack_batch(images, std::span(idx).subspan(b, e - b)));
    for (std::size_t i = 0; i < e - b; ++i) {
      const double l0 = out.logits[i * 2], l1 = out.logits[i * 2 + 1];
      scores.push_back(1.0 / (1.0 + std::exp(l0 - l1)));
    }
  }
  return scores;
}

/// 128-d codes of every frame as an N x 128 matrix, in eval mode.
template <typename T>
Tensor<double> classifier_codes(const ClassifierModel<T>& model,
                                const std::vector<Tensor<T>>& images,
                                std::size_t batch_size = 32) {
  if (images.empty()) throw Error("no images to encode");
  const std::size_t w = ClassifierConfig::kCodeWidth;
  Tensor<double> codes({images.size(), w});
  std::vector<std::size_t> idx(images.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t b = 0; b < images.size(); b += batch_size) {
    const std::size_t e = std::min(images.size(), b + batch_size);
    const auto out = model.forward(stack_batch(images, std::span(idx).subspan(b, e - b)));
    for (std::size_t i = 0; i < (e - b) * w; ++i) codes[b * w + i] = out.codes[i];
  }
  return codes;
}

namespace detail {

template <typename T>
void evaluate_classifier(const ClassifierModel<T>& model, const LabeledImages<T>& val,
                         std::size_t batch_size, ClassifierEpoch& row) {
  const auto scores = septic_scores(model, val.images, batch_size);
  double loss = 0.0;
  std::vector<Label> predicted(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double p = val.labels[i] == Label::septic ? scores[i] : 1.0 - scores[i];
    loss -= std::log(std::max(p, std::numeric_limits<double>::min()));
    predicted[i] = predict_label(scores[i]);
  }
  row.val_loss = loss / static_cast<double>(scores.size());
  row.val_accuracy = accuracy(predicted, val.labels);
  const bool both = std::count(val.labels.begin(), val.labels.end(), Label::septic) > 0 &&
                    std::count(val.labels.begin(), val.labels.end(), Label::non_septic) > 0;
  row.val_auroc = both ? auroc(scores, val.labels) : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace detail

/// Trains the classifier with cross-entropy and Adam. The visiting order of
/// every epoch is a pure function of (seed, epoch).
template <typename T = float>
ClassifierTrainResult<T> train_classifier(const LabeledImages<T>& train,
                                          const LabeledImages<T>& val,
                                          const ClassifierTrainConfig& config,
                                          std::uint64_t seed) {
  require_patient_disjoint(train.patients, val.patients);
  if (train.labels.size() != train.size() || val.labels.size() != val.size()) {
    throw Error("every image needs exactly one label");
  }
  if (config.batch_size == 0) throw Error("batch size must be positive");
  if (config.epochs > 0 && (train.size() < 2 || val.size() == 0)) {
    throw Error("training needs at least two training frames and one validation frame");
  }
  ClassifierTrainResult<T> result{ClassifierModel<T>(config.model, seed), {}, {}};
  auto& model = result.model;
  AdamState<T> adam{config.adam, 0, {}, {}};
  const auto params = model.parameters();
  double last_loss = 0.0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    model.set_mode(Mode::train);
    const auto order = detail::epoch_order(train.size(), seed, "classifier.shuffle", epoch);
    double total = 0.0;
    for (const auto& [b, e] : detail::batch_ranges(order.size(), config.batch_size)) {
      const auto idx = std::span(order).subspan(b, e - b);
      std::vector<std::size_t> targets;
      for (auto i : idx) targets.push_back(class_index(train.labels[i]));
      model.zero_grad();
      const auto out = model.forward_train(stack_batch(train.images, idx));
      const auto ce = cross_entropy(out.logits, std::span<const std::size_t>(targets));
      model.backward(ce.grad);
      detail::adam_update(params, adam);
      total += static_cast<double>(ce.loss) * static_cast<double>(idx.size());
    }
    model.set_mode(Mode::eval);
    ClassifierEpoch row;
    row.epoch = epoch;
    row.train_loss = total / static_cast<double>(train.size());
    detail::evaluate_classifier(model, val, config.eval_batch_size, row);
    if (!std::isfinite(row.train_loss)) {
      throw Error("classifier training diverged at epoch " + std::to_string(epoch));
    }
    last_loss = row.train_loss;
    result.metrics.push_back(row);
  }
  model.set_mode(Mode::eval);
  result.checkpoint = to_checkpoint(model, TrainingMeta{seed, config.epochs, last_loss});
  return result;
}

// ---------------------------------------------------------------------------
// Autoencoder
// ---------------------------------------------------------------------------

struct AutoencoderTrainConfig {
  AutoencoderConfig model;
  std::size_t epochs = 20;
  std::size_t batch_size = 8;
  AdamConfig adam;
  std::size_t eval_batch_size = 32;
};

struct AutoencoderEpoch {
  std::size_t epoch = 0;
  double train_mse = 0.0;
  double heldout_mse = 0.0;  // NaN without a monitor set
};

template <typename T>
struct AutoencoderTrainResult {
  AutoencoderModel<T> model;
  Checkpoint checkpoint;
  std::vector<AutoencoderEpoch> metrics;
};

/// Mean squared reconstruction error over a set of frames, in eval mode.
template <typename T>
double reconstruction_mse(const AutoencoderModel<T>& model, const std::vector<Tensor<T>>& images,
                          std::size_t batch_size = 32) {
  if (images.empty()) throw Error("no images to reconstruct");
  std::vector<std::size_t> idx(images.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t b = 0; b < images.size(); b += batch_size) {
    const std::size_t e = std::min(images.size(), b + batch_size);
    const auto x = stack_batch(images, std::span(idx).subspan(b, e - b));
    const auto out = model.forward(x);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double d = static_cast<double>(out.reconstruction[i]) - static_cast<double>(x[i]);
      sum += d * d;
    }
    count += x.size();
  }
  return sum / static_cast<double>(count);
}

/// Flattened bottleneck vectors as an N x B matrix, in eval mode.
template <typename T>
Tensor<double> autoencoder_bottlenecks(const AutoencoderModel<T>& model,
                                       const std::vector<Tensor<T>>& images,
                                       std::size_t batch_size = 32) {
  if (images.empty()) throw Error("no images to encode");
  std::vector<std::size_t> idx(images.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Tensor<double> out;
  std::size_t width = 0;
  for (std::size_t b = 0; b < images.size(); b += batch_size) {
    const std::size_t e = std::min(images.size(), b + batch_size);
    const auto z = model.encode(stack_batch(images, std::span(idx).subspan(b, e - b)));
    if (b == 0) {
      width = z.size() / (e - b);
      out = Tensor<double>({images.size(), width});
    }
    for (std::size_t i = 0; i < z.size(); ++i) out[b * width + i] = z[i];
  }
  return out;
}

/// Trains the autoencoder on unlabeled frames with MSE and Adam. `monitor`
/// is a held-out set whose reconstruction error is recorded every epoch.
template <typename T = float>
AutoencoderTrainResult<T> train_autoencoder(const Images<T>& train, const Images<T>& monitor,
                                            const AutoencoderTrainConfig& config,
                                            std::uint64_t seed) {
  if (train.size() == 0) throw Error("autoencoder training set is empty");
  if (config.batch_size == 0) throw Error("batch size must be positive");
  if (config.epochs > 0 && train.size() < 2) {
    throw Error("autoencoder training needs at least two frames");
  }
  AutoencoderTrainResult<T> result{AutoencoderModel<T>(config.model, seed), {}, {}};
  auto& model = result.model;
  AdamState<T> adam{config.adam, 0, {}, {}};
  const auto params = model.parameters();
  double last = 0.0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    model.set_mode(Mode::train);
    const auto order = detail::epoch_order(train.size(), seed, "autoencoder.shuffle", epoch);
    double total = 0.0;
    for (const auto& [b, e] : detail::batch_ranges(order.size(), config.batch_size)) {
      const auto idx = std::span(order).subspan(b, e - b);
      const auto x = stack_batch(train.images, idx);
      model.zero_grad();
      const auto out = model.forward_train(x);
      const auto loss = mse_loss(out.reconstruction, x);
      model.backward(loss.grad);
      detail::adam_update(params, adam);
      total += static_cast<double>(loss.loss) * static_cast<double>(idx.size());
    }
    model.set_mode(Mode::eval);
    AutoencoderEpoch row;
    row.epoch = epoch;
    row.train_mse = total / static_cast<double>(train.size());
    row.heldout_mse = monitor.size() > 0
                          ? reconstruction_mse(model, monitor.images, config.eval_batch_size)
                          : std::numeric_limits<double>::quiet_NaN();
    if (!std::isfinite(row.train_mse)) {
      throw Error("autoencoder training diverged at epoch " + std::to_string(epoch));
    }
    last = row.train_mse;
    result.metrics.push_back(row);
  }
  model.set_mode(Mode::eval);
  result.checkpoint = to_checkpoint(model, TrainingMeta{seed, config.epochs, last});
  return result;
}

}  // namespace dfml
