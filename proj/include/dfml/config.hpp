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
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dfml/data.hpp"
#include "dfml/embed.hpp"
#include "dfml/io.hpp"
#include "dfml/training.hpp"

namespace dfml {

enum class ValueKind { integer, real, text, real_or_none };

struct ConfigKey {
  std::string_view name;
  std::string_view default_value;
  ValueKind kind;
  std::string_view help;
};

// Paths may contain the placeholder {out}, replaced by the output directory.
inline constexpr ConfigKey kConfigKeys[] = {
    {"seed", "0", ValueKind::integer, "top-level seed; every stage derives its own"},
    {"out", "run", ValueKind::text, "output directory"},
    {"data_root", "{out}/data", ValueKind::text, "directory that manifest paths are relative to"},
    {"manifest", "{out}/data/manifest.csv", ValueKind::text, "unsplit manifest read by split"},
    {"split_manifest", "{out}/split.csv", ValueKind::text, "manifest with cohorts assigned"},
    {"classifier", "{out}/classifier.dfml", ValueKind::text, "classifier checkpoint"},
    {"autoencoder", "{out}/autoencoder.dfml", ValueKind::text, "autoencoder checkpoint"},
    {"codes", "{out}/codes.csv", ValueKind::text, "classifier codes of the validation frames"},

    {"synth.height", "64", ValueKind::integer, "synthetic frame height"},
    {"synth.width", "64", ValueKind::integer, "synthetic frame width"},
    {"synth.patients_per_class", "20", ValueKind::integer, "patients per class"},
    {"synth.frames_per_patient", "50", ValueKind::integer, "frames per patient"},
    {"synth.a.vessels", "14", ValueKind::integer, "vessels per frame, non-septic class"},
    {"synth.a.contrast", "0.5", ValueKind::real, "vessel contrast, non-septic class"},
    {"synth.b.vessels", "6", ValueKind::integer, "vessels per frame, septic class"},
    {"synth.b.contrast", "0.3", ValueKind::real, "vessel contrast, septic class"},
    {"synth.thickness_min", "1.5", ValueKind::real, "minimum vessel thickness in pixels"},
    {"synth.thickness_max", "3", ValueKind::real, "maximum vessel thickness in pixels"},
    {"synth.background_mean", "170", ValueKind::real, "background level, 8-bit scale"},
    {"synth.noise_sigma", "10", ValueKind::real, "background noise, 8-bit scale"},
    {"synth.jitter_thickness", "0.4", ValueKind::real, "per-patient thickness jitter"},
    {"synth.jitter_contrast", "0.15", ValueKind::real, "per-patient relative contrast jitter"},

    {"split.val_fraction", "0.2", ValueKind::real, "validation share of each label's frames"},
    {"split.max_deviation", "0.05", ValueKind::real_or_none,
     "largest tolerated miss of the validation share, or none"},

    {"cls.input_height", "64", ValueKind::integer, "classifier input height"},
    {"cls.input_width", "64", ValueKind::integer, "classifier input width"},
    {"cls.epochs", "5", ValueKind::integer, "classifier epochs"},
    {"cls.batch_size", "4", ValueKind::integer, "classifier batch size"},
    {"cls.lr", "0.001", ValueKind::real, "classifier Adam learning rate"},
    {"cls.beta1", "0.9", ValueKind::real, "classifier Adam beta1"},
    {"cls.beta2", "0.999", ValueKind::real, "classifier Adam beta2"},
    {"cls.eps", "1e-08", ValueKind::real, "classifier Adam epsilon"},

    {"ae.input_height", "48", ValueKind::integer, "autoencoder input height"},
    {"ae.input_width", "48", ValueKind::integer, "autoencoder input width"},
    {"ae.epochs", "20", ValueKind::integer, "autoencoder epochs"},
    {"ae.batch_size", "8", ValueKind::integer, "autoencoder batch size"},
    {"ae.lr", "0.001", ValueKind::real, "autoencoder Adam learning rate"},
    {"ae.beta1", "0.9", ValueKind::real, "autoencoder Adam beta1"},
    {"ae.beta2", "0.999", ValueKind::real, "autoencoder Adam beta2"},
    {"ae.eps", "1e-08", ValueKind::real, "autoencoder Adam epsilon"},

    {"eval.threshold", "0.5", ValueKind::real, "septic score threshold"},

    {"tsne.perplexity", "30", ValueKind::real, "t-SNE perplexity"},
    {"tsne.iterations", "1000", ValueKind::integer, "t-SNE iterations"},
    {"tsne.learning_rate", "200", ValueKind::real, "t-SNE learning rate"},
    {"tsne.exaggeration", "12", ValueKind::real, "early exaggeration factor"},
    {"tsne.exaggeration_iterations", "250", ValueKind::integer, "early exaggeration length"},
    {"tsne.momentum_switch", "250", ValueKind::integer, "iteration where momentum rises"},
    {"tsne.initial_momentum", "0.5", ValueKind::real, "momentum before the switch"},
    {"tsne.final_momentum", "0.8", ValueKind::real, "momentum after the switch"},

    {"kmeans.k", "2", ValueKind::integer, "number of clusters"},
    {"kmeans.restarts", "10", ValueKind::integer, "independent k-means++ restarts"},
    {"kmeans.max_iterations", "300", ValueKind::integer, "Lloyd iteration cap"},
};

inline const ConfigKey* find_config_key(std::string_view name) {
  for (const auto& k : kConfigKeys)
    if (k.name == name) return &k;
  return nullptr;
}

/// Every tunable of the pipeline as key=value text. Unknown keys and
/// malformed values are rejected; errors name where the value came from.
class RunConfig {
 public:
  RunConfig() {
    for (const auto& k : kConfigKeys)
      values_[std::string(k.name)] = {std::string(k.default_value), "default"};
  }

  /// `origin` is quoted in error messages, e.g. "run.cfg:12" or "--epochs".
  void set(std::string_view key, std::string_view value, const std::string& origin) {
    const ConfigKey* k = find_config_key(key);
    if (!k) throw Error(origin + ": unknown config key '" + std::string(key) + "'");
    const std::string v = trim(value);
    check_value(*k, v, origin);
    values_[std::string(key)] = {v, origin};
  }

  void merge_text(std::string_view text, const std::string& source) {
    for (const auto& kv : parse_key_values(text, source))
      set(kv.key, kv.value, source + ":" + std::to_string(kv.line));
  }

  void merge_file(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw Error("config file not found: " + path.string());
    merge_text(read_text_file(path), path.string());
  }

  const std::string& raw(std::string_view key) const {
    const auto it = values_.find(std::string(key));
    if (it == values_.end()) throw Error("unknown config key '" + std::string(key) + "'");
    return it->second.value;
  }

  std::uint64_t integer(std::string_view key) const {
    return parse_uint(raw(key), std::string(key));
  }
  std::size_t size(std::string_view key) const { return static_cast<std::size_t>(integer(key)); }
  double real(std::string_view key) const { return parse_double(raw(key), std::string(key)); }

  std::optional<double> real_or_none(std::string_view key) const {
    if (raw(key) == "none") return std::nullopt;
    return real(key);
  }

  std::filesystem::path path(std::string_view key) const {
    std::string v = raw(key);
    const std::string out = raw("out");
    for (auto pos = v.find("{out}"); pos != std::string::npos;
         pos = v.find("{out}", pos + out.size()))
      v.replace(pos, 5, out);
    return v;
  }

  std::uint64_t stage_seed(std::string_view stage) const {
    return derive_seed(integer("seed"), stage);
  }

  /// Every key with its resolved value, in table order.
  std::string resolved_text() const {
    std::string s;
    for (const auto& k : kConfigKeys) {
      s += k.name;
      s += '=';
      s += raw(k.name);
      s += '\n';
    }
    return s;
  }

 private:
  struct Entry {
    std::string value;
    std::string origin;
  };

  static void check_value(const ConfigKey& k, const std::string& v, const std::string& origin) {
    const std::string what = origin + ": " + std::string(k.name);
    switch (k.kind) {
      case ValueKind::integer:
        parse_uint(v, what);
        break;
      case ValueKind::real:
        if (!std::isfinite(parse_double(v, what))) throw Error(what + " must be finite");
        break;
      case ValueKind::real_or_none:
        if (v != "none") parse_double(v, what);
        break;
      case ValueKind::text:
        if (v.empty()) throw Error(what + " must not be empty");
        break;
    }
  }

  std::map<std::string, Entry> values_;
};

// ---------------------------------------------------------------------------
// Module settings derived from a RunConfig
// ---------------------------------------------------------------------------

inline std::pair<SynthParams, SynthParams> synth_params(const RunConfig& c) {
  SynthParams base;
  base.height = c.size("synth.height");
  base.width = c.size("synth.width");
  base.thickness_min = c.real("synth.thickness_min");
  base.thickness_max = c.real("synth.thickness_max");
  base.background_mean = c.real("synth.background_mean");
  base.noise_sigma = c.real("synth.noise_sigma");
  SynthParams a = base, b = base;
  a.vessels = c.size("synth.a.vessels");
  a.contrast = c.real("synth.a.contrast");
  b.vessels = c.size("synth.b.vessels");
  b.contrast = c.real("synth.b.contrast");
  return {a, b};
}

inline PatientJitter synth_jitter(const RunConfig& c) {
  return {c.real("synth.jitter_thickness"), c.real("synth.jitter_contrast")};
}

inline SplitOptions split_options(const RunConfig& c) {
  return {c.real("split.val_fraction"), c.real_or_none("split.max_deviation")};
}

inline ClassifierTrainConfig classifier_train_config(const RunConfig& c) {
  ClassifierTrainConfig t;
  t.model.input_height = c.size("cls.input_height");
  t.model.input_width = c.size("cls.input_width");
  t.epochs = c.size("cls.epochs");
  t.batch_size = c.size("cls.batch_size");
  t.adam = {c.real("cls.lr"), c.real("cls.beta1"), c.real("cls.beta2"), c.real("cls.eps")};
  return t;
}

inline AutoencoderTrainConfig autoencoder_train_config(const RunConfig& c) {
  AutoencoderTrainConfig t;
  t.model.input_height = c.size("ae.input_height");
  t.model.input_width = c.size("ae.input_width");
  t.epochs = c.size("ae.epochs");
  t.batch_size = c.size("ae.batch_size");
  t.adam = {c.real("ae.lr"), c.real("ae.beta1"), c.real("ae.beta2"), c.real("ae.eps")};
  return t;
}

inline TsneConfig tsne_config(const RunConfig& c) {
  TsneConfig t;
  t.perplexity = c.real("tsne.perplexity");
  t.iterations = c.size("tsne.iterations");
  t.learning_rate = c.real("tsne.learning_rate");
  t.exaggeration = c.real("tsne.exaggeration");
  t.exaggeration_iterations = c.size("tsne.exaggeration_iterations");
  t.momentum_switch = c.size("tsne.momentum_switch");
  t.initial_momentum = c.real("tsne.initial_momentum");
  t.final_momentum = c.real("tsne.final_momentum");
  t.seed = c.stage_seed("tsne");
  return t;
}

}  // namespace dfml
