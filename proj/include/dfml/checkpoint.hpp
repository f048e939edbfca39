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

#include <bit>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dfml/io.hpp"
#include "dfml/models.hpp"
#include "dfml/tensor.hpp"

// Checkpoint layout (all integers little-endian):
//
//   "DFML"                    4-byte magic
//   u32 version
//   u32 descriptor length     followed by that many bytes of key=value lines
//   repeated, once per tensor (count given by the `tensors` descriptor key):
//     u32 name length, name bytes
//     u32 rank, rank x u32 extents
//     product(extents) x f32 payload, row-major

namespace dfml {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[4] = {'D', 'F', 'M', 'L'};

enum class CheckpointErrorKind {
  io,
  bad_magic,
  version_mismatch,
  truncated,
  bad_shape,
  size_mismatch,
  bad_descriptor,
  model_mismatch,
};

class CheckpointError : public Error {
 public:
  CheckpointError(CheckpointErrorKind kind, const std::string& what)
      : Error("checkpoint: " + what), kind_(kind) {}
  CheckpointErrorKind kind() const noexcept { return kind_; }

 private:
  CheckpointErrorKind kind_;
};

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<float> values;

  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::vector<std::pair<std::string, std::string>> descriptor;
  std::vector<NamedTensor> tensors;

  const std::string* find(const std::string& key) const {
    for (const auto& [k, v] : descriptor)
      if (k == key) return &v;
    return nullptr;
  }

  const std::string& get(const std::string& key) const {
    if (const auto* v = find(key)) return *v;
    throw CheckpointError(CheckpointErrorKind::bad_descriptor,
                          "descriptor has no key '" + key + "'");
  }

  void set(const std::string& key, std::string value) {
    for (auto& [k, v] : descriptor) {
      if (k == key) {
        v = std::move(value);
        return;
      }
    }
    descriptor.emplace_back(key, std::move(value));
  }

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw CheckpointError(CheckpointErrorKind::truncated,
                            std::string("file ends inside ") + what);
    }
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  std::uint32_t u32(const char* what) {
    auto s = take(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(s[i]) << (8 * i);
    return v;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Encodes a checkpoint. The `tensors` descriptor key is kept equal to the
/// record count.
inline std::vector<std::uint8_t> serialize(const Checkpoint& ckpt) {
  Checkpoint c = ckpt;
  c.set("tensors", std::to_string(c.tensors.size()));
  std::string desc;
  for (const auto& [k, v] : c.descriptor) {
    if (k.empty() || k.find_first_of("=\n#") != std::string::npos ||
        v.find_first_of("\n#") != std::string::npos || trim(k) != k || trim(v) != v) {
      throw CheckpointError(CheckpointErrorKind::bad_descriptor,
                            "descriptor entry '" + k + "' is not a single key=value line");
    }
    desc += k + "=" + v + "\n";
  }
  std::vector<std::uint8_t> out(kCheckpointMagic, kCheckpointMagic + 4);
  detail::put_u32(out, c.version);
  detail::put_u32(out, static_cast<std::uint32_t>(desc.size()));
  out.insert(out.end(), desc.begin(), desc.end());
  for (const auto& t : c.tensors) {
    if (t.values.size() != numel(t.shape) || t.shape.empty()) {
      throw CheckpointError(CheckpointErrorKind::size_mismatch,
                            "tensor '" + t.name + "' payload does not match its shape");
    }
    detail::put_u32(out, static_cast<std::uint32_t>(t.name.size()));
    out.insert(out.end(), t.name.begin(), t.name.end());
    detail::put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
    for (auto e : t.shape) detail::put_u32(out, static_cast<std::uint32_t>(e));
    for (float f : t.values) detail::put_u32(out, std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

inline Checkpoint deserialize(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  auto magic = r.take(4, "magic");
  if (!std::equal(magic.begin(), magic.end(), kCheckpointMagic)) {
    throw CheckpointError(CheckpointErrorKind::bad_magic, "missing DFML magic");
  }
  Checkpoint c;
  c.version = r.u32("version");
  if (c.version != kCheckpointVersion) {
    throw CheckpointError(CheckpointErrorKind::version_mismatch,
                          "version " + std::to_string(c.version) + ", expected " +
                              std::to_string(kCheckpointVersion));
  }
  const std::uint32_t desc_len = r.u32("descriptor length");
  auto desc = r.take(desc_len, "descriptor");
  try {
    for (auto& kv : parse_key_values(std::string(desc.begin(), desc.end()), "descriptor"))
      c.descriptor.emplace_back(std::move(kv.key), std::move(kv.value));
  } catch (const CheckpointError&) {
    throw;
  } catch (const Error& e) {
    throw CheckpointError(CheckpointErrorKind::bad_descriptor, e.what());
  }
  std::uint64_t count = 0;
  try {
    count = parse_uint(c.get("tensors"), "tensor count");
  } catch (const CheckpointError&) {
    throw;
  } catch (const Error& e) {
    throw CheckpointError(CheckpointErrorKind::bad_descriptor, e.what());
  }
  for (std::uint64_t i = 0; i < count; ++i) {
    NamedTensor t;
    const std::uint32_t name_len = r.u32("tensor name length");
    auto name = r.take(name_len, "tensor name");
    t.name.assign(name.begin(), name.end());
    const std::uint32_t rank = r.u32("tensor rank");
    if (rank == 0 || rank > 8) {
      throw CheckpointError(CheckpointErrorKind::bad_shape,
                            "tensor '" + t.name + "' has rank " + std::to_string(rank));
    }
    std::uint64_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const std::uint32_t e = r.u32("tensor extents");
      if (e == 0) {
        throw CheckpointError(CheckpointErrorKind::bad_shape,
                              "tensor '" + t.name + "' has a zero extent");
      }
      t.shape.push_back(e);
      n *= e;
      if (n > (std::uint64_t{1} << 34)) {
        throw CheckpointError(CheckpointErrorKind::bad_shape,
                              "tensor '" + t.name + "' is implausibly large");
      }
    }
    if (r.remaining() < n * 4) {
      throw CheckpointError(CheckpointErrorKind::truncated,
                            "file ends inside payload of '" + t.name + "'");
    }
    t.values.resize(n);
    for (auto& f : t.values) f = std::bit_cast<float>(r.u32("payload"));
    c.tensors.push_back(std::move(t));
  }
  if (r.remaining() != 0) {
    throw CheckpointError(CheckpointErrorKind::size_mismatch,
                          std::to_string(r.remaining()) +
                              " bytes follow the last tensor record");
  }
  return c;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = serialize(ckpt);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError(CheckpointErrorKind::io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError(CheckpointErrorKind::io, "short write to " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointErrorKind::io, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), {});
  return deserialize(bytes);
}

struct TrainingMeta {
  std::uint64_t seed = 0;
  std::size_t epoch = 0;
  double final_loss = 0.0;
};

namespace detail {

template <typename T>
std::vector<NamedTensor> export_state(const StateList<T>& state) {
  std::vector<NamedTensor> out;
  for (const auto& [name, t] : state) {
    NamedTensor nt{name, t->shape(), {}};
    nt.values.reserve(t->size());
    for (T v : t->data()) nt.values.push_back(static_cast<float>(v));
    out.push_back(std::move(nt));
  }
  return out;
}

template <typename T>
void import_state(const StateList<T>& state, const Checkpoint& ckpt) {
  std::map<std::string, const NamedTensor*> by_name;
  for (const auto& t : ckpt.tensors) by_name[t.name] = &t;
  if (by_name.size() != state.size()) {
    throw CheckpointError(CheckpointErrorKind::model_mismatch,
                          "checkpoint holds " + std::to_string(ckpt.tensors.size()) +
                              " tensors, model expects " + std::to_string(state.size()));
  }
  for (const auto& [name, t] : state) {
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      throw CheckpointError(CheckpointErrorKind::model_mismatch,
                            "checkpoint lacks tensor '" + name + "'");
    }
    if (it->second->shape != t->shape()) {
      throw CheckpointError(CheckpointErrorKind::size_mismatch,
                            "tensor '" + name + "' has shape " +
                                shape_str(it->second->shape) + ", model expects " +
                                shape_str(t->shape()));
    }
    for (std::size_t i = 0; i < t->size(); ++i)
      (*t)[i] = static_cast<T>(it->second->values[i]);
  }
}

inline void put_meta(Checkpoint& c, const TrainingMeta& meta) {
  c.set("seed", std::to_string(meta.seed));
  c.set("epoch", std::to_string(meta.epoch));
  c.set("final_loss", format_number(meta.final_loss));
}

inline std::size_t desc_size(const Checkpoint& c, const std::string& key) {
  try {
    return static_cast<std::size_t>(parse_uint(c.get(key), key));
  } catch (const CheckpointError&) {
    throw;
  } catch (const Error& e) {
    throw CheckpointError(CheckpointErrorKind::bad_descriptor, e.what());
  }
}

inline void expect_arch(const Checkpoint& c, const std::string& arch) {
  if (c.get("arch") != arch) {
    throw CheckpointError(CheckpointErrorKind::model_mismatch,
                          "checkpoint holds a '" + c.get("arch") + "', expected '" +
                              arch + "'");
  }
}

}  // namespace detail

inline TrainingMeta read_meta(const Checkpoint& c) {
  TrainingMeta m;
  m.seed = detail::desc_size(c, "seed");
  m.epoch = detail::desc_size(c, "epoch");
  m.final_loss = parse_double(c.get("final_loss"), "final_loss");
  return m;
}

template <typename T>
Checkpoint to_checkpoint(ClassifierModel<T>& model, const TrainingMeta& meta) {
  Checkpoint c;
  const auto& cfg = model.config();
  c.set("arch", "classifier");
  c.set("input_height", std::to_string(cfg.input_height));
  c.set("input_width", std::to_string(cfg.input_width));
  c.set("stem_channels", std::to_string(cfg.stem_channels));
  c.set("code_channels", std::to_string(cfg.code_channels));
  c.set("classes", std::to_string(cfg.classes));
  detail::put_meta(c, meta);
  c.tensors = detail::export_state(model.state());
  c.set("tensors", std::to_string(c.tensors.size()));
  return c;
}

template <typename T>
Checkpoint to_checkpoint(AutoencoderModel<T>& model, const TrainingMeta& meta) {
  Checkpoint c;
  const auto& cfg = model.config();
  c.set("arch", "autoencoder");
  c.set("input_height", std::to_string(cfg.input_height));
  c.set("input_width", std::to_string(cfg.input_width));
  c.set("channels", std::to_string(cfg.channels[0]) + "," +
                        std::to_string(cfg.channels[1]) + "," +
                        std::to_string(cfg.channels[2]));
  detail::put_meta(c, meta);
  c.tensors = detail::export_state(model.state());
  c.set("tensors", std::to_string(c.tensors.size()));
  return c;
}

inline ClassifierConfig classifier_config_from(const Checkpoint& c) {
  detail::expect_arch(c, "classifier");
  ClassifierConfig cfg;
  cfg.input_height = detail::desc_size(c, "input_height");
  cfg.input_width = detail::desc_size(c, "input_width");
  cfg.stem_channels = detail::desc_size(c, "stem_channels");
  cfg.code_channels = detail::desc_size(c, "code_channels");
  cfg.classes = detail::desc_size(c, "classes");
  return cfg;
}

inline AutoencoderConfig autoencoder_config_from(const Checkpoint& c) {
  detail::expect_arch(c, "autoencoder");
  AutoencoderConfig cfg;
  cfg.input_height = detail::desc_size(c, "input_height");
  cfg.input_width = detail::desc_size(c, "input_width");
  const auto parts = split(c.get("channels"), ',');
  if (parts.size() != 3) {
    throw CheckpointError(CheckpointErrorKind::bad_descriptor,
                          "autoencoder channels must list three widths");
  }
  for (std::size_t i = 0; i < 3; ++i) {
    try {
      cfg.channels[i] = parse_uint(parts[i], "channels");
    } catch (const Error& e) {
      throw CheckpointError(CheckpointErrorKind::bad_descriptor, e.what());
    }
  }
  return cfg;
}

template <typename T>
ClassifierModel<T> load_classifier(const Checkpoint& c) {
  ClassifierModel<T> model(classifier_config_from(c));
  detail::import_state(model.state(), c);
  return model;
}

template <typename T>
AutoencoderModel<T> load_autoencoder(const Checkpoint& c) {
  AutoencoderModel<T> model(autoencoder_config_from(c));
  detail::import_state(model.state(), c);
  return model;
}

}  // namespace dfml
