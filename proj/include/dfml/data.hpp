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
#include <cstdio>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "dfml/image.hpp"
#include "dfml/io.hpp"
#include "dfml/labels.hpp"
#include "dfml/rng.hpp"
#include "dfml/tensor.hpp"

namespace dfml {

enum class Cohort : std::uint8_t { unassigned, train, val };

inline std::string to_string(Cohort c) {
  switch (c) {
    case Cohort::train: return "train";
    case Cohort::val: return "val";
    default: return "unassigned";
  }
}

inline Cohort parse_cohort(std::string_view s) {
  if (s == "train") return Cohort::train;
  if (s == "val") return Cohort::val;
  if (s == "unassigned") return Cohort::unassigned;
  throw Error("unknown cohort '" + std::string(s) + "'");
}

struct FrameRecord {
  std::string path;  // relative to the data root
  std::string patient_id;
  Label label = Label::non_septic;
  Cohort cohort = Cohort::unassigned;

  friend bool operator==(const FrameRecord&, const FrameRecord&) = default;
};

/// Frame catalog. Counts are derived from the records on demand, so they can
/// never drift from them.
struct Manifest {
  std::vector<FrameRecord> records;

  std::size_t size() const { return records.size(); }

  std::size_t count(Label label) const {
    return static_cast<std::size_t>(std::count_if(
        records.begin(), records.end(), [&](const auto& r) { return r.label == label; }));
  }

  std::size_t count(Label label, Cohort cohort) const {
    return static_cast<std::size_t>(
        std::count_if(records.begin(), records.end(), [&](const auto& r) {
          return r.label == label && r.cohort == cohort;
        }));
  }

  std::map<std::string, std::size_t> patient_counts() const {
    std::map<std::string, std::size_t> out;
    for (const auto& r : records) ++out[r.patient_id];
    return out;
  }

  std::set<std::string> patients(Cohort cohort) const {
    std::set<std::string> out;
    for (const auto& r : records)
      if (r.cohort == cohort) out.insert(r.patient_id);
    return out;
  }

  Manifest select(Cohort cohort) const {
    Manifest m;
    for (const auto& r : records)
      if (r.cohort == cohort) m.records.push_back(r);
    return m;
  }

  friend bool operator==(const Manifest&, const Manifest&) = default;
};

inline constexpr std::string_view kManifestHeader = "path,patient_id,label,cohort";

inline std::string format_manifest_csv(const Manifest& m) {
  std::string out(kManifestHeader);
  out += '\n';
  for (const auto& r : m.records) {
    for (const auto* field : {&r.path, &r.patient_id}) {
      if (field->find_first_of(",\n\"") != std::string::npos) {
        throw Error("manifest field '" + *field + "' contains a comma, quote or newline");
      }
    }
    out += r.path + ',' + r.patient_id + ',' + to_string(r.label) + ',' +
           to_string(r.cohort) + '\n';
  }
  return out;
}

inline Manifest parse_manifest_csv(std::string_view text, const std::string& source) {
  Manifest m;
  std::size_t line_no = 0;
  bool header_seen = false;
  for (const auto& raw : split(text, '\n')) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty()) continue;
    const auto where = source + ":" + std::to_string(line_no) + ": ";
    if (!header_seen) {
      if (line != kManifestHeader) {
        throw Error(where + "expected header '" + std::string(kManifestHeader) + "'");
      }
      header_seen = true;
      continue;
    }
    const auto f = split(line, ',');
    if (f.size() != 4) {
      throw Error(where + "expected 4 fields, got " + std::to_string(f.size()));
    }
    FrameRecord r;
    r.path = f[0];
    r.patient_id = f[1];
    if (r.path.empty()) throw Error(where + "empty path");
    if (r.patient_id.empty()) throw Error(where + "empty patient_id");
    try {
      r.label = parse_label(f[2]);
      r.cohort = parse_cohort(f[3]);
    } catch (const Error& e) {
      throw Error(where + e.what());
    }
    m.records.push_back(std::move(r));
  }
  if (!header_seen) throw Error(source + ": missing manifest header");
  return m;
}

inline Manifest read_manifest(const std::filesystem::path& path) {
  return parse_manifest_csv(read_text_file(path), path.string());
}

inline void write_manifest(const std::filesystem::path& path, const Manifest& m) {
  write_text_file(path, format_manifest_csv(m));
}

// ---------------------------------------------------------------------------
// Patient-level split
// ---------------------------------------------------------------------------

class SplitInfeasible : public Error {
 public:
  using Error::Error;
};

struct SplitOptions {
  double val_fraction = 0.2;
  // When set, a split whose per-label validation fraction misses the target
  // by more than this is reported as infeasible instead of returned.
  std::optional<double> max_deviation;
};

namespace detail {

struct PatientLoad {
  std::string id;
  std::size_t frames;
};

// Chooses the validation patients of one label. Greedy fill in descending
// frame-count order, then single moves and pair swaps while they bring the
// validation count closer to the target. Both cohorts stay non-empty.
inline std::vector<bool> choose_validation(const std::vector<PatientLoad>& patients,
                                           double target) {
  const std::size_t n = patients.size();
  std::vector<bool> in_val(n, false);
  double val = 0;
  std::size_t val_count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double c = static_cast<double>(patients[i].frames);
    if (std::abs(val + c - target) < std::abs(val - target) && val_count + 1 < n) {
      in_val[i] = true;
      val += c;
      ++val_count;
    }
  }
  if (val_count == 0) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < n; ++i) {
      if (std::abs(static_cast<double>(patients[i].frames) - target) <
          std::abs(static_cast<double>(patients[best].frames) - target))
        best = i;
    }
    in_val[best] = true;
    val = static_cast<double>(patients[best].frames);
    val_count = 1;
  }

  while (true) {
    double best_gap = std::abs(val - target);
    int kind = 0;  // 1: move to val, 2: move to train, 3: swap
    std::size_t bi = 0, bj = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double c = static_cast<double>(patients[i].frames);
      if (!in_val[i] && val_count + 1 < n && std::abs(val + c - target) < best_gap) {
        best_gap = std::abs(val + c - target);
        kind = 1;
        bi = i;
      }
      if (in_val[i] && val_count > 1 && std::abs(val - c - target) < best_gap) {
        best_gap = std::abs(val - c - target);
        kind = 2;
        bi = i;
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (!in_val[i]) continue;
      for (std::size_t j = 0; j < n; ++j) {
        if (in_val[j]) continue;
        const double next = val - static_cast<double>(patients[i].frames) +
                            static_cast<double>(patients[j].frames);
        if (std::abs(next - target) < best_gap) {
          best_gap = std::abs(next - target);
          kind = 3;
          bi = i;
          bj = j;
        }
      }
    }
    if (kind == 0) break;
    if (kind == 1) {
      in_val[bi] = true;
      val += static_cast<double>(patients[bi].frames);
      ++val_count;
    } else if (kind == 2) {
      in_val[bi] = false;
      val -= static_cast<double>(patients[bi].frames);
      --val_count;
    } else {
      in_val[bi] = false;
      in_val[bj] = true;
      val += static_cast<double>(patients[bj].frames) -
             static_cast<double>(patients[bi].frames);
    }
  }
  return in_val;
}

}  // namespace detail

/// Assigns every patient wholly to train or validation, per label, so that
/// each label's validation share is as close to `val_fraction` as patient
/// granularity allows. Deterministic given `seed`, which only orders patients
/// with equal frame counts.
inline Manifest patient_split(const Manifest& manifest, const SplitOptions& options,
                              std::uint64_t seed) {
  const double vf = options.val_fraction;
  if (!(vf > 0.0 && vf < 1.0)) {
    throw Error("val_fraction must lie in (0, 1), got " + format_number(vf));
  }
  std::map<std::string, Label> patient_label;
  std::map<Label, std::map<std::string, std::size_t>> loads;
  for (const auto& r : manifest.records) {
    auto [it, fresh] = patient_label.emplace(r.patient_id, r.label);
    if (!fresh && it->second != r.label) {
      throw Error("patient " + r.patient_id + " has frames under both labels");
    }
    ++loads[r.label][r.patient_id];
  }
  if (loads.empty()) throw SplitInfeasible("cannot split an empty manifest");

  std::set<std::string> val_patients;
  Rng rng(derive_seed(seed, "patient_split"));
  for (auto& [label, counts] : loads) {
    if (counts.size() < 2) {
      throw SplitInfeasible("label " + to_string(label) + " has " +
                            std::to_string(counts.size()) +
                            " patient(s); at least two are needed to split");
    }
    std::vector<detail::PatientLoad> patients;
    std::size_t total = 0;
    for (const auto& [id, n] : counts) {
      patients.push_back({id, n});
      total += n;
    }
    for (const auto& p : patients) {
      if (static_cast<double>(p.frames) > (1.0 - vf) * static_cast<double>(total)) {
        throw SplitInfeasible("patient " + p.id + " holds " + std::to_string(p.frames) +
                              " of " + std::to_string(total) + " " + to_string(label) +
                              " frames, more than the training share allows");
      }
    }
    std::shuffle(patients.begin(), patients.end(), rng);
    std::stable_sort(patients.begin(), patients.end(),
                     [](const auto& a, const auto& b) { return a.frames > b.frames; });
    const double target = vf * static_cast<double>(total);
    const auto in_val = detail::choose_validation(patients, target);
    std::size_t val_frames = 0;
    for (std::size_t i = 0; i < patients.size(); ++i) {
      if (in_val[i]) {
        val_patients.insert(patients[i].id);
        val_frames += patients[i].frames;
      }
    }
    const double achieved = static_cast<double>(val_frames) / static_cast<double>(total);
    if (options.max_deviation && std::abs(achieved - vf) > *options.max_deviation) {
      throw SplitInfeasible("label " + to_string(label) + ": best validation share " +
                            format_number(achieved) + " misses target " +
                            format_number(vf) + " by more than " +
                            format_number(*options.max_deviation));
    }
  }

  Manifest out = manifest;
  for (auto& r : out.records)
    r.cohort = val_patients.count(r.patient_id) ? Cohort::val : Cohort::train;
  return out;
}

inline Manifest patient_split(const Manifest& manifest, double val_fraction,
                              std::uint64_t seed) {
  return patient_split(manifest, SplitOptions{val_fraction, std::nullopt}, seed);
}

// ---------------------------------------------------------------------------
// Synthetic capillary images
// ---------------------------------------------------------------------------

struct SynthParams {
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t vessels = 10;
  double thickness_min = 1.5;  // pixels
  double thickness_max = 3.0;
  double contrast = 0.4;  // fraction of the background absorbed inside a vessel
  double background_mean = 170.0;  // 8-bit scale
  double noise_sigma = 10.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (height == 0 || width == 0) throw Error("synthetic image size must be positive");
    if (thickness_min < 0 || thickness_max < thickness_min) {
      throw Error("vessel thickness range must satisfy 0 <= min <= max");
    }
    if (thickness_max > static_cast<double>(std::min(height, width))) {
      throw Error("vessel thickness " + format_number(thickness_max) +
                  " exceeds the image size");
    }
    if (!(contrast >= 0.0 && contrast <= 1.0)) {
      throw Error("vessel contrast must lie in [0, 1], got " + format_number(contrast));
    }
    if (background_mean < 0 || background_mean > 255 || noise_sigma < 0) {
      throw Error("background mean must lie in [0, 255] and noise sigma be non-negative");
    }
  }
};

struct SynthFrame {
  Image8 image;
  std::vector<std::uint8_t> mask;  // H x W, 1 inside a vessel

  double mask_fraction() const {
    return static_cast<double>(std::accumulate(mask.begin(), mask.end(), std::size_t{0})) /
           static_cast<double>(mask.size());
  }
};

/// Noisy tinted background with `vessels` dark quadratic Bezier curves.
/// Background and geometry draw from separate streams, so the background does
/// not depend on the vessel count.
inline SynthFrame generate_image(const SynthParams& p) {
  p.validate();
  const std::size_t h = p.height, w = p.width;
  static constexpr double kTint[3] = {0.85, 1.0, 0.8};

  Rng bg_rng(derive_seed(p.seed, "background"));
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<double> field(h * w * 3);
  for (std::size_t i = 0; i < h * w; ++i)
    for (std::size_t c = 0; c < 3; ++c)
      field[i * 3 + c] = p.background_mean * kTint[c] + p.noise_sigma * noise(bg_rng);

  SynthFrame f{Image8(w, h), std::vector<std::uint8_t>(h * w, 0)};
  Rng geo_rng(derive_seed(p.seed, "vessels"));
  std::uniform_real_distribution<double> ux(-0.1 * static_cast<double>(w),
                                            1.1 * static_cast<double>(w));
  std::uniform_real_distribution<double> uy(-0.1 * static_cast<double>(h),
                                            1.1 * static_cast<double>(h));
  std::uniform_real_distribution<double> uthick(p.thickness_min, p.thickness_max);
  for (std::size_t v = 0; v < p.vessels; ++v) {
    const double x0 = ux(geo_rng), y0 = uy(geo_rng);
    const double x1 = ux(geo_rng), y1 = uy(geo_rng);
    const double x2 = ux(geo_rng), y2 = uy(geo_rng);
    const double radius = 0.5 * uthick(geo_rng);
    const double length = std::hypot(x1 - x0, y1 - y0) + std::hypot(x2 - x1, y2 - y1);
    const auto samples = static_cast<std::size_t>(std::ceil(2.0 * length)) + 1;
    for (std::size_t s = 0; s <= samples; ++s) {
      const double t = static_cast<double>(s) / static_cast<double>(samples);
      const double a = (1 - t) * (1 - t), b = 2 * (1 - t) * t, c = t * t;
      const double cx = a * x0 + b * x1 + c * x2;
      const double cy = a * y0 + b * y1 + c * y2;
      const auto lo_x = static_cast<std::ptrdiff_t>(std::floor(cx - radius - 0.5));
      const auto hi_x = static_cast<std::ptrdiff_t>(std::ceil(cx + radius - 0.5));
      const auto lo_y = static_cast<std::ptrdiff_t>(std::floor(cy - radius - 0.5));
      const auto hi_y = static_cast<std::ptrdiff_t>(std::ceil(cy + radius - 0.5));
      for (auto y = std::max<std::ptrdiff_t>(lo_y, 0);
           y <= std::min<std::ptrdiff_t>(hi_y, static_cast<std::ptrdiff_t>(h) - 1); ++y) {
        for (auto x = std::max<std::ptrdiff_t>(lo_x, 0);
             x <= std::min<std::ptrdiff_t>(hi_x, static_cast<std::ptrdiff_t>(w) - 1); ++x) {
          const double dx = static_cast<double>(x) + 0.5 - cx;
          const double dy = static_cast<double>(y) + 0.5 - cy;
          if (dx * dx + dy * dy <= radius * radius)
            f.mask[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)] = 1;
        }
      }
    }
  }

  for (std::size_t i = 0; i < h * w; ++i) {
    const double keep = f.mask[i] ? 1.0 - p.contrast : 1.0;
    for (std::size_t c = 0; c < 3; ++c) {
      const double v = std::round(field[i * 3 + c] * keep);
      f.image.pixels[i * 3 + c] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
    }
  }
  return f;
}

/// Per-patient perturbation of the class parameters.
struct PatientJitter {
  double thickness = 0.4;  // +/- pixels applied to both ends of the range
  double contrast = 0.15;  // +/- relative change
};

struct SynthCorpus {
  Manifest manifest;
  std::vector<Image8> images;  // parallel to manifest.records
};

/// Class A frames are labelled non-septic, class B frames septic. Every
/// frame's randomness derives from (seed, class, patient, frame).
inline SynthCorpus generate_corpus(const SynthParams& class_a, const SynthParams& class_b,
                                   std::size_t frames_per_patient,
                                   std::size_t patients_per_class, std::uint64_t seed,
                                   const PatientJitter& jitter = {}) {
  if (frames_per_patient == 0 || patients_per_class == 0) {
    throw Error("synthetic corpus needs at least one patient and one frame per patient");
  }
  if (class_a.height != class_b.height || class_a.width != class_b.width) {
    throw Error("both synthetic classes must share one image size");
  }
  class_a.validate();
  class_b.validate();
  SynthCorpus corpus;
  const SynthParams* classes[2] = {&class_a, &class_b};
  const char* prefixes[2] = {"pa", "pb"};
  const Label labels[2] = {Label::non_septic, Label::septic};
  for (std::size_t k = 0; k < 2; ++k) {
    for (std::size_t patient = 0; patient < patients_per_class; ++patient) {
      Rng prng(derive_seed(seed, k, patient));
      std::uniform_real_distribution<double> u(-1.0, 1.0);
      SynthParams pp = *classes[k];
      const double dt = jitter.thickness * u(prng);
      pp.thickness_min = std::max(0.5, pp.thickness_min + dt);
      pp.thickness_max = std::max(pp.thickness_min, pp.thickness_max + dt);
      pp.thickness_max = std::min(pp.thickness_max,
                                  static_cast<double>(std::min(pp.height, pp.width)));
      pp.thickness_min = std::min(pp.thickness_min, pp.thickness_max);
      pp.contrast = std::clamp(pp.contrast * (1.0 + jitter.contrast * u(prng)), 0.0, 1.0);
      char id[32];
      std::snprintf(id, sizeof(id), "%s%03zu", prefixes[k], patient);
      for (std::size_t frame = 0; frame < frames_per_patient; ++frame) {
        pp.seed = derive_seed(seed, k, patient, frame);
        char path[96];
        std::snprintf(path, sizeof(path), "images/%s_f%03zu.png", id, frame);
        corpus.manifest.records.push_back({path, id, labels[k], Cohort::unassigned});
        corpus.images.push_back(generate_image(pp).image);
      }
    }
  }
  return corpus;
}

/// Writes every image under `root` and the manifest to `root/manifest.csv`.
inline void write_corpus(const SynthCorpus& corpus, const std::filesystem::path& root) {
  for (std::size_t i = 0; i < corpus.images.size(); ++i)
    write_png(root / corpus.manifest.records[i].path, corpus.images[i]);
  write_manifest(root / "manifest.csv", corpus.manifest);
}

inline Manifest generate_dataset(const SynthParams& class_a, const SynthParams& class_b,
                                 std::size_t frames_per_patient,
                                 std::size_t patients_per_class, std::uint64_t seed,
                                 const std::filesystem::path& root,
                                 const PatientJitter& jitter = {}) {
  auto corpus = generate_corpus(class_a, class_b, frames_per_patient, patients_per_class,
                                seed, jitter);
  write_corpus(corpus, root);
  return std::move(corpus.manifest);
}

/// Reads one manifest frame from disk and brings it to height x width.
template <typename T = float>
Tensor<T> load_and_preprocess(const FrameRecord& record, const std::filesystem::path& root,
                              std::size_t height, std::size_t width) {
  return crop_and_resize<T>(read_png(root / record.path), height, width);
}

}  // namespace dfml
