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
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "dfml/data.hpp"
#include "dfml/labels.hpp"
#include "dfml/tensor.hpp"

namespace dfml {

/// Counts with septic as the positive class.
struct ConfusionMatrix {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
  double accuracy() const {
    return static_cast<double>(tp + tn) / static_cast<double>(total());
  }
  // 1.0 when nothing is predicted positive.
  double precision() const {
    return tp + fp == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  }
  double recall() const {
    return tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  }
};

namespace detail {

inline void require_paired(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw Error(std::string(what) + ": " + std::to_string(a) + " predictions for " +
                std::to_string(b) + " labels");
  }
  if (a == 0) throw Error(std::string(what) + ": no frames to evaluate");
}

inline std::pair<std::size_t, std::size_t> class_totals(std::span<const Label> labels,
                                                        const char* what) {
  const auto pos = static_cast<std::size_t>(
      std::count(labels.begin(), labels.end(), Label::septic));
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) {
    throw Error(std::string(what) + ": both classes must be present");
  }
  return {pos, neg};
}

// Indices sorted by descending score; ties keep input order.
inline std::vector<std::size_t> descending_order(std::span<const double> scores) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return idx;
}

}  // namespace detail

inline ConfusionMatrix confusion_matrix(std::span<const Label> predictions,
                                        std::span<const Label> labels) {
  detail::require_paired(predictions.size(), labels.size(), "confusion_matrix");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool pred = predictions[i] == Label::septic;
    const bool truth = labels[i] == Label::septic;
    if (pred && truth) ++cm.tp;
    else if (pred) ++cm.fp;
    else if (truth) ++cm.fn;
    else ++cm.tn;
  }
  return cm;
}

inline double accuracy(std::span<const Label> predictions, std::span<const Label> labels) {
  detail::require_paired(predictions.size(), labels.size(), "accuracy");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predictions[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

struct RocPoint {
  double threshold;  // frames scoring >= threshold are called septic
  double fpr;
  double tpr;
};

struct RocCurve {
  std::vector<RocPoint> points;  // from (0, 0) to (1, 1)
  double auroc = 0.0;
};

/// Threshold sweep over every distinct score. The trapezoid area is
/// accumulated in integer counts, so it equals the pairwise statistic
/// P(pos > neg) + P(tie) / 2 exactly.
inline RocCurve roc_curve(std::span<const double> scores, std::span<const Label> labels) {
  detail::require_paired(scores.size(), labels.size(), "roc_curve");
  const auto [pos, neg] = detail::class_totals(labels, "roc_curve");
  const auto order = detail::descending_order(scores);
  RocCurve roc;
  roc.points.push_back({HUGE_VAL, 0.0, 0.0});
  std::uint64_t tp = 0, fp = 0, area2 = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    const std::uint64_t tp0 = tp, fp0 = fp;
    for (; i < order.size() && scores[order[i]] == s; ++i) {
      if (labels[order[i]] == Label::septic) ++tp;
      else ++fp;
    }
    area2 += (fp - fp0) * (tp + tp0);
    roc.points.push_back({s, static_cast<double>(fp) / static_cast<double>(neg),
                          static_cast<double>(tp) / static_cast<double>(pos)});
  }
  roc.auroc = static_cast<double>(area2) / (2.0 * static_cast<double>(pos) *
                                            static_cast<double>(neg));
  return roc;
}

inline double auroc(std::span<const double> scores, std::span<const Label> labels) {
  return roc_curve(scores, labels).auroc;
}

struct PrPoint {
  double threshold;
  double recall;
  double precision;
};

struct PrCurve {
  std::vector<PrPoint> points;  // first point is the empty prediction set
  ConfusionMatrix at_threshold;
  double precision = 0.0;  // at the operating threshold
  double recall = 0.0;
};

inline PrCurve precision_recall(std::span<const double> scores, std::span<const Label> labels,
                                double threshold = 0.5) {
  detail::require_paired(scores.size(), labels.size(), "precision_recall");
  const auto [pos, neg] = detail::class_totals(labels, "precision_recall");
  (void)neg;
  const auto order = detail::descending_order(scores);
  PrCurve pr;
  pr.points.push_back({HUGE_VAL, 0.0, 1.0});
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == s; ++i) {
      if (labels[order[i]] == Label::septic) ++tp;
      else ++fp;
    }
    pr.points.push_back({s, static_cast<double>(tp) / static_cast<double>(pos),
                         static_cast<double>(tp) / static_cast<double>(tp + fp)});
  }
  std::vector<Label> predicted(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i)
    predicted[i] = scores[i] >= threshold ? Label::septic : Label::non_septic;
  pr.at_threshold = confusion_matrix(predicted, labels);
  pr.precision = pr.at_threshold.precision();
  pr.recall = pr.at_threshold.recall();
  return pr;
}

struct FramePrediction {
  std::string path;
  Label predicted;
};

struct PatientRow {
  std::string patient;
  std::size_t total = 0;
  std::size_t correct = 0;
  std::size_t incorrect = 0;
  double percent = 0.0;
  Label label = Label::non_septic;
};

struct PatientReport {
  std::vector<PatientRow> rows;  // in order of first appearance
};

/// Per-patient accuracy table. Every prediction must name a manifest frame.
inline PatientReport patient_report(std::span<const FramePrediction> predictions,
                                    const Manifest& manifest) {
  std::map<std::string, const FrameRecord*> by_path;
  for (const auto& r : manifest.records) by_path[r.path] = &r;
  PatientReport report;
  std::map<std::string, std::size_t> row_of;
  for (const auto& p : predictions) {
    const auto it = by_path.find(p.path);
    if (it == by_path.end()) {
      throw Error("patient_report: frame '" + p.path + "' is not in the manifest");
    }
    const FrameRecord& rec = *it->second;
    auto [slot, fresh] = row_of.emplace(rec.patient_id, report.rows.size());
    if (fresh) report.rows.push_back({rec.patient_id, 0, 0, 0, 0.0, rec.label});
    PatientRow& row = report.rows[slot->second];
    ++row.total;
    if (p.predicted == rec.label) ++row.correct;
    else ++row.incorrect;
  }
  for (auto& row : report.rows)
    row.percent = 100.0 * static_cast<double>(row.correct) / static_cast<double>(row.total);
  return report;
}

/// Two-decimal percentage, e.g. "66.60".
inline std::string format_percent(double percent) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", percent);
  return buf;
}

}  // namespace dfml
