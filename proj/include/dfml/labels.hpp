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

#include <cstdint>
#include <string>
#include <string_view>

#include "dfml/tensor.hpp"

namespace dfml {

/// Clinical label. Septic is the positive class for every threshold metric.
enum class Label : std::uint8_t { non_septic = 0, septic = 1 };

inline constexpr std::size_t class_index(Label l) { return static_cast<std::size_t>(l); }

inline std::string to_string(Label l) {
  return l == Label::septic ? "septic" : "non-septic";
}

inline Label parse_label(std::string_view s) {
  if (s == "septic") return Label::septic;
  if (s == "non-septic") return Label::non_septic;
  throw Error("unknown label '" + std::string(s) + "'");
}

/// Positive-class decision rule shared by every consumer of septic scores.
inline Label predict_label(double septic_score) {
  return septic_score >= 0.5 ? Label::septic : Label::non_septic;
}

}  // namespace dfml
