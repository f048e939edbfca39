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
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "dfml/io.hpp"
#include "dfml/tensor.hpp"

namespace dfml {

// ---------------------------------------------------------------------------
// CSV tables. Cells never contain commas, quotes or newlines.
// ---------------------------------------------------------------------------

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw Error("CSV has no column '" + std::string(name) + "'");
    return static_cast<std::size_t>(it - header.begin());
  }

  void add(std::vector<std::string> row) {
    if (row.size() != header.size()) {
      throw Error("CSV row has " + std::to_string(row.size()) + " cells, header has " +
                  std::to_string(header.size()));
    }
    for (const auto& cell : row) {
      if (cell.find_first_of(",\"\n\r") != std::string::npos) {
        throw Error("CSV cell '" + cell + "' contains a separator");
      }
    }
    rows.push_back(std::move(row));
  }

  std::string to_text() const {
    std::string s;
    const auto line = [&s](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) s += ',';
        s += cells[i];
      }
      s += '\n';
    };
    line(header);
    for (const auto& r : rows) line(r);
    return s;
  }
};

inline CsvTable parse_csv(std::string_view text, const std::string& source) {
  CsvTable t;
  std::size_t line_no = 0;
  for (auto line : split(text, '\n')) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split(line, ',');
    if (t.header.empty()) {
      t.header = std::move(cells);
      continue;
    }
    if (cells.size() != t.header.size()) {
      throw Error(source + ":" + std::to_string(line_no) + ": expected " +
                  std::to_string(t.header.size()) + " cells, found " +
                  std::to_string(cells.size()));
    }
    t.rows.push_back(std::move(cells));
  }
  if (t.header.empty()) throw Error(source + ": empty CSV");
  return t;
}

inline CsvTable read_csv(const std::filesystem::path& path) {
  return parse_csv(read_text_file(path), path.string());
}

inline void write_csv(const std::filesystem::path& path, const CsvTable& table) {
  write_text_file(path, table.to_text());
}

// ---------------------------------------------------------------------------
// SVG plots
// ---------------------------------------------------------------------------

struct PlotSeries {
  std::string name;
  std::string color;
  std::vector<std::array<double, 2>> points;
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  // Fixed axis ranges; when lo == hi the range is taken from the data.
  double x_lo = 0, x_hi = 0, y_lo = 0, y_hi = 0;
  bool lines = true;  // polyline per series, otherwise dots
  bool diagonal = false;
};

namespace detail {

inline std::string fmt3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

inline std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::pair<double, double> data_range(const std::vector<PlotSeries>& series, int axis) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& s : series)
    for (const auto& p : s.points)
      if (std::isfinite(p[axis])) {
        lo = std::min(lo, p[axis]);
        hi = std::max(hi, p[axis]);
      }
  if (!std::isfinite(lo)) return {0.0, 1.0};
  if (hi == lo) return {lo - 0.5, hi + 0.5};
  const double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

}  // namespace detail

/// Renders series into a standalone SVG document with axes, ticks and a legend.
inline std::string svg_plot(const PlotSpec& spec, const std::vector<PlotSeries>& series) {
  constexpr double W = 480, H = 400, L = 64, R = 16, T = 36, B = 52;
  auto [x0, x1] = spec.x_lo == spec.x_hi ? detail::data_range(series, 0)
                                         : std::pair{spec.x_lo, spec.x_hi};
  auto [y0, y1] = spec.y_lo == spec.y_hi ? detail::data_range(series, 1)
                                         : std::pair{spec.y_lo, spec.y_hi};
  const auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  const auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };
  using detail::fmt3;

  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"480\" height=\"400\" "
                  "viewBox=\"0 0 480 400\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s += "<rect width=\"480\" height=\"400\" fill=\"white\"/>\n";
  s += "<text x=\"240\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" +
       detail::xml_escape(spec.title) + "</text>\n";
  s += "<rect x=\"" + fmt3(L) + "\" y=\"" + fmt3(T) + "\" width=\"" + fmt3(W - L - R) +
       "\" height=\"" + fmt3(H - T - B) + "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fx = x0 + (x1 - x0) * i / 4.0, fy = y0 + (y1 - y0) * i / 4.0;
    s += "<text x=\"" + fmt3(px(fx)) + "\" y=\"" + fmt3(H - B + 16) +
         "\" text-anchor=\"middle\">" + fmt3(fx) + "</text>\n";
    s += "<text x=\"" + fmt3(L - 6) + "\" y=\"" + fmt3(py(fy) + 4) +
         "\" text-anchor=\"end\">" + fmt3(fy) + "</text>\n";
  }
  s += "<text x=\"" + fmt3(L + (W - L - R) / 2) + "\" y=\"" + fmt3(H - 12) +
       "\" text-anchor=\"middle\">" + detail::xml_escape(spec.x_label) + "</text>\n";
  s += "<text transform=\"translate(14," + fmt3(T + (H - T - B) / 2) +
       ") rotate(-90)\" text-anchor=\"middle\">" + detail::xml_escape(spec.y_label) +
       "</text>\n";
  if (spec.diagonal) {
    s += "<line x1=\"" + fmt3(px(x0)) + "\" y1=\"" + fmt3(py(y0)) + "\" x2=\"" + fmt3(px(x1)) +
         "\" y2=\"" + fmt3(py(y1)) + "\" stroke=\"gray\" stroke-dasharray=\"4 3\"/>\n";
  }
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& ser = series[k];
    if (spec.lines) {
      s += "<polyline fill=\"none\" stroke=\"" + ser.color + "\" stroke-width=\"1.5\" points=\"";
      for (const auto& p : ser.points) {
        if (!std::isfinite(p[0]) || !std::isfinite(p[1])) continue;
        s += fmt3(px(p[0])) + "," + fmt3(py(p[1])) + " ";
      }
      s += "\"/>\n";
    } else {
      for (const auto& p : ser.points) {
        if (!std::isfinite(p[0]) || !std::isfinite(p[1])) continue;
        s += "<circle cx=\"" + fmt3(px(p[0])) + "\" cy=\"" + fmt3(py(p[1])) +
             "\" r=\"2.5\" fill=\"" + ser.color + "\" fill-opacity=\"0.7\"/>\n";
      }
    }
    const double ly = T + 14 + 14 * static_cast<double>(k);
    s += "<rect x=\"" + fmt3(W - R - 110) + "\" y=\"" + fmt3(ly - 8) +
         "\" width=\"10\" height=\"10\" fill=\"" + ser.color + "\"/>\n";
    s += "<text x=\"" + fmt3(W - R - 96) + "\" y=\"" + fmt3(ly + 1) + "\">" +
         detail::xml_escape(ser.name) + "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

}  // namespace dfml
