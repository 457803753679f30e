// Copyright 2026 The scan-ocr Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <filesystem>
#include <numeric>
#include <span>
#include <vector>

#include "scan/conv_seq2seq.hpp"
#include "scan/image.hpp"

namespace scan {

/// Steps x windows image of one layer's attention, columns ordered by window
/// centre, weight 0 -> black and 1 -> white.
inline RawImage attention_heatmap(const AttentionMap& map, std::size_t layer,
                                  std::span<const double> centers) {
  if (layer >= map.layers) throw ShapeError("heatmap: layer out of range");
  if (centers.size() != map.sources) {
    throw ShapeError("heatmap: one centre per source window required");
  }
  std::vector<std::size_t> columns(map.sources);
  std::iota(columns.begin(), columns.end(), 0);
  std::stable_sort(columns.begin(), columns.end(),
                   [&](std::size_t a, std::size_t b) { return centers[a] < centers[b]; });
  RawImage img(map.steps, map.sources);
  for (std::size_t i = 0; i < map.steps; ++i) {
    for (std::size_t j = 0; j < map.sources; ++j) {
      img.at(i, j) = std::clamp(map.at(layer, i, columns[j]), 0.0, 1.0);
    }
  }
  return img;
}

inline void export_heatmap(const AttentionMap& map, std::size_t layer,
                           std::span<const double> centers, const std::filesystem::path& path) {
  write_pgm(path, attention_heatmap(map, layer, centers));
}

/// Centre of the most-attended window at each step.
inline std::vector<double> attention_peaks(const AttentionMap& map, std::size_t layer,
                                           std::span<const double> centers) {
  std::vector<double> peaks;
  for (std::size_t i = 0; i < map.steps; ++i) {
    const auto row = map.row(layer, i);
    const auto best = std::max_element(row.begin(), row.end()) - row.begin();
    peaks.push_back(centers[static_cast<std::size_t>(best)]);
  }
  return peaks;
}

}  // namespace scan
