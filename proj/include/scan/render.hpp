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

// Synthetic text-line renderer built on an embedded 5x7 bitmap font.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "scan/errors.hpp"
#include "scan/image.hpp"

namespace scan {

inline constexpr int kGlyphCols = 5;
inline constexpr int kGlyphRows = 7;
inline constexpr double kGlyphHeightPx = 24.0;
inline constexpr double kCanvasHeight = 32.0;

struct Glyph {
  char symbol;
  std::array<std::string_view, kGlyphRows> rows;

  bool ink(int row, int col) const { return rows[row][col] == '#'; }
};

// clang-format off
inline constexpr std::array<Glyph, 36> kFont{{
  {'0', {".###.", "#...#", "#..##", "#.#.#", "##..#", "#...#", ".###."}},
  {'1', {"..#..", ".##..", "..#..", "..#..", "..#..", "..#..", ".###."}},
  {'2', {".###.", "#...#", "....#", "...#.", "..#..", ".#...", "#####"}},
  {'3', {"#####", "...#.", "..#..", "...#.", "....#", "#...#", ".###."}},
  {'4', {"...#.", "..##.", ".#.#.", "#..#.", "#####", "...#.", "...#."}},
  {'5', {"#####", "#....", "####.", "....#", "....#", "#...#", ".###."}},
  {'6', {"..##.", ".#...", "#....", "####.", "#...#", "#...#", ".###."}},
  {'7', {"#####", "....#", "...#.", "..#..", ".#...", ".#...", ".#..."}},
  {'8', {".###.", "#...#", "#...#", ".###.", "#...#", "#...#", ".###."}},
  {'9', {".###.", "#...#", "#...#", ".####", "....#", "...#.", ".##.."}},
  {'A', {".###.", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"}},
  {'B', {"####.", "#...#", "#...#", "####.", "#...#", "#...#", "####."}},
  {'C', {".###.", "#...#", "#....", "#....", "#....", "#...#", ".###."}},
  {'D', {"###..", "#..#.", "#...#", "#...#", "#...#", "#..#.", "###.."}},
  {'E', {"#####", "#....", "#....", "####.", "#....", "#....", "#####"}},
  {'F', {"#####", "#....", "#....", "####.", "#....", "#....", "#...."}},
  {'G', {".###.", "#...#", "#....", "#.###", "#...#", "#...#", ".####"}},
  {'H', {"#...#", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"}},
  {'I', {".###.", "..#..", "..#..", "..#..", "..#..", "..#..", ".###."}},
  {'J', {"..###", "...#.", "...#.", "...#.", "...#.", "#..#.", ".##.."}},
  {'K', {"#...#", "#..#.", "#.#..", "##...", "#.#..", "#..#.", "#...#"}},
  {'L', {"#....", "#....", "#....", "#....", "#....", "#....", "#####"}},
  {'M', {"#...#", "##.##", "#.#.#", "#.#.#", "#...#", "#...#", "#...#"}},
  {'N', {"#...#", "#...#", "##..#", "#.#.#", "#..##", "#...#", "#...#"}},
  {'O', {".###.", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."}},
  {'P', {"####.", "#...#", "#...#", "####.", "#....", "#....", "#...."}},
  {'Q', {".###.", "#...#", "#...#", "#...#", "#.#.#", "#..#.", ".##.#"}},
  {'R', {"####.", "#...#", "#...#", "####.", "#.#..", "#..#.", "#...#"}},
  {'S', {".####", "#....", "#....", ".###.", "....#", "....#", "####."}},
  {'T', {"#####", "..#..", "..#..", "..#..", "..#..", "..#..", "..#.."}},
  {'U', {"#...#", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."}},
  {'V', {"#...#", "#...#", "#...#", "#...#", "#...#", ".#.#.", "..#.."}},
  {'W', {"#...#", "#...#", "#...#", "#.#.#", "#.#.#", "#.#.#", ".#.#."}},
  {'X', {"#...#", "#...#", ".#.#.", "..#..", ".#.#.", "#...#", "#...#"}},
  {'Y', {"#...#", "#...#", ".#.#.", "..#..", "..#..", "..#..", "..#.."}},
  {'Z', {"#####", "....#", "...#.", "..#..", ".#...", "#....", "#####"}},
}};
// clang-format on

inline const Glyph* find_glyph(char c) {
  for (const auto& g : kFont) {
    if (g.symbol == c) return &g;
  }
  return nullptr;
}

/// Jitter amplitudes; every field at 0 renders the canonical line.
struct RenderJitter {
  double scale = 0.2;     // relative glyph-size change, +-
  double baseline = 2.0;  // vertical shift in pixels, +-
  double spacing = 1.0;   // per-gap change in pixels, +-
  double noise = 0.05;    // upper bound on the Gaussian noise sigma
  bool contrast = true;   // random background/ink levels

  static RenderJitter none() { return {0.0, 0.0, 0.0, 0.0, false}; }
};

/// Renders `text` on a 32-pixel-high black canvas with light glyphs about
/// 24 px tall. Line-level parameters (size, baseline, levels, noise) are
/// drawn from `seed` alone so that, for a fixed seed, appending characters
/// always widens the image.
inline RawImage render_textline(const std::string& text, std::uint64_t seed,
                                const RenderJitter& jitter = {}) {
  if (text.empty()) throw DataError("render_textline: empty text");
  std::vector<const Glyph*> glyphs;
  for (char c : text) {
    const Glyph* g = find_glyph(c);
    if (!g) throw DataError(std::string("render_textline: no glyph for '") + c + "'");
    glyphs.push_back(g);
  }

  std::mt19937_64 rng(seed);
  auto uniform = [&](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  auto symmetric = [&](double amp) { return amp > 0.0 ? uniform(-amp, amp) : 0.0; };

  const double cell = kGlyphHeightPx / kGlyphRows * (1.0 + symmetric(jitter.scale));
  const double glyph_w = cell * kGlyphCols;
  const double glyph_h = cell * kGlyphRows;
  const double top = (kCanvasHeight - glyph_h) / 2.0 + symmetric(jitter.baseline);
  const double background = jitter.contrast ? uniform(0.0, 0.25) : 0.0;
  const double ink = jitter.contrast ? uniform(0.65, 1.0) : 1.0;
  const double sigma = jitter.noise > 0.0 ? uniform(0.0, jitter.noise) : 0.0;

  constexpr double kMargin = 4.0;
  std::vector<double> lefts;
  double x = kMargin;
  for (std::size_t i = 0; i < glyphs.size(); ++i) {
    lefts.push_back(x);
    x += glyph_w + cell + symmetric(jitter.spacing);
  }
  const double right = lefts.back() + glyph_w + kMargin;
  const auto width = static_cast<std::size_t>(std::ceil(right));

  constexpr int kSuper = 4;
  RawImage img(static_cast<std::size_t>(kCanvasHeight), width, background);
  for (std::size_t r = 0; r < img.height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      int covered = 0;
      for (int sy = 0; sy < kSuper; ++sy) {
        const double py = static_cast<double>(r) + (sy + 0.5) / kSuper;
        const double v = (py - top) / cell;
        if (v < 0.0 || v >= kGlyphRows) continue;
        for (int sx = 0; sx < kSuper; ++sx) {
          const double px = static_cast<double>(c) + (sx + 0.5) / kSuper;
          // Glyphs never overlap: gaps are at least cell - spacing > 0.
          auto it = std::upper_bound(lefts.begin(), lefts.end(), px);
          if (it == lefts.begin()) continue;
          const std::size_t gi = static_cast<std::size_t>(it - lefts.begin()) - 1;
          const double u = (px - lefts[gi]) / cell;
          if (u >= kGlyphCols) continue;
          if (glyphs[gi]->ink(static_cast<int>(v), static_cast<int>(u))) ++covered;
        }
      }
      const double coverage = static_cast<double>(covered) / (kSuper * kSuper);
      img.at(r, c) = background + (ink - background) * coverage;
    }
  }
  if (sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, sigma);
    for (double& p : img.pixels) p = std::clamp(p + noise(rng), 0.0, 1.0);
  }
  return img;
}

}  // namespace scan
