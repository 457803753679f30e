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

// Text-line normalization and the multi-scale sliding-window glimpses.
//
// A line is brought to 32x256: scaled to height 32 keeping its aspect
// ratio, then right-padded with black, or squashed to width 256 when too
// long. Windows are laid on a base grid of 32-wide windows with left edges
// 0, stride, 2*stride, ...; every scale takes a crop of its own width
// centred on the same base-window centre, reading black outside the line,
// and resizes it to 32x32. Crops are stacked as channels in ascending
// scale order.

#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

#include "scan/errors.hpp"
#include "scan/image.hpp"
#include "scan/tensor.hpp"

namespace scan {

inline constexpr std::size_t kLineHeight = 32;
inline constexpr std::size_t kLineWidth = 256;
inline constexpr std::size_t kGlimpseSize = 32;
inline constexpr double kPadValue = 0.0;

struct NormalizedImage {
  RawImage image;  // always kLineHeight x kLineWidth
  std::size_t content_width = 0;
};

struct WindowConfig {
  std::vector<int> scales{40};
  int stride = 4;

  static WindowConfig single(int scale = 40) { return {{scale}, 4}; }
  static WindowConfig multi() { return {{32, 40, 48}, 4}; }
};

struct WindowSequence {
  std::size_t count = 0;
  std::vector<int> scales;     // ascending; one channel per scale
  std::vector<double> centers; // x-coordinate of each window centre
  std::vector<double> glimpses;  // [count, 32, 32, channels], row-major

  std::size_t channels() const { return scales.size(); }
  std::size_t glimpse_stride() const { return kGlimpseSize * kGlimpseSize * channels(); }
  std::span<const double> glimpse(std::size_t i) const {
    return std::span<const double>(glimpses).subspan(i * glimpse_stride(), glimpse_stride());
  }
};

inline std::size_t window_count(int stride) {
  if (stride <= 0) throw ShapeError("window stride must be positive");
  return (kLineWidth - kGlimpseSize) / static_cast<std::size_t>(stride) + 1;
}

inline NormalizedImage normalize_image(const RawImage& img) {
  if (img.empty() || img.pixels.size() != img.height * img.width) {
    throw DataError("normalize_image: degenerate image");
  }
  for (double v : img.pixels) {
    if (!(v >= 0.0 && v <= 1.0)) throw DataError("normalize_image: pixel outside [0,1]");
  }
  const double scaled = static_cast<double>(img.width) * static_cast<double>(kLineHeight) /
                        static_cast<double>(img.height);
  const auto width = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(scaled)));
  NormalizedImage out;
  if (width >= kLineWidth) {
    out.image = resize_bilinear(img, kLineHeight, kLineWidth);
    out.content_width = kLineWidth;
    return out;
  }
  const RawImage resized = resize_bilinear(img, kLineHeight, width);
  out.image = RawImage(kLineHeight, kLineWidth, kPadValue);
  for (std::size_t y = 0; y < kLineHeight; ++y) {
    std::copy_n(resized.pixels.begin() + static_cast<std::ptrdiff_t>(y * width), width,
                out.image.pixels.begin() + static_cast<std::ptrdiff_t>(y * kLineWidth));
  }
  out.content_width = width;
  return out;
}

/// Resizes a 32-row patch of any width to 32x32 (horizontal bilinear).
inline RawImage resize_patch(const RawImage& patch) {
  if (patch.width < 1 || patch.height != kGlimpseSize) {
    throw ShapeError("resize_patch: expected a 32-row patch of width >= 1");
  }
  return resize_bilinear(patch, kGlimpseSize, kGlimpseSize);
}

inline WindowSequence extract_windows(const NormalizedImage& img, std::vector<int> scales,
                                      int stride) {
  if (stride <= 0) throw ShapeError("extract_windows: stride must be positive");
  if (scales.empty()) throw ShapeError("extract_windows: no scales");
  for (int s : scales) {
    if (s < 1) throw ShapeError("extract_windows: scale must be >= 1");
  }
  if (img.image.height != kLineHeight || img.image.width != kLineWidth) {
    throw ShapeError("extract_windows: image is not normalized to 32x256");
  }
  std::sort(scales.begin(), scales.end());

  WindowSequence ws;
  ws.count = window_count(stride);
  ws.scales = scales;
  ws.centers.resize(ws.count);
  const std::size_t n = scales.size();
  ws.glimpses.assign(ws.count * kGlimpseSize * kGlimpseSize * n, 0.0);

  RawImage patch;
  for (std::size_t i = 0; i < ws.count; ++i) {
    const auto left = static_cast<std::ptrdiff_t>(i) * stride;
    const std::ptrdiff_t center = left + static_cast<std::ptrdiff_t>(kGlimpseSize / 2);
    ws.centers[i] = static_cast<double>(center);
    for (std::size_t ch = 0; ch < n; ++ch) {
      const auto width = static_cast<std::size_t>(scales[ch]);
      const std::ptrdiff_t start = center - static_cast<std::ptrdiff_t>(width / 2);
      patch = RawImage(kGlimpseSize, width, kPadValue);
      for (std::size_t y = 0; y < kGlimpseSize; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
          const std::ptrdiff_t sx = start + static_cast<std::ptrdiff_t>(x);
          if (sx >= 0 && sx < static_cast<std::ptrdiff_t>(kLineWidth)) {
            patch.at(y, x) = img.image.at(y, static_cast<std::size_t>(sx));
          }
        }
      }
      const RawImage g = width == kGlimpseSize ? patch : resize_patch(patch);
      double* dst = ws.glimpses.data() + i * ws.glimpse_stride();
      for (std::size_t p = 0; p < kGlimpseSize * kGlimpseSize; ++p) dst[p * n + ch] = g.pixels[p];
    }
  }
  return ws;
}

inline WindowSequence extract_windows(const RawImage& img, const WindowConfig& cfg) {
  return extract_windows(normalize_image(img), cfg.scales, cfg.stride);
}

/// Stacks the glimpses of several window sequences into one [N*m, 32, 32, n]
/// tensor.
template <typename T>
Tensor<T> glimpse_tensor(std::span<const WindowSequence> sequences) {
  if (sequences.empty()) throw ShapeError("glimpse_tensor: no sequences");
  const std::size_t n = sequences.front().channels();
  std::size_t total = 0;
  for (const auto& ws : sequences) {
    if (ws.channels() != n) throw ShapeError("glimpse_tensor: channel count differs");
    total += ws.count;
  }
  std::vector<T> values;
  values.reserve(total * kGlimpseSize * kGlimpseSize * n);
  for (const auto& ws : sequences) {
    for (double v : ws.glimpses) values.push_back(static_cast<T>(v));
  }
  return Tensor<T>(Shape{total, kGlimpseSize, kGlimpseSize, n}, std::move(values));
}

}  // namespace scan
