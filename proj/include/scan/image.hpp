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
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "scan/errors.hpp"

namespace scan {

/// Grayscale image, intensities in [0, 1], row-major.
struct RawImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;

  RawImage() = default;
  RawImage(std::size_t h, std::size_t w, double fill = 0.0)
      : height(h), width(w), pixels(h * w, fill) {}

  double& at(std::size_t row, std::size_t col) { return pixels[row * width + col]; }
  double at(std::size_t row, std::size_t col) const { return pixels[row * width + col]; }
  bool empty() const { return height == 0 || width == 0; }
};

/// Bilinear resampling with the align-corners convention: output index j
/// samples source coordinate j * (src - 1) / (dst - 1).
inline RawImage resize_bilinear(const RawImage& src, std::size_t out_h, std::size_t out_w) {
  if (src.empty() || out_h == 0 || out_w == 0) {
    throw DataError("resize_bilinear: zero-extent image");
  }
  auto coord = [](std::size_t j, std::size_t from, std::size_t to) {
    if (to == 1 || from == 1) return 0.0;
    return static_cast<double>(j) * static_cast<double>(from - 1) / static_cast<double>(to - 1);
  };
  RawImage out(out_h, out_w);
  for (std::size_t y = 0; y < out_h; ++y) {
    const double sy = coord(y, src.height, out_h);
    const auto y0 = static_cast<std::size_t>(std::floor(sy));
    const std::size_t y1 = std::min(y0 + 1, src.height - 1);
    const double fy = sy - static_cast<double>(y0);
    for (std::size_t x = 0; x < out_w; ++x) {
      const double sx = coord(x, src.width, out_w);
      const auto x0 = static_cast<std::size_t>(std::floor(sx));
      const std::size_t x1 = std::min(x0 + 1, src.width - 1);
      const double fx = sx - static_cast<double>(x0);
      const double top = src.at(y0, x0) * (1.0 - fx) + src.at(y0, x1) * fx;
      const double bottom = src.at(y1, x0) * (1.0 - fx) + src.at(y1, x1) * fx;
      out.at(y, x) = top * (1.0 - fy) + bottom * fy;
    }
  }
  return out;
}

// ---- PGM (binary P5) -------------------------------------------------------

inline std::string encode_pgm(const RawImage& img) {
  std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) +
                    "\n255\n";
  out.reserve(out.size() + img.pixels.size());
  for (double v : img.pixels) {
    const double clamped = std::clamp(v, 0.0, 1.0);
    out.push_back(static_cast<char>(static_cast<std::uint8_t>(std::lround(clamped * 255.0))));
  }
  return out;
}

inline void write_pgm(const std::filesystem::path& path, const RawImage& img) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  const std::string bytes = encode_pgm(img);
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw DataError("failed writing " + path.string());
}

inline RawImage decode_pgm(const std::string& bytes) {
  std::size_t pos = 0;
  auto skip_space = [&]() {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_uint = [&]() -> std::size_t {
    skip_space();
    std::size_t start = pos;
    std::size_t value = 0;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      value = value * 10 + static_cast<std::size_t>(bytes[pos] - '0');
      ++pos;
    }
    if (pos == start) throw DataError("pgm: malformed header");
    return value;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
    throw DataError("pgm: not a binary (P5) graymap");
  }
  pos = 2;
  const std::size_t width = read_uint();
  const std::size_t height = read_uint();
  const std::size_t maxval = read_uint();
  if (width == 0 || height == 0) throw DataError("pgm: zero extent");
  if (maxval == 0 || maxval > 65535) throw DataError("pgm: bad maxval");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw DataError("pgm: malformed header");
  }
  ++pos;
  const std::size_t depth = maxval > 255 ? 2 : 1;
  if (bytes.size() - pos < width * height * depth) throw DataError("pgm: truncated raster");
  RawImage img(height, width);
  for (std::size_t i = 0; i < width * height; ++i) {
    std::size_t v = static_cast<std::uint8_t>(bytes[pos + i * depth]);
    if (depth == 2) v = (v << 8) | static_cast<std::uint8_t>(bytes[pos + i * depth + 1]);
    img.pixels[i] = static_cast<double>(std::min(v, maxval)) / static_cast<double>(maxval);
  }
  return img;
}

inline RawImage read_pgm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open image " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  try {
    return decode_pgm(bytes);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace scan
