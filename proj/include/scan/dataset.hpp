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
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "scan/errors.hpp"
#include "scan/image.hpp"
#include "scan/render.hpp"

namespace scan {

struct Sample {
  RawImage image;
  std::string label;
};

struct Dataset {
  std::vector<Sample> train;
  std::vector<Sample> dev;
};

inline const std::string& digit_charset() {
  static const std::string charset = "0123456789";
  return charset;
}

// SplitMix64 finalizer; derives independent per-sample seeds.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Random labels rendered with jitter, split 90/10 into train/dev by a
/// seeded shuffle.
inline Dataset gen_dataset(const std::string& charset, std::size_t count, std::size_t min_len,
                           std::size_t max_len, std::uint64_t seed,
                           const RenderJitter& jitter = {}) {
  if (charset.empty()) throw DataError("gen_dataset: empty charset");
  if (min_len < 1 || max_len < min_len) throw DataError("gen_dataset: bad length range");
  if (count == 0) throw DataError("gen_dataset: count must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> length(min_len, max_len);
  std::uniform_int_distribution<std::size_t> symbol(0, charset.size() - 1);

  std::vector<Sample> all;
  all.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::string label;
    const std::size_t n = length(rng);
    for (std::size_t k = 0; k < n; ++k) label.push_back(charset[symbol(rng)]);
    all.push_back({render_textline(label, mix_seed(seed, i), jitter), label});
  }

  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t dev_count = count / 10;
  Dataset ds;
  for (std::size_t i = 0; i < count; ++i) {
    auto& dst = i < dev_count ? ds.dev : ds.train;
    dst.push_back(std::move(all[order[i]]));
  }
  return ds;
}

namespace detail {

inline void write_split(const std::filesystem::path& dir, const std::string& name,
                        const std::vector<Sample>& samples, std::size_t& next_id) {
  std::ofstream manifest(dir / (name + ".tsv"), std::ios::binary);
  if (!manifest) throw DataError("cannot write manifest in " + dir.string());
  for (const auto& s : samples) {
    char file[32];
    std::snprintf(file, sizeof(file), "images/%06zu.pgm", next_id++);
    write_pgm(dir / file, s.image);
    manifest << file << '\t' << s.label << '\n';
  }
}

inline std::vector<Sample> read_split(const std::filesystem::path& dir, const std::string& name) {
  const auto path = dir / (name + ".tsv");
  std::ifstream manifest(path, std::ios::binary);
  if (!manifest) throw DataError("missing manifest " + path.string());
  std::vector<Sample> samples;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(manifest, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 == line.size()) {
      throw DataError(path.string() + ":" + std::to_string(line_no) +
                      ": expected 'filename<TAB>label'");
    }
    samples.push_back({read_pgm(dir / line.substr(0, tab)), line.substr(tab + 1)});
  }
  return samples;
}

}  // namespace detail

/// Layout: DIR/images/NNNNNN.pgm plus DIR/train.tsv and DIR/dev.tsv
/// manifests of "filename<TAB>label" lines.
inline void save_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  std::filesystem::create_directories(dir / "images");
  std::size_t next_id = 0;
  detail::write_split(dir, "train", ds.train, next_id);
  detail::write_split(dir, "dev", ds.dev, next_id);
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset ds;
  ds.train = detail::read_split(dir, "train");
  ds.dev = detail::read_split(dir, "dev");
  if (ds.train.empty() && ds.dev.empty()) throw DataError("dataset " + dir.string() + " is empty");
  return ds;
}

}  // namespace scan
