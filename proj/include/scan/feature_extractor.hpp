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

#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "scan/ops.hpp"
#include "scan/parameters.hpp"
#include "scan/windowing.hpp"

namespace scan {

enum class Preset { paper, desk };

inline const char* to_string(Preset p) { return p == Preset::paper ? "paper" : "desk"; }

inline Preset parse_preset(const std::string& name) {
  if (name == "paper") return Preset::paper;
  if (name == "desk") return Preset::desk;
  throw std::invalid_argument("unknown preset '" + name + "' (expected paper|desk)");
}

struct ExtractorConfig {
  Preset preset = Preset::desk;
  std::size_t input_channels = 1;
  std::size_t feature_dim = 64;

  static ExtractorConfig paper(std::size_t channels) { return {Preset::paper, channels, 200}; }
  static ExtractorConfig desk(std::size_t channels) { return {Preset::desk, channels, 64}; }

  bool operator==(const ExtractorConfig&) const = default;
};

// One 3x3 same-padded conv + ReLU, optionally followed by 2x2 max pooling.
struct ConvStage {
  std::size_t out_channels;
  bool pool;
};

inline std::vector<ConvStage> extractor_stages(Preset preset) {
  if (preset == Preset::paper) {
    return {{32, false},  {32, true},  {64, false},  {64, true},  {128, false},
            {128, true},  {256, false}, {256, true}, {256, false}, {256, false}};
  }
  return {{16, true}, {32, true}, {32, true}};
}

/// Trainable scalars of the configured stack.
inline std::size_t feature_param_count(const ExtractorConfig& cfg) {
  std::size_t total = 0;
  std::size_t channels = cfg.input_channels;
  std::size_t side = kGlimpseSize;
  for (const auto& stage : extractor_stages(cfg.preset)) {
    total += 9 * channels * stage.out_channels + stage.out_channels;
    channels = stage.out_channels;
    if (stage.pool) side /= 2;
  }
  const std::size_t flat = side * side * channels;
  return total + flat * cfg.feature_dim + cfg.feature_dim;
}

/// Per-window CNN mapping a 32x32xn glimpse to a feature vector. Windows
/// are processed independently; there is no cross-window state.
template <typename T>
class FeatureExtractor {
 public:
  FeatureExtractor(const ExtractorConfig& cfg, ParameterStore<T>& store, std::mt19937_64& rng,
                   const std::string& prefix = "extractor")
      : cfg_(cfg) {
    if (cfg.feature_dim < 1 || cfg.input_channels < 1) {
      throw std::invalid_argument("ExtractorConfig: dimensions must be >= 1");
    }
    std::size_t channels = cfg.input_channels;
    std::size_t side = kGlimpseSize;
    const auto stages = extractor_stages(cfg.preset);
    for (std::size_t i = 0; i < stages.size(); ++i) {
      const std::string base = prefix + ".conv" + std::to_string(i);
      const std::size_t co = stages[i].out_channels;
      Layer layer;
      layer.weight = store.add(base + ".weight", {3, 3, channels, co}, Init::glorot, rng,
                               {9.0 * channels, 9.0 * co});
      layer.bias = store.add(base + ".bias", {co}, Init::zeros, rng);
      layer.pool = stages[i].pool;
      layers_.push_back(layer);
      channels = co;
      if (stages[i].pool) side /= 2;
    }
    flat_ = side * side * channels;
    out_weight_ = store.add(prefix + ".fc.weight", {cfg.feature_dim, flat_}, Init::glorot, rng,
                            {static_cast<double>(flat_), static_cast<double>(cfg.feature_dim)});
    out_bias_ = store.add(prefix + ".fc.bias", {cfg.feature_dim}, Init::zeros, rng);
  }

  const ExtractorConfig& config() const { return cfg_; }

  /// glimpses: [N, 32, 32, n] -> [N, feature_dim]
  Tensor<T> forward(const Tensor<T>& glimpses) const {
    if (glimpses.rank() != 4 || glimpses.dim(1) != kGlimpseSize ||
        glimpses.dim(2) != kGlimpseSize) {
      throw ShapeError("FeatureExtractor: expected [N,32,32,n], got " +
                       to_string(glimpses.shape()));
    }
    if (glimpses.dim(3) != cfg_.input_channels) {
      throw ShapeError("FeatureExtractor: glimpses have " + std::to_string(glimpses.dim(3)) +
                       " channels, extractor expects " + std::to_string(cfg_.input_channels));
    }
    Tensor<T> x = glimpses;
    for (const auto& layer : layers_) {
      x = relu(conv2d(x, layer.weight, layer.bias, Padding::same));
      if (layer.pool) x = maxpool2(x);
    }
    x = reshape(x, {glimpses.dim(0), flat_});
    return linear(x, out_weight_, out_bias_);
  }

 private:
  struct Layer {
    Tensor<T> weight;
    Tensor<T> bias;
    bool pool = false;
  };

  ExtractorConfig cfg_;
  std::vector<Layer> layers_;
  std::size_t flat_ = 0;
  Tensor<T> out_weight_;
  Tensor<T> out_bias_;
};

/// Features of one window sequence: [m, feature_dim].
template <typename T>
Tensor<T> extract_features(const WindowSequence& ws, const FeatureExtractor<T>& extractor) {
  return extractor.forward(glimpse_tensor<T>(std::span<const WindowSequence>(&ws, 1)));
}

}  // namespace scan
