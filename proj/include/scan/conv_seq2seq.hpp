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

// Fully convolutional encoder-decoder with a separate dot-product attention
// in every decoder layer.
//
//   e_j   = W_p s_j + b_p + p_j                       source embedding
//   block = dropout -> conv1d -> GLU -> (+ input) * sqrt(1/2)
//   d_i   = W_d h_i + b_d + g_i                       decoder state summary
//   a_ij  = softmax_j(d_i . z_j)                      z = last encoder block
//   c_i   = sum_j a_ij (z_j + e_j)                    added to the block state
//   p(y_{i+1} | y_1..y_i, s) = softmax(W_o h^L_i + b_o)
//
// Decoder convolutions are causal, so row i of the logits depends only on
// the input tokens 0..i.

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "scan/ops.hpp"
#include "scan/parameters.hpp"

namespace scan {

struct SeqModelConfig {
  std::size_t d_hidden = 256;
  std::size_t enc_layers = 3;
  std::size_t dec_layers = 2;
  std::size_t enc_kernel = 5;
  std::size_t dec_kernel = 7;
  double dropout = 0.5;
  std::size_t max_source = 64;
  std::size_t max_target = 32;

  static SeqModelConfig paper() { return {}; }
  static SeqModelConfig desk() {
    SeqModelConfig cfg;
    cfg.d_hidden = 128;
    cfg.dropout = 0.1;
    return cfg;
  }

  void validate() const {
    if (d_hidden < 1) throw std::invalid_argument("SeqModelConfig: d_hidden must be >= 1");
    if (enc_layers < 1 || dec_layers < 1) {
      throw std::invalid_argument("SeqModelConfig: layer counts must be >= 1");
    }
    if (enc_kernel % 2 == 0) throw std::invalid_argument("SeqModelConfig: enc_kernel must be odd");
    if (dec_kernel < 1) throw std::invalid_argument("SeqModelConfig: dec_kernel must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) {
      throw std::invalid_argument("SeqModelConfig: dropout must lie in [0,1)");
    }
    if (max_source < 1 || max_target < 1) {
      throw std::invalid_argument("SeqModelConfig: position tables must be non-empty");
    }
  }

  // Dropout is a training knob, not part of the architecture.
  bool same_architecture(const SeqModelConfig& o) const {
    return d_hidden == o.d_hidden && enc_layers == o.enc_layers && dec_layers == o.dec_layers &&
           enc_kernel == o.enc_kernel && dec_kernel == o.dec_kernel &&
           max_source == o.max_source && max_target == o.max_target;
  }
};

template <typename T>
struct SourceRepresentation {
  Tensor<T> embedded;  // e: [B, m, d]
  Tensor<T> encoded;   // z: [B, m, d]

  std::size_t batch() const { return encoded.dim(0); }
  std::size_t length() const { return encoded.dim(1); }
};

template <typename T>
struct AttentionResult {
  Tensor<T> context;  // c: [B, n, d]
  Tensor<T> weights;  // a: [B, n, m]
};

/// Attention weights of one sample: layers x steps x sources.
struct AttentionMap {
  std::size_t layers = 0;
  std::size_t steps = 0;
  std::size_t sources = 0;
  std::vector<double> weights;

  double at(std::size_t layer, std::size_t step, std::size_t source) const {
    return weights[(layer * steps + step) * sources + source];
  }
  std::span<const double> row(std::size_t layer, std::size_t step) const {
    return std::span<const double>(weights).subspan((layer * steps + step) * sources, sources);
  }
};

template <typename T>
struct DecoderOutput {
  Tensor<T> logits;                  // [B, n, |V|]
  std::vector<Tensor<T>> attention;  // per layer, [B, n, m]

  AttentionMap attention_map(std::size_t sample) const {
    AttentionMap map;
    map.layers = attention.size();
    map.steps = attention.front().dim(1);
    map.sources = attention.front().dim(2);
    const std::size_t block = map.steps * map.sources;
    for (const auto& a : attention) {
      auto values = a.data().subspan(sample * block, block);
      map.weights.insert(map.weights.end(), values.begin(), values.end());
    }
    return map;
  }
};

template <typename T>
class ConvSeq2Seq {
 public:
  ConvSeq2Seq(const SeqModelConfig& cfg, std::size_t feature_dim, std::size_t vocab_size,
              ParameterStore<T>& store, std::mt19937_64& rng,
              const std::string& prefix = "seq2seq")
      : cfg_(cfg), vocab_size_(vocab_size), dropout_rng_(rng()) {
    cfg.validate();
    const std::size_t d = cfg.d_hidden;
    const double dd = static_cast<double>(d);
    src_proj_w_ = store.add(prefix + ".src_proj.weight", {d, feature_dim}, Init::glorot, rng,
                            {static_cast<double>(feature_dim), dd});
    src_proj_b_ = store.add(prefix + ".src_proj.bias", {d}, Init::zeros, rng);
    src_pos_ = store.add(prefix + ".src_pos", {cfg.max_source, d}, Init::embedding, rng);
    for (std::size_t l = 0; l < cfg.enc_layers; ++l) {
      const std::string base = prefix + ".encoder.layer" + std::to_string(l);
      const double k = static_cast<double>(cfg.enc_kernel);
      enc_.push_back({store.add(base + ".conv.weight", {cfg.enc_kernel, d, 2 * d}, Init::glorot,
                                rng, {k * dd, 2.0 * k * dd}),
                      store.add(base + ".conv.bias", {2 * d}, Init::zeros, rng)});
    }
    tgt_embed_ = store.add(prefix + ".tgt_embed", {vocab_size, d}, Init::embedding, rng);
    tgt_pos_ = store.add(prefix + ".tgt_pos", {cfg.max_target, d}, Init::embedding, rng);
    for (std::size_t l = 0; l < cfg.dec_layers; ++l) {
      const std::string base = prefix + ".decoder.layer" + std::to_string(l);
      const double k = static_cast<double>(cfg.dec_kernel);
      DecoderLayer layer;
      layer.conv_w = store.add(base + ".conv.weight", {cfg.dec_kernel, d, 2 * d}, Init::glorot,
                               rng, {k * dd, 2.0 * k * dd});
      layer.conv_b = store.add(base + ".conv.bias", {2 * d}, Init::zeros, rng);
      layer.attn_w = store.add(base + ".attn.weight", {d, d}, Init::glorot, rng, {dd, dd});
      layer.attn_b = store.add(base + ".attn.bias", {d}, Init::zeros, rng);
      dec_.push_back(layer);
    }
    out_w_ = store.add(prefix + ".out.weight", {vocab_size, d}, Init::glorot, rng,
                       {dd, static_cast<double>(vocab_size)});
    out_b_ = store.add(prefix + ".out.bias", {vocab_size}, Init::zeros, rng);
  }

  const SeqModelConfig& config() const { return cfg_; }
  std::size_t vocab_size() const { return vocab_size_; }

  void set_training(bool on) { training_ = on; }
  bool training() const { return training_; }
  void seed_dropout(std::uint64_t seed) { dropout_rng_.seed(seed); }
  void set_dropout(double p) {
    SeqModelConfig next = cfg_;
    next.dropout = p;
    next.validate();
    cfg_ = next;
  }

  /// features: [m, F] or [B, m, F] -> e: [B, m, d]
  Tensor<T> embed_source(const Tensor<T>& features) const {
    Tensor<T> s = features;
    if (s.rank() == 2) s = reshape(s, {1, s.dim(0), s.dim(1)});
    if (s.rank() != 3) throw ShapeError("embed_source: features must be [m,F] or [B,m,F]");
    const std::size_t m = s.dim(1);
    if (m > cfg_.max_source) {
      throw ShapeError("embed_source: " + std::to_string(m) +
                       " source positions exceed the table of " +
                       std::to_string(cfg_.max_source));
    }
    return add_broadcast(linear(s, src_proj_w_, src_proj_b_), slice_rows(src_pos_, m));
  }

  /// e: [B, m, d] -> z: [B, m, d]
  Tensor<T> encode(const Tensor<T>& embedded) const {
    if (embedded.rank() != 3 || embedded.dim(2) != cfg_.d_hidden) {
      throw ShapeError("encode: expected [B,m,d_hidden], got " + to_string(embedded.shape()));
    }
    Tensor<T> x = embedded;
    for (const auto& layer : enc_) {
      Tensor<T> h = dropout(x, cfg_.dropout, training_, dropout_rng_);
      h = glu(conv1d(h, layer.weight, layer.bias, Padding::same));
      x = scale(add(h, x), kResidualScale);
    }
    return x;
  }

  SourceRepresentation<T> source(const Tensor<T>& features) const {
    SourceRepresentation<T> src;
    src.embedded = embed_source(features);
    src.encoded = encode(src.embedded);
    return src;
  }

  /// Attention of decoder layer `layer`. h, g: [B, n, d]; z, e: [B, m, d].
  AttentionResult<T> attention(std::size_t layer, const Tensor<T>& h, const Tensor<T>& g,
                               const Tensor<T>& z, const Tensor<T>& e) const {
    if (z.rank() != 3 || z.dim(1) == 0) throw ShapeError("attention: empty source");
    const auto& p = dec_.at(layer);
    Tensor<T> summary = add(linear(h, p.attn_w, p.attn_b), g);
    Tensor<T> weights = softmax(bmm(summary, z, /*trans_b=*/true));
    Tensor<T> context = bmm(weights, add(z, e));
    return {context, weights};
  }

  /// Teacher-forced decoding. `inputs` holds B rows of n tokens (row-major),
  /// each row starting with <s>; logits row i predicts token i + 1.
  DecoderOutput<T> decode(std::span<const int> inputs, std::size_t batch,
                          const SourceRepresentation<T>& src) const {
    if (batch == 0 || inputs.empty() || inputs.size() % batch != 0) {
      throw ShapeError("decode: token count not divisible by batch");
    }
    if (src.batch() != batch) throw ShapeError("decode: batch differs from source batch");
    const std::size_t n = inputs.size() / batch;
    if (n > cfg_.max_target) {
      throw ShapeError("decode: " + std::to_string(n) + " target positions exceed the table of " +
                       std::to_string(cfg_.max_target));
    }
    for (int t : inputs) {
      if (t < 0 || static_cast<std::size_t>(t) >= vocab_size_) {
        throw ShapeError("decode: unknown token index " + std::to_string(t));
      }
    }
    const Tensor<T> g =
        add_broadcast(embedding(tgt_embed_, inputs, {batch, n}), slice_rows(tgt_pos_, n));
    DecoderOutput<T> out;
    Tensor<T> x = g;
    for (std::size_t l = 0; l < dec_.size(); ++l) {
      const auto& layer = dec_[l];
      Tensor<T> h = dropout(x, cfg_.dropout, training_, dropout_rng_);
      h = glu(conv1d(h, layer.conv_w, layer.conv_b, Padding::causal));
      auto att = attention(l, h, g, src.encoded, src.embedded);
      h = add(h, att.context);
      x = scale(add(h, x), kResidualScale);
      out.attention.push_back(att.weights);
    }
    out.logits = linear(x, out_w_, out_b_);
    return out;
  }

 private:
  struct EncoderLayer {
    Tensor<T> weight;
    Tensor<T> bias;
  };
  struct DecoderLayer {
    Tensor<T> conv_w, conv_b;
    Tensor<T> attn_w, attn_b;
  };

  static inline const T kResidualScale = static_cast<T>(std::sqrt(0.5));

  SeqModelConfig cfg_;
  std::size_t vocab_size_;
  bool training_ = false;
  mutable std::mt19937_64 dropout_rng_;
  Tensor<T> src_proj_w_, src_proj_b_, src_pos_;
  std::vector<EncoderLayer> enc_;
  Tensor<T> tgt_embed_, tgt_pos_;
  std::vector<DecoderLayer> dec_;
  Tensor<T> out_w_, out_b_;
};

}  // namespace scan
