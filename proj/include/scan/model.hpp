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

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "scan/conv_seq2seq.hpp"
#include "scan/feature_extractor.hpp"
#include "scan/vocabulary.hpp"
#include "scan/windowing.hpp"

namespace scan {

/// Everything needed to rebuild a recognizer's architecture.
struct ModelConfig {
  Preset preset = Preset::desk;
  WindowConfig windows;
  ExtractorConfig extractor;
  SeqModelConfig seq;
  std::string charset = default_charset();

  static ModelConfig make(Preset preset, std::vector<int> scales = {40},
                          std::string charset = default_charset()) {
    ModelConfig cfg;
    cfg.preset = preset;
    cfg.windows = WindowConfig{std::move(scales), 4};
    const std::size_t n = cfg.windows.scales.size();
    cfg.extractor =
        preset == Preset::paper ? ExtractorConfig::paper(n) : ExtractorConfig::desk(n);
    cfg.seq = preset == Preset::paper ? SeqModelConfig::paper() : SeqModelConfig::desk();
    cfg.charset = std::move(charset);
    return cfg;
  }

  bool same_architecture(const ModelConfig& o) const {
    return preset == o.preset && windows.scales == o.windows.scales &&
           windows.stride == o.windows.stride && extractor == o.extractor &&
           seq.same_architecture(o.seq) && charset == o.charset;
  }
};

/// Teacher-forcing rows for a batch of labels, padded to a common length:
/// inputs are <s> y_1 .. y_k, targets are y_1 .. y_k </s>.
struct TeacherBatch {
  std::size_t batch = 0;
  std::size_t steps = 0;
  std::vector<int> inputs;
  std::vector<int> targets;
};

inline TeacherBatch make_teacher_batch(const Vocabulary& vocab,
                                       std::span<const std::string> labels,
                                       std::size_t max_steps) {
  TeacherBatch tb;
  tb.batch = labels.size();
  for (const auto& label : labels) {
    if (label.empty()) throw DataError("empty label");
    tb.steps = std::max(tb.steps, label.size() + 1);
  }
  if (tb.steps > max_steps) {
    throw DataError("label longer than " + std::to_string(max_steps - 1) + " symbols");
  }
  tb.inputs.assign(tb.batch * tb.steps, Vocabulary::kPad);
  tb.targets.assign(tb.batch * tb.steps, Vocabulary::kPad);
  for (std::size_t b = 0; b < tb.batch; ++b) {
    const auto tokens = vocab.encode(labels[b]);
    int* in = tb.inputs.data() + b * tb.steps;
    int* out = tb.targets.data() + b * tb.steps;
    in[0] = Vocabulary::kBos;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      in[i + 1] = tokens[i];
      out[i] = tokens[i];
    }
    out[tokens.size()] = Vocabulary::kEos;
  }
  return tb;
}

/// Windowing -> feature extractor -> convolutional encoder-decoder.
template <typename T>
class ScanModel {
 public:
  explicit ScanModel(ModelConfig cfg, std::uint64_t seed = 0)
      : cfg_(std::move(cfg)), vocab_(cfg_.charset), rng_(seed),
        extractor_(check(cfg_).extractor, store_, rng_),
        seq_(cfg_.seq, cfg_.extractor.feature_dim, vocab_.size(), store_, rng_) {}

  ScanModel(const ScanModel&) = delete;
  ScanModel& operator=(const ScanModel&) = delete;

  const ModelConfig& config() const { return cfg_; }
  const Vocabulary& vocab() const { return vocab_; }
  ParameterStore<T>& parameters() { return store_; }
  const ParameterStore<T>& parameters() const { return store_; }
  const FeatureExtractor<T>& extractor() const { return extractor_; }
  ConvSeq2Seq<T>& seq2seq() { return seq_; }
  const ConvSeq2Seq<T>& seq2seq() const { return seq_; }

  void set_training(bool on) { seq_.set_training(on); }
  bool training() const { return seq_.training(); }
  void set_dropout(double p) {
    seq_.set_dropout(p);
    cfg_.seq.dropout = p;
  }
  void seed_dropout(std::uint64_t seed) { seq_.seed_dropout(seed); }

  std::size_t max_label_length() const { return cfg_.seq.max_target - 1; }

  WindowSequence windows(const RawImage& image) const {
    return extract_windows(image, cfg_.windows);
  }

  /// [B, m, feature_dim] for a batch of images.
  Tensor<T> features(std::span<const RawImage> images) const {
    std::vector<WindowSequence> seqs;
    seqs.reserve(images.size());
    for (const auto& img : images) seqs.push_back(windows(img));
    return features(std::span<const WindowSequence>(seqs));
  }

  Tensor<T> features(std::span<const WindowSequence> seqs) const {
    const std::size_t m = seqs.front().count;
    Tensor<T> flat = extractor_.forward(glimpse_tensor<T>(seqs));
    return reshape(flat, {seqs.size(), m, cfg_.extractor.feature_dim});
  }

  SourceRepresentation<T> source(std::span<const RawImage> images) const {
    return seq_.source(features(images));
  }

  /// Teacher-forced pass over a batch; logits row i predicts label[i] (and
  /// </s> after the last symbol).
  DecoderOutput<T> forward(std::span<const RawImage> images,
                           std::span<const std::string> labels) const {
    if (images.size() != labels.size() || images.empty()) {
      throw ShapeError("forward: need one label per image");
    }
    const auto tb = make_teacher_batch(vocab_, labels, cfg_.seq.max_target);
    return seq_.decode(tb.inputs, tb.batch, source(images));
  }

  /// Batch-mean of per-sequence summed negative log-likelihood.
  Tensor<T> loss(std::span<const RawImage> images, std::span<const std::string> labels) const {
    if (images.size() != labels.size() || images.empty()) {
      throw ShapeError("loss: need one label per image");
    }
    const auto tb = make_teacher_batch(vocab_, labels, cfg_.seq.max_target);
    const auto out = seq_.decode(tb.inputs, tb.batch, source(images));
    return nll_loss(out.logits, tb.targets, Vocabulary::kPad);
  }

  /// Log-probabilities of the token following `prefix` (prefix excludes <s>).
  std::vector<double> next_log_probs(const SourceRepresentation<T>& src,
                                     std::span<const int> prefix) const {
    NoGradGuard guard;
    std::vector<int> inputs;
    inputs.reserve(prefix.size() + 1);
    inputs.push_back(Vocabulary::kBos);
    inputs.insert(inputs.end(), prefix.begin(), prefix.end());
    const auto out = seq_.decode(inputs, 1, src);
    const std::size_t v = vocab_.size();
    const auto last = out.logits.data().subspan((inputs.size() - 1) * v, v);
    const auto lp = log_softmax(Tensor<T>({v}, std::vector<T>(last.begin(), last.end())));
    return std::vector<double>(lp.data().begin(), lp.data().end());
  }

 private:
  static const ModelConfig& check(const ModelConfig& cfg) {
    if (cfg.windows.scales.size() != cfg.extractor.input_channels) {
      throw std::invalid_argument("ModelConfig: scale count must equal extractor channels");
    }
    if (window_count(cfg.windows.stride) > cfg.seq.max_source) {
      throw std::invalid_argument("ModelConfig: more windows than source positions");
    }
    cfg.seq.validate();
    return cfg;
  }

  ModelConfig cfg_;
  Vocabulary vocab_;
  std::mt19937_64 rng_;
  ParameterStore<T> store_;
  FeatureExtractor<T> extractor_;
  ConvSeq2Seq<T> seq_;
};

}  // namespace scan
