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
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "scan/checkpoint.hpp"
#include "scan/dataset.hpp"
#include "scan/decoding.hpp"
#include "scan/model.hpp"
#include "scan/optim.hpp"

namespace scan {

struct TrainConfig {
  double lr = 0.0005;
  double clip_norm = 0.1;
  std::size_t batch_size = 40;
  std::size_t epochs = 1;
  double epoch_fraction = 1.0;
  std::optional<double> dropout;  // unset keeps the model's own rate
  std::uint64_t seed = 0;
  std::size_t beam = 5;
  // Stop once dev accuracy reaches this value.
  std::optional<double> target_accuracy;
  // Best-so-far model is written here when set.
  std::filesystem::path checkpoint;

  static TrainConfig desk() {
    TrainConfig cfg;
    cfg.batch_size = 16;
    return cfg;
  }

  void validate() const {
    if (!(lr >= 0.0)) throw std::invalid_argument("TrainConfig: lr must be non-negative");
    if (!(epoch_fraction > 0.0 && epoch_fraction <= 1.0)) {
      throw std::invalid_argument("TrainConfig: epoch_fraction must lie in (0, 1]");
    }
    if (batch_size == 0) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (beam == 0) throw std::invalid_argument("TrainConfig: beam must be >= 1");
  }
};

struct EpochStats {
  std::size_t epoch = 0;
  std::size_t steps = 0;
  double mean_loss = 0.0;
  double dev_accuracy = 0.0;
  double seconds = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  double best_accuracy = 0.0;
  std::size_t best_epoch = 0;
  double seconds = 0.0;
};

/// Sample indices visited in `epoch`: ceil(fraction * n) of them, drawn
/// without replacement by a shuffle seeded from (seed, epoch).
inline std::vector<std::size_t> epoch_order(std::size_t n, double fraction, std::uint64_t seed,
                                            std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(mix_seed(seed, epoch));
  std::shuffle(order.begin(), order.end(), rng);
  const auto take = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n)));
  order.resize(std::min(n, take));
  return order;
}

/// Forward, backward, clip, Adam, zero-grad. Returns the batch loss.
template <typename T>
double train_step(ScanModel<T>& model, std::span<const RawImage> images,
                  std::span<const std::string> labels, const TrainConfig& cfg) {
  model.set_training(true);
  Tensor<T> loss;
  try {
    loss = model.loss(images, labels);
  } catch (const NumericError& e) {
    throw NumericError(std::string("train_step: non-finite forward pass: ") + e.what());
  }
  const double value = loss.item();
  if (!std::isfinite(value)) throw NumericError("train_step: non-finite loss");
  auto& store = model.parameters();
  store.zero_grad();
  backward(loss);
  clip_grad_norm(store, cfg.clip_norm);
  AdamConfig adam;
  adam.lr = cfg.lr;
  adam_step(store, adam);
  store.zero_grad();
  return value;
}

struct Recognition {
  std::string text;
  std::vector<Hypothesis> hypotheses;
  AttentionMap attention;  // teacher-forced on the best hypothesis
  std::vector<double> centers;
};

template <typename T>
Recognition recognize(const ScanModel<T>& model, const RawImage& image, std::size_t beam = 5,
                      const std::vector<std::string>* lexicon = nullptr,
                      std::size_t max_len = 25) {
  NoGradGuard guard;
  const WindowSequence ws = model.windows(image);
  const SourceRepresentation<T> src =
      model.seq2seq().source(model.features(std::span<const WindowSequence>(&ws, 1)));
  Recognition r;
  r.hypotheses = beam_search(model, src, beam, max_len);
  r.centers = ws.centers;
  const Hypothesis& best = r.hypotheses.front();
  r.text = lexicon ? lexicon_select(r.hypotheses, model.vocab(), *lexicon)
                   : model.vocab().decode(best.tokens);

  std::vector<int> inputs{Vocabulary::kBos};
  for (int t : best.tokens) {
    if (t != Vocabulary::kEos) inputs.push_back(t);
  }
  inputs.resize(std::min(inputs.size(), model.config().seq.max_target));
  r.attention = model.seq2seq().decode(inputs, 1, src).attention_map(0);
  return r;
}

template <typename T>
double sequence_accuracy(const ScanModel<T>& model, std::span<const Sample> samples,
                         std::size_t beam = 5,
                         const std::vector<std::string>* lexicon = nullptr) {
  if (samples.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& s : samples) {
    const std::string truth = lexicon ? to_upper(s.label) : s.label;
    if (recognize(model, s.image, beam, lexicon).text == truth) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

/// Epoch loop with per-epoch dev evaluation. The in-memory model ends up
/// holding the best parameters seen.
template <typename T>
TrainReport train_loop(ScanModel<T>& model, std::span<const Sample> train,
                       std::span<const Sample> dev, const TrainConfig& cfg,
                       const std::function<void(const EpochStats&)>& on_epoch = {}) {
  cfg.validate();
  if (train.empty()) throw DataError("train_loop: empty training set");
  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  if (cfg.dropout) model.set_dropout(*cfg.dropout);
  model.seed_dropout(mix_seed(cfg.seed, 0xD50));

  TrainReport report;
  std::vector<std::vector<T>> best;
  auto snapshot = [&]() {
    best.clear();
    for (const auto& p : model.parameters().params()) {
      best.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
    }
  };

  std::vector<RawImage> images;
  std::vector<std::string> labels;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = Clock::now();
    const auto order = epoch_order(train.size(), cfg.epoch_fraction, cfg.seed, epoch);
    EpochStats stats;
    stats.epoch = epoch;
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      images.clear();
      labels.clear();
      for (std::size_t i = b; i < std::min(order.size(), b + cfg.batch_size); ++i) {
        images.push_back(train[order[i]].image);
        labels.push_back(train[order[i]].label);
      }
      loss_sum += train_step<T>(model, images, labels, cfg);
      ++stats.steps;
    }
    model.set_training(false);
    stats.mean_loss = loss_sum / static_cast<double>(stats.steps);
    stats.dev_accuracy = dev.empty() ? 0.0 : sequence_accuracy(model, dev, cfg.beam);
    stats.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    report.epochs.push_back(stats);
    if (best.empty() || stats.dev_accuracy > report.best_accuracy) {
      report.best_accuracy = stats.dev_accuracy;
      report.best_epoch = epoch;
      snapshot();
      if (!cfg.checkpoint.empty()) save_checkpoint(cfg.checkpoint, model);
    }
    if (on_epoch) on_epoch(stats);
    if (cfg.target_accuracy && stats.dev_accuracy >= *cfg.target_accuracy) break;
  }

  auto& params = model.parameters().params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::copy(best[i].begin(), best[i].end(), params[i].tensor.mutable_data().begin());
  }
  model.set_training(false);
  report.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return report;
}

}  // namespace scan
