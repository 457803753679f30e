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

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "scan/conv_seq2seq.hpp"
#include "scan/gradcheck.hpp"
#include "scan/model.hpp"

namespace scan {
namespace {

using T64 = Tensor<double>;

T64 random_tensor(Shape shape, std::mt19937_64& rng, double amp = 1.0) {
  std::uniform_real_distribution<double> dist(-amp, amp);
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = dist(rng);
  return T64(std::move(shape), std::move(v));
}

SeqModelConfig tiny_config() {
  SeqModelConfig cfg;
  cfg.d_hidden = 8;
  cfg.enc_layers = 2;
  cfg.dec_layers = 2;
  cfg.enc_kernel = 3;
  cfg.dec_kernel = 3;
  cfg.dropout = 0.0;
  return cfg;
}

struct Tiny {
  std::mt19937_64 rng{1};
  ParameterStore<double> store;
  ConvSeq2Seq<double> model;

  explicit Tiny(const SeqModelConfig& cfg = tiny_config(), std::size_t feature_dim = 4,
                std::size_t vocab = 6, std::uint64_t seed = 1)
      : rng(seed), model(cfg, feature_dim, vocab, store, rng) {}
};

TEST(SeqModelConfig, Validation) {
  auto cfg = SeqModelConfig::paper();
  EXPECT_EQ(cfg.d_hidden, 256u);
  EXPECT_EQ(cfg.enc_layers, 3u);
  EXPECT_EQ(cfg.dec_layers, 2u);
  EXPECT_EQ(cfg.enc_kernel, 5u);
  EXPECT_EQ(cfg.dec_kernel, 7u);
  EXPECT_EQ(cfg.dropout, 0.5);
  EXPECT_EQ(cfg.max_source, 64u);
  EXPECT_EQ(cfg.max_target, 32u);
  cfg.enc_kernel = 4;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = SeqModelConfig::paper();
  cfg.dec_layers = 0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(EmbedSource, ZeroFeaturesGivePositionEmbeddings) {
  Tiny t;
  const auto e = t.model.embed_source(T64({5, 4}, 0.0));
  EXPECT_EQ(e.shape(), (Shape{1, 5, 8}));
  const auto& pos = t.store.at("seq2seq.src_pos").tensor;
  for (std::size_t i = 0; i < 40; ++i) EXPECT_EQ(e[i], pos[i]);
}

TEST(EmbedSource, IdenticalRowsDifferOnlyByPosition) {
  Tiny t;
  std::mt19937_64 rng(2);
  const auto row = random_tensor({4}, rng);
  std::vector<double> f(row.data().begin(), row.data().end());
  f.insert(f.end(), row.data().begin(), row.data().end());
  const auto e = t.model.embed_source(T64({2, 4}, f));
  const auto& pos = t.store.at("seq2seq.src_pos").tensor;
  for (std::size_t k = 0; k < 8; ++k) {
    EXPECT_NEAR(e[8 + k] - e[k], pos[8 + k] - pos[k], 1e-12);
  }
}

TEST(EmbedSource, ShapeAndLimits) {
  std::mt19937_64 rng(3);
  ParameterStore<float> store;
  ConvSeq2Seq<float> m(SeqModelConfig::paper(), 200, 39, store, rng);
  EXPECT_EQ(m.embed_source(Tensor<float>({57, 200}, 0.1f)).shape(), (Shape{1, 57, 256}));
  EXPECT_THROW(m.embed_source(Tensor<float>({65, 200}, 0.1f)), ShapeError);
}

TEST(Encode, ShapeZeroAndOrderSensitivity) {
  Tiny t;
  std::mt19937_64 rng(4);
  const auto e = random_tensor({1, 6, 8}, rng);
  const auto z = t.model.encode(e);
  EXPECT_EQ(z.shape(), e.shape());

  // All-zero weights and input give all-zero output.
  Tiny zero;
  for (auto& p : zero.store.params()) {
    for (auto& v : p.tensor.mutable_data()) v = 0.0;
  }
  const auto zeros = zero.model.encode(T64({1, 6, 8}, 0.0));
  for (double v : zeros.data()) EXPECT_EQ(v, 0.0);

  // encode(pi(e)) != pi(encode(e)) for a reversal.
  std::vector<double> rev;
  for (std::size_t i = 6; i-- > 0;) {
    rev.insert(rev.end(), e.data().begin() + i * 8, e.data().begin() + (i + 1) * 8);
  }
  const auto zr = t.model.encode(T64({1, 6, 8}, rev));
  double diff = 0.0;
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t k = 0; k < 8; ++k) diff += std::abs(zr[i * 8 + k] - z[(5 - i) * 8 + k]);
  }
  EXPECT_GT(diff, 1e-6);
}

TEST(Attention, SingleSource) {
  Tiny t;
  std::mt19937_64 rng(5);
  const auto h = random_tensor({1, 3, 8}, rng), g = random_tensor({1, 3, 8}, rng);
  const auto z = random_tensor({1, 1, 8}, rng), e = random_tensor({1, 1, 8}, rng);
  const auto r = t.model.attention(0, h, g, z, e);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(r.weights[i], 1.0);
    for (std::size_t k = 0; k < 8; ++k) EXPECT_NEAR(r.context[i * 8 + k], z[k] + e[k], 1e-15);
  }
}

TEST(Attention, EqualScoresGiveUniformWeights) {
  Tiny t;
  std::mt19937_64 rng(6);
  const auto h = random_tensor({1, 2, 8}, rng), g = random_tensor({1, 2, 8}, rng);
  // Identical keys make every score equal.
  const auto key = random_tensor({8}, rng);
  std::vector<double> zv;
  for (int j = 0; j < 4; ++j) zv.insert(zv.end(), key.data().begin(), key.data().end());
  const T64 z({1, 4, 8}, zv);
  const auto e = random_tensor({1, 4, 8}, rng);
  const auto r = t.model.attention(1, h, g, z, e);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(r.weights[i], 0.25, 1e-15);
  for (std::size_t k = 0; k < 8; ++k) {
    double mean = 0.0;
    for (std::size_t j = 0; j < 4; ++j) mean += (z[j * 8 + k] + e[j * 8 + k]) / 4.0;
    EXPECT_NEAR(r.context[k], mean, 1e-12);
  }
}

TEST(Attention, ScoresZeroAndLn3) {
  Tiny t;
  // W_d = 0, b_d = 0, so d = g. With g = (1, 0, ...) and keys whose first
  // entries are 0 and ln 3 the scores are exactly (0, ln 3).
  auto& w = t.store.at("seq2seq.decoder.layer0.attn.weight").tensor;
  for (auto& v : w.mutable_data()) v = 0.0;
  T64 h({1, 1, 8}, 0.3);
  std::vector<double> gv(8, 0.0);
  gv[0] = 1.0;
  std::vector<double> zv(16, 0.0);
  zv[8] = std::log(3.0);
  zv[1] = 0.5;
  zv[9] = -0.5;
  std::mt19937_64 rng(7);
  const auto e = random_tensor({1, 2, 8}, rng);
  const T64 z({1, 2, 8}, zv);
  const auto r = t.model.attention(0, h, T64({1, 1, 8}, gv), z, e);
  EXPECT_NEAR(r.weights[0], 0.25, 1e-15);
  EXPECT_NEAR(r.weights[1], 0.75, 1e-15);
  for (std::size_t k = 0; k < 8; ++k) {
    EXPECT_NEAR(r.context[k], 0.25 * (z[k] + e[k]) + 0.75 * (z[8 + k] + e[8 + k]), 1e-15);
  }
}

TEST(Decode, RowsAreDistributionsAndShapes) {
  Tiny t;
  std::mt19937_64 rng(8);
  const auto src = t.model.source(random_tensor({2, 5, 4}, rng));
  const std::vector<int> inputs{1, 3, 4, 5, 1, 2, 0, 0};
  const auto out = t.model.decode(inputs, 2, src);
  EXPECT_EQ(out.logits.shape(), (Shape{2, 4, 6}));
  const auto p = softmax(out.logits);
  for (std::size_t r = 0; r < 8; ++r) {
    double total = 0.0;
    for (std::size_t v = 0; v < 6; ++v) total += p[r * 6 + v];
    EXPECT_NEAR(total, 1.0, 1e-6);
  }
  const std::vector<int> start{1};
  const auto one = t.model.decode(start, 1, t.model.source(random_tensor({5, 4}, rng)));
  EXPECT_EQ(one.logits.shape(), (Shape{1, 1, 6}));
  const auto map = out.attention_map(1);
  EXPECT_EQ(map.layers, 2u);
  EXPECT_EQ(map.steps, 4u);
  EXPECT_EQ(map.sources, 5u);
}

TEST(Decode, Errors) {
  Tiny t;
  std::mt19937_64 rng(9);
  const auto src = t.model.source(random_tensor({5, 4}, rng));
  const std::vector<int> unknown{1, 9};
  EXPECT_THROW(t.model.decode(unknown, 1, src), ShapeError);
  const std::vector<int> too_long(33, 1);
  EXPECT_THROW(t.model.decode(too_long, 1, src), ShapeError);
  const std::vector<int> two{1, 3};
  EXPECT_THROW(t.model.decode(two, 2, src), ShapeError);
}

TEST(Decode, Causality) {
  Tiny t;
  std::mt19937_64 rng(10);
  const auto src = t.model.source(random_tensor({5, 4}, rng));
  const std::vector<int> base{1, 3, 4, 5, 3, 4};
  const auto ref = t.model.decode(base, 1, src).logits;
  for (std::size_t j = 1; j < base.size(); ++j) {
    auto changed = base;
    changed[j] = changed[j] == 5 ? 3 : 5;
    const auto out = t.model.decode(changed, 1, src).logits;
    for (std::size_t row = 0; row < j; ++row) {
      for (std::size_t v = 0; v < 6; ++v) EXPECT_EQ(out[row * 6 + v], ref[row * 6 + v]);
    }
    double diff = 0.0;
    for (std::size_t v = 0; v < 6; ++v) diff += std::abs(out[j * 6 + v] - ref[j * 6 + v]);
    EXPECT_GT(diff, 0.0);
  }
}

TEST(Decode, AttentionIsLayerwise) {
  Tiny t;
  std::mt19937_64 rng(11);
  const auto src = t.model.source(random_tensor({5, 4}, rng));
  const std::vector<int> inputs{1, 3, 4};
  const auto before = t.model.decode(inputs, 1, src);
  for (const char* name : {"seq2seq.decoder.layer1.attn.weight", "seq2seq.decoder.layer1.attn.bias"}) {
    for (auto& v : t.store.at(name).tensor.mutable_data()) v = 0.0;
  }
  const auto after = t.model.decode(inputs, 1, src);
  for (std::size_t i = 0; i < before.attention[0].size(); ++i) {
    EXPECT_EQ(before.attention[0][i], after.attention[0][i]);
  }
  double diff = 0.0;
  for (std::size_t i = 0; i < before.logits.size(); ++i) {
    diff += std::abs(before.logits[i] - after.logits[i]);
  }
  EXPECT_GT(diff, 0.0);
}

TEST(Decode, Deterministic) {
  Tiny a, b;
  std::mt19937_64 ra(12), rb(12);
  const auto fa = random_tensor({5, 4}, ra), fb = random_tensor({5, 4}, rb);
  const std::vector<int> inputs{1, 3, 4};
  const auto la = a.model.decode(inputs, 1, a.model.source(fa)).logits;
  const auto lb = b.model.decode(inputs, 1, b.model.source(fb)).logits;
  for (std::size_t i = 0; i < la.size(); ++i) EXPECT_EQ(la[i], lb[i]);
}

TEST(Decode, GradientCheckTinyConfig) {
  Tiny t;
  std::mt19937_64 rng(13);
  const auto feats = random_tensor({1, 5, 4}, rng);
  const std::vector<int> inputs{1, 3, 4, 5};
  const std::vector<int> targets{3, 4, 5, 2};
  // Some layer-1 gradients are near 1e-7; a wider step keeps the central
  // difference above roundoff for them.
  GradCheckOptions opts;
  opts.eps = 1e-4;
  const auto r = finite_diff_check<double>(
      [&]() { return nll_loss(t.model.decode(inputs, 1, t.model.source(feats)).logits, targets); },
      t.store, opts);
  EXPECT_LT(r.max_rel_error, 1e-4) << t.store.params()[r.worst_tensor].name << "[" << r.worst_index
                                   << "] analytic " << r.analytic << " numeric " << r.numeric;
  EXPECT_EQ(r.checked, t.store.scalar_count());
}

TEST(Dropout, TrainingModeIsStochasticEvalIsNot) {
  auto cfg = tiny_config();
  cfg.dropout = 0.3;
  Tiny t(cfg);
  std::mt19937_64 rng(14);
  const auto feats = random_tensor({5, 4}, rng);
  const std::vector<int> inputs{1, 3};
  const auto eval1 = t.model.decode(inputs, 1, t.model.source(feats)).logits;
  const auto eval2 = t.model.decode(inputs, 1, t.model.source(feats)).logits;
  for (std::size_t i = 0; i < eval1.size(); ++i) EXPECT_EQ(eval1[i], eval2[i]);
  t.model.set_training(true);
  const auto tr = t.model.decode(inputs, 1, t.model.source(feats)).logits;
  double diff = 0.0;
  for (std::size_t i = 0; i < tr.size(); ++i) diff += std::abs(tr[i] - eval1[i]);
  EXPECT_GT(diff, 0.0);
}

TEST(TeacherBatch, ShiftsAndPads) {
  const Vocabulary vocab("AB");
  const std::vector<std::string> labels{"AB", "B"};
  const auto tb = make_teacher_batch(vocab, labels, 32);
  EXPECT_EQ(tb.steps, 3u);
  EXPECT_EQ(tb.inputs, (std::vector<int>{1, 3, 4, 1, 4, 0}));
  EXPECT_EQ(tb.targets, (std::vector<int>{3, 4, 2, 4, 2, 0}));
  const std::vector<std::string> empty{""};
  EXPECT_THROW(make_teacher_batch(vocab, empty, 32), DataError);
  const std::vector<std::string> long_label{std::string(32, 'A')};
  EXPECT_THROW(make_teacher_batch(vocab, long_label, 32), DataError);
}

TEST(Vocabulary, LayoutAndCodec) {
  const Vocabulary v;
  EXPECT_EQ(v.size(), 39u);
  EXPECT_EQ(v.index_of('0'), 3);
  EXPECT_EQ(v.index_of('Z'), 38);
  EXPECT_EQ(v.decode(v.encode("HELLO42")), "HELLO42");
  EXPECT_THROW(v.index_of('a'), DataError);
  EXPECT_THROW(Vocabulary("AA"), DataError);
  EXPECT_THROW(Vocabulary(""), DataError);
}

}  // namespace
}  // namespace scan
