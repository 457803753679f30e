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

#include <random>

#include <gtest/gtest.h>

#include "scan/feature_extractor.hpp"
#include "scan/gradcheck.hpp"

namespace scan {
namespace {

Tensor<double> random_glimpses(std::size_t n, std::size_t channels, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  std::vector<double> v(n * 32 * 32 * channels);
  for (auto& x : v) x = dist(rng);
  return Tensor<double>({n, 32, 32, channels}, std::move(v));
}

// Independent enumeration of the desk stack: three 3x3 convs with pooling
// after each, 32 -> 16 -> 8 -> 4, then a linear map to 64.
std::size_t desk_count_by_hand(std::size_t n) {
  const std::size_t conv1 = 3 * 3 * n * 16 + 16;
  const std::size_t conv2 = 3 * 3 * 16 * 32 + 32;
  const std::size_t conv3 = 3 * 3 * 32 * 32 + 32;
  const std::size_t fc = 4 * 4 * 32 * 64 + 64;
  return conv1 + conv2 + conv3 + fc;
}

TEST(FeatureParamCount, DeskRegressionConstant) {
  EXPECT_EQ(desk_count_by_hand(1), 46880u);
  EXPECT_EQ(feature_param_count(ExtractorConfig::desk(1)), 46880u);
}

TEST(FeatureParamCount, MatchesInstantiatedStore) {
  for (const auto& cfg : {ExtractorConfig::desk(1), ExtractorConfig::desk(3),
                          ExtractorConfig::paper(1), ExtractorConfig::paper(3)}) {
    std::mt19937_64 rng(1);
    ParameterStore<float> store;
    FeatureExtractor<float> ex(cfg, store, rng);
    EXPECT_EQ(store.scalar_count(), feature_param_count(cfg));
  }
}

TEST(FeatureParamCount, StructuralDifferences) {
  auto a = ExtractorConfig::desk(1);
  auto b = a;
  b.feature_dim *= 2;
  EXPECT_EQ(feature_param_count(b) - feature_param_count(a), 4u * 4 * 32 * 64 + 64);
  const auto three = ExtractorConfig::desk(3);
  EXPECT_EQ(feature_param_count(three) - feature_param_count(a), 3u * 3 * 2 * 16);
  const auto p1 = ExtractorConfig::paper(1), p3 = ExtractorConfig::paper(3);
  EXPECT_EQ(feature_param_count(p3) - feature_param_count(p1), 3u * 3 * 2 * 32);
}

TEST(FeatureExtractor, ShapesAndFiniteness) {
  std::mt19937_64 rng(2);
  ParameterStore<double> store;
  FeatureExtractor<double> desk(ExtractorConfig::desk(3), store, rng);
  const auto y = desk.forward(random_glimpses(2, 3, 3));
  EXPECT_EQ(y.shape(), (Shape{2, 64}));
  for (double v : y.data()) EXPECT_TRUE(std::isfinite(v));
}

TEST(FeatureExtractor, FullSizePresetOnFullSequence) {
  std::mt19937_64 rng(3);
  ParameterStore<float> store;
  FeatureExtractor<float> paper(ExtractorConfig::paper(1), store, rng);
  NormalizedImage n{RawImage(32, 256, 0.3), 256};
  const auto feats = extract_features(extract_windows(n, {40}, 4), paper);
  EXPECT_EQ(feats.shape(), (Shape{57, 200}));
}

TEST(FeatureExtractor, ChannelMismatchThrows) {
  std::mt19937_64 rng(4);
  ParameterStore<double> store;
  FeatureExtractor<double> ex(ExtractorConfig::desk(1), store, rng);
  EXPECT_THROW(ex.forward(random_glimpses(1, 3, 5)), ShapeError);
  EXPECT_THROW(ex.forward(Tensor<double>({1, 16, 16, 1})), ShapeError);
}

TEST(FeatureExtractor, IdenticalWindowsGiveIdenticalRows) {
  std::mt19937_64 rng(5);
  ParameterStore<double> store;
  FeatureExtractor<double> ex(ExtractorConfig::desk(1), store, rng);
  const auto one = random_glimpses(1, 1, 6);
  std::vector<double> twice(one.data().begin(), one.data().end());
  twice.insert(twice.end(), one.data().begin(), one.data().end());
  const auto y = ex.forward(Tensor<double>({2, 32, 32, 1}, twice));
  for (std::size_t i = 0; i < 64; ++i) EXPECT_EQ(y[i], y[64 + i]);
}

TEST(FeatureExtractor, BatchDecompositionAndPermutation) {
  std::mt19937_64 rng(6);
  ParameterStore<double> store;
  FeatureExtractor<double> ex(ExtractorConfig::desk(2), store, rng);
  const std::size_t n = 5, per = 32 * 32 * 2;
  const auto batch = random_glimpses(n, 2, 7);
  const auto all = ex.forward(batch);
  const std::vector<std::size_t> perm{3, 0, 4, 1, 2};
  std::vector<double> permuted;
  for (std::size_t i = 0; i < n; ++i) {
    const auto single = Tensor<double>(
        {1, 32, 32, 2}, std::vector<double>(batch.data().begin() + i * per,
                                            batch.data().begin() + (i + 1) * per));
    const auto y = ex.forward(single);
    for (std::size_t k = 0; k < 64; ++k) EXPECT_NEAR(y[k], all[i * 64 + k], 1e-10);
    permuted.insert(permuted.end(), batch.data().begin() + perm[i] * per,
                    batch.data().begin() + (perm[i] + 1) * per);
  }
  const auto yp = ex.forward(Tensor<double>({n, 32, 32, 2}, permuted));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < 64; ++k) EXPECT_NEAR(yp[i * 64 + k], all[perm[i] * 64 + k], 1e-10);
  }
}

TEST(FeatureExtractor, GradientCheck) {
  std::mt19937_64 rng(8);
  ParameterStore<double> store;
  FeatureExtractor<double> ex(ExtractorConfig::desk(1), store, rng);
  const auto x = random_glimpses(2, 1, 9);
  GradCheckOptions opts;
  opts.samples = 300;
  opts.seed = 1;
  const auto r = finite_diff_check<double>([&]() { return sum(ex.forward(x)); }, store, opts);
  EXPECT_LT(r.max_rel_error, 1e-4);
  EXPECT_EQ(r.checked, 300u);
}

}  // namespace
}  // namespace scan
