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
#include <filesystem>
#include <fstream>
#include <random>
#include <regex>
#include <sstream>

#include <gtest/gtest.h>

#include "scan/checkpoint.hpp"
#include "scan/cli.hpp"
#include "scan/dataset.hpp"
#include "scan/heatmap.hpp"
#include "scan/render.hpp"

#ifndef SCAN_TEST_DATA_DIR
#error "SCAN_TEST_DATA_DIR must point at tests/data"
#endif

namespace scan {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() /
            ("scan_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

TEST(Render, DeterministicAndWidening) {
  const auto a = render_textline("4711", 5);
  const auto b = render_textline("4711", 5);
  EXPECT_EQ(a.pixels, b.pixels);
  EXPECT_EQ(a.height, 32u);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    EXPECT_LT(render_textline("12", seed).width, render_textline("123", seed).width);
  }
  for (double v : a.pixels) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_THROW(render_textline("a", 0), DataError);
  EXPECT_THROW(render_textline("", 0), DataError);
}

TEST(Render, EveryDefaultSymbolHasAGlyph) {
  for (char c : default_charset()) EXPECT_NE(find_glyph(c), nullptr) << c;
}

TEST(Render, GlyphAMatchesGoldenFile) {
  const auto img = render_textline("A", 0, RenderJitter::none());
  const std::string golden = slurp(fs::path(SCAN_TEST_DATA_DIR) / "render_A.pgm");
  ASSERT_FALSE(golden.empty());
  EXPECT_EQ(encode_pgm(img), golden);
  // Clean rendering: 24 px glyph rows 4..27 of a 32 px canvas.
  double ink_top = 0.0, ink_body = 0.0;
  for (std::size_t x = 0; x < img.width; ++x) {
    ink_top += img.at(2, x);
    ink_body += img.at(16, x);
  }
  EXPECT_EQ(ink_top, 0.0);
  EXPECT_GT(ink_body, 0.0);
}

TEST(Pgm, RoundTripAndErrors) {
  RawImage img(3, 4);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = i / 11.0;
  const auto back = decode_pgm(encode_pgm(img));
  EXPECT_EQ(back.height, 3u);
  EXPECT_EQ(back.width, 4u);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    EXPECT_LE(std::abs(back.pixels[i] - img.pixels[i]), 0.5 / 255.0 + 1e-12);
  }
  EXPECT_THROW(decode_pgm("P2\n1 1\n255\n0"), DataError);
  EXPECT_THROW(decode_pgm("P5\n2 2\n255\n\x01"), DataError);
  const auto commented = decode_pgm(std::string("P5\n# note\n1 1\n255\n") + char(255));
  EXPECT_EQ(commented.pixels[0], 1.0);
}

TEST(Dataset, SplitAndDeterminism) {
  const auto a = gen_dataset(digit_charset(), 200, 2, 5, 3);
  EXPECT_EQ(a.train.size(), 180u);
  EXPECT_EQ(a.dev.size(), 20u);
  const auto b = gen_dataset(digit_charset(), 200, 2, 5, 3);
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    EXPECT_EQ(a.train[i].label, b.train[i].label);
    EXPECT_EQ(a.train[i].image.pixels, b.train[i].image.pixels);
  }
  for (const auto* split : {&a.train, &a.dev}) {
    for (const auto& s : *split) {
      EXPECT_GE(s.label.size(), 2u);
      EXPECT_LE(s.label.size(), 5u);
      for (char c : s.label) EXPECT_NE(digit_charset().find(c), std::string::npos);
    }
  }
  EXPECT_THROW(gen_dataset(digit_charset(), 10, 3, 2, 0), DataError);
  EXPECT_THROW(gen_dataset("", 10, 1, 2, 0), DataError);
}

TEST(Dataset, FullSizeSplit) {
  const auto ds = gen_dataset(digit_charset(), 2000, 1, 6, 1, RenderJitter::none());
  EXPECT_EQ(ds.train.size(), 1800u);
  EXPECT_EQ(ds.dev.size(), 200u);
}

TEST(Dataset, RoundTrip) {
  TempDir dir;
  const auto ds = gen_dataset(default_charset(), 30, 1, 6, 4);
  save_dataset(dir.path(), ds);
  std::ifstream manifest(dir.path() / "train.tsv");
  std::size_t lines = 0;
  for (std::string line; std::getline(manifest, line);) ++lines;
  EXPECT_EQ(lines, ds.train.size());
  const auto back = load_dataset(dir.path());
  ASSERT_EQ(back.train.size(), ds.train.size());
  ASSERT_EQ(back.dev.size(), ds.dev.size());
  for (std::size_t i = 0; i < ds.train.size(); ++i) {
    EXPECT_EQ(back.train[i].label, ds.train[i].label);
    const auto& p = ds.train[i].image.pixels;
    const auto& q = back.train[i].image.pixels;
    ASSERT_EQ(p.size(), q.size());
    for (std::size_t k = 0; k < p.size(); ++k) EXPECT_LE(std::abs(p[k] - q[k]), 1.0 / 255.0);
  }
}

TEST(Dataset, MalformedManifest) {
  TempDir dir;
  std::ofstream(dir.path() / "train.tsv") << "no-tab-here\n";
  std::ofstream(dir.path() / "dev.tsv") << "";
  EXPECT_THROW(load_dataset(dir.path()), DataError);
  EXPECT_THROW(load_dataset(dir.path() / "missing"), DataError);
}

TEST(Lexicon, LoadsUppercased) {
  TempDir dir;
  std::ofstream(dir.path() / "lex.txt") << "hello\n\n  World \r\n";
  EXPECT_EQ(load_lexicon(dir.path() / "lex.txt"), (std::vector<std::string>{"HELLO", "WORLD"}));
  std::ofstream(dir.path() / "empty.txt") << "\n";
  EXPECT_THROW(load_lexicon(dir.path() / "empty.txt"), DataError);
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  TempDir dir;
  ScanModel<float> a(ModelConfig::make(Preset::desk, {32, 40, 48}), 1);
  save_checkpoint(dir.path() / "a.ckpt", a);
  ScanModel<float> b(read_checkpoint_config(dir.path() / "a.ckpt"), 2);
  load_checkpoint(dir.path() / "a.ckpt", b);
  save_checkpoint(dir.path() / "b.ckpt", b);
  EXPECT_EQ(slurp(dir.path() / "a.ckpt"), slurp(dir.path() / "b.ckpt"));
  const auto& pa = a.parameters().params();
  const auto& pb = b.parameters().params();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i].name, pb[i].name);
    EXPECT_TRUE(std::equal(pa[i].tensor.data().begin(), pa[i].tensor.data().end(),
                           pb[i].tensor.data().begin()));
  }
}

TEST(Checkpoint, RejectsCorruptionAndMismatch) {
  ScanModel<float> model(ModelConfig::make(Preset::desk), 3);
  std::string bytes = encode_checkpoint(model);
  std::string corrupt = bytes;
  corrupt[corrupt.size() / 2] ^= 0x5A;
  EXPECT_THROW(decode_checkpoint(corrupt, model), ModelError);
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 9), model), ModelError);
  EXPECT_THROW(decode_checkpoint("JUNKJUNKJUNKJUNK", model), ModelError);

  auto cfg = ModelConfig::make(Preset::desk);
  cfg.seq.d_hidden = 64;
  ScanModel<float> other(cfg, 4);
  EXPECT_THROW(decode_checkpoint(bytes, other), ModelError);
  ScanModel<float> digits(ModelConfig::make(Preset::desk, {40}, digit_charset()), 5);
  EXPECT_THROW(decode_checkpoint(bytes, digits), ModelError);
}

TEST(Checkpoint, ConfigRoundTrip) {
  const auto cfg = ModelConfig::make(Preset::paper, {32, 40, 48}, "0123");
  const auto back = parse_config(serialize_config(cfg));
  EXPECT_TRUE(back.same_architecture(cfg));
  EXPECT_EQ(back.windows.scales, cfg.windows.scales);
  EXPECT_EQ(back.charset, "0123");
}

AttentionMap map_of(std::size_t steps, std::size_t sources, std::vector<double> w) {
  AttentionMap m;
  m.layers = 1;
  m.steps = steps;
  m.sources = sources;
  m.weights = std::move(w);
  return m;
}

TEST(Heatmap, UniformIsConstantGray) {
  const auto m = map_of(2, 4, std::vector<double>(8, 0.25));
  const std::vector<double> centers{16, 20, 24, 28};
  const auto img = attention_heatmap(m, 0, centers);
  EXPECT_EQ(img.height, 2u);
  EXPECT_EQ(img.width, 4u);
  for (double v : img.pixels) EXPECT_EQ(v, 0.25);
}

TEST(Heatmap, OneHotRowsAndCenterOrder) {
  // Columns arrive out of centre order; the image sorts them.
  const auto m = map_of(3, 3, {0, 1, 0, 1, 0, 0, 0, 0, 1});
  const std::vector<double> centers{24, 16, 20};
  TempDir dir;
  export_heatmap(m, 0, centers, dir.path() / "h.pgm");
  const auto img = read_pgm(dir.path() / "h.pgm");
  EXPECT_EQ(img.height, 3u);
  EXPECT_EQ(img.width, 3u);
  const std::vector<double> expected{1, 0, 0, 0, 0, 1, 0, 1, 0};
  EXPECT_EQ(img.pixels, expected);
  EXPECT_EQ(attention_peaks(m, 0, centers), (std::vector<double>{16, 24, 20}));
  EXPECT_THROW(attention_heatmap(m, 1, centers), ShapeError);
  const std::vector<double> two{1, 2};
  EXPECT_THROW(attention_heatmap(m, 0, two), ShapeError);
}

int cli(std::vector<std::string> args, std::string* out = nullptr, std::string* err = nullptr) {
  args.insert(args.begin(), "scan");
  std::ostringstream o, e;
  const int code = run_cli(args, o, e);
  if (out) *out = o.str();
  if (err) *err = e.str();
  return code;
}

TEST(Cli, UsageErrors) {
  std::string out, err;
  EXPECT_EQ(cli({}, &out, &err), kExitUsage);
  EXPECT_NE(err.find("Usage"), std::string::npos);
  EXPECT_EQ(cli({"bogus"}), kExitUsage);
  EXPECT_EQ(cli({"gen-data"}), kExitUsage);
  EXPECT_EQ(cli({"gen-data", "--out", "x", "--count", "abc"}), kExitUsage);
  EXPECT_EQ(cli({"train", "--data", "d", "--out", "o", "--preset", "huge"}), kExitUsage);
  EXPECT_EQ(cli({"gen-data", "--out", "x", "--min-len", "5", "--max-len", "2"}), kExitUsage);
  EXPECT_EQ(cli({"--help"}, &out), kExitOk);
  EXPECT_NE(out.find("recognize"), std::string::npos);
}

TEST(Cli, DataAndModelErrors) {
  TempDir dir;
  EXPECT_EQ(cli({"eval", "--ckpt", (dir.path() / "none.ckpt").string(), "--data",
                 dir.path().string()}),
            kExitData);
  EXPECT_EQ(cli({"train", "--data", (dir.path() / "none").string(), "--out",
                 (dir.path() / "m.ckpt").string()}),
            kExitData);
  std::ofstream(dir.path() / "bad.ckpt") << "not a checkpoint";
  EXPECT_EQ(cli({"recognize", "--ckpt", (dir.path() / "bad.ckpt").string(), "--image",
                 (dir.path() / "x.pgm").string()}),
            kExitData);
}

TEST(Cli, GenDataEvalRecognize) {
  TempDir dir;
  const auto data = dir.path() / "data";
  std::string out;
  ASSERT_EQ(cli({"gen-data", "--out", data.string(), "--count", "20", "--min-len", "1",
                 "--max-len", "3", "--seed", "5"},
                &out),
            kExitOk);
  EXPECT_TRUE(fs::exists(data / "train.tsv"));
  EXPECT_TRUE(fs::exists(data / "dev.tsv"));
  EXPECT_EQ(load_dataset(data).dev.size(), 2u);

  const auto ckpt = dir.path() / "model.ckpt";
  ScanModel<float> model(ModelConfig::make(Preset::desk, {40}, digit_charset()), 1);
  save_checkpoint(ckpt, model);
  ASSERT_EQ(cli({"eval", "--ckpt", ckpt.string(), "--data", data.string(), "--beam", "2"}, &out),
            kExitOk);
  EXPECT_TRUE(std::regex_search(out, std::regex(R"(^accuracy [01]\.\d{4} )")));

  write_pgm(dir.path() / "img.pgm", render_textline("42", 3));
  const auto heat = dir.path() / "heat.pgm";
  ASSERT_EQ(cli({"recognize", "--ckpt", ckpt.string(), "--image",
                 (dir.path() / "img.pgm").string(), "--beam", "2", "--heatmap", heat.string()},
                &out),
            kExitOk);
  EXPECT_EQ(out.back(), '\n');
  const auto h = read_pgm(heat);
  EXPECT_EQ(h.width, 57u);
  EXPECT_GE(h.height, 1u);

  std::ofstream(dir.path() / "lex.txt") << "42\n777\n";
  ASSERT_EQ(cli({"recognize", "--ckpt", ckpt.string(), "--image",
                 (dir.path() / "img.pgm").string(), "--lexicon",
                 (dir.path() / "lex.txt").string()},
                &out),
            kExitOk);
  EXPECT_TRUE(out == "42\n" || out == "777\n") << out;
}

TEST(Cli, TrainIsReproducible) {
  TempDir dir;
  const auto data = dir.path() / "data";
  ASSERT_EQ(cli({"gen-data", "--out", data.string(), "--count", "12", "--max-len", "2"}),
            kExitOk);
  for (const char* name : {"a.ckpt", "b.ckpt"}) {
    ASSERT_EQ(cli({"train", "--data", data.string(), "--out", (dir.path() / name).string(),
                   "--epochs", "1", "--batch", "8", "--charset", "digits", "--seed", "3",
                   "--beam", "1"}),
              kExitOk);
  }
  EXPECT_EQ(slurp(dir.path() / "a.ckpt"), slurp(dir.path() / "b.ckpt"));
}

}  // namespace
}  // namespace scan
