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

// Command-line front end. Requires CLI11 on the include path.
//
// Exit codes: 0 success, 1 usage error, 2 data or model error.

#pragma once

#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <iomanip>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "scan/checkpoint.hpp"
#include "scan/dataset.hpp"
#include "scan/heatmap.hpp"
#include "scan/training.hpp"

namespace scan {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// "digits", "alnum", or a literal list of symbols.
inline std::string resolve_charset(const std::string& name) {
  if (name == "digits") return digit_charset();
  if (name == "alnum") return default_charset();
  if (name.empty()) throw UsageError("empty charset");
  return name;
}

inline std::vector<int> parse_scales(const std::string& text) {
  std::vector<int> scales;
  std::istringstream is(text);
  std::string item;
  while (std::getline(is, item, ',')) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(item, &used);
    } catch (const std::logic_error&) {
      throw UsageError("bad --scales entry '" + item + "'");
    }
    if (used != item.size() || v < 2) throw UsageError("bad --scales entry '" + item + "'");
    scales.push_back(v);
  }
  if (scales.empty()) throw UsageError("--scales needs at least one width");
  return scales;
}

namespace detail {

inline std::unique_ptr<ScanModel<float>> load_model(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  auto model = std::make_unique<ScanModel<float>>(decode_checkpoint_config(bytes));
  decode_checkpoint(bytes, *model);
  model->set_training(false);
  return model;
}

}  // namespace detail

/// Runs one CLI invocation. `argv[0]` is the program name.
inline int run_cli(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sliding-window convolutional text-line recognizer", "scan"};
  app.require_subcommand(1);

  struct {
    std::filesystem::path out;
    std::size_t count = 2000, min_len = 1, max_len = 6;
    std::uint64_t seed = 0;
    std::string charset = "digits";
    bool clean = false;
  } gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Render a synthetic text-line dataset");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--count", gen.count, "Total samples (10% go to dev)")
      ->check(CLI::PositiveNumber);
  gen_cmd->add_option("--min-len", gen.min_len, "Shortest label")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--max-len", gen.max_len, "Longest label")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--seed", gen.seed, "Random seed");
  gen_cmd->add_option("--charset", gen.charset, "digits, alnum, or literal symbols");
  gen_cmd->add_flag("--clean", gen.clean, "Render without jitter or noise");

  struct {
    std::filesystem::path data, out;
    std::string preset = "desk", scales = "40", charset = "alnum";
    std::size_t epochs = 50, batch = 16, beam = 5;
    double lr = 0.0005, clip = 0.1, fraction = 1.0;
    std::optional<double> dropout, target;
    std::uint64_t seed = 0;
  } tr;
  auto* train_cmd = app.add_subcommand("train", "Train a recognizer");
  train_cmd->add_option("--data", tr.data, "Dataset directory")->required();
  train_cmd->add_option("--out", tr.out, "Checkpoint path (best dev accuracy)")->required();
  train_cmd->add_option("--preset", tr.preset, "paper or desk")
      ->check(CLI::IsMember({"paper", "desk"}));
  train_cmd->add_option("--epochs", tr.epochs, "Maximum epochs")->check(CLI::PositiveNumber);
  train_cmd->add_option("--batch", tr.batch, "Batch size")->check(CLI::PositiveNumber);
  train_cmd->add_option("--lr", tr.lr, "Adam learning rate")->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--clip", tr.clip, "Gradient norm bound")->check(CLI::PositiveNumber);
  train_cmd->add_option("--seed", tr.seed, "Random seed");
  train_cmd->add_option("--scales", tr.scales, "Comma-separated window widths");
  train_cmd->add_option("--charset", tr.charset, "digits, alnum, or literal symbols");
  train_cmd->add_option("--fraction", tr.fraction, "Share of the training set per epoch")
      ->check(CLI::Range(0.0, 1.0));
  train_cmd->add_option("--dropout", tr.dropout, "Override the preset dropout rate")
      ->check(CLI::Range(0.0, 0.99));
  train_cmd->add_option("--target", tr.target, "Stop once dev accuracy reaches this")
      ->check(CLI::Range(0.0, 1.0));
  train_cmd->add_option("--beam", tr.beam, "Beam width for dev evaluation")
      ->check(CLI::PositiveNumber);

  struct {
    std::filesystem::path ckpt, image, lexicon, heatmap;
    std::size_t beam = 5, max_len = 25;
  } rec;
  auto* rec_cmd = app.add_subcommand("recognize", "Read the text in one image");
  rec_cmd->add_option("--ckpt", rec.ckpt, "Checkpoint")->required();
  rec_cmd->add_option("--image", rec.image, "PGM (P5) image")->required();
  rec_cmd->add_option("--lexicon", rec.lexicon, "One candidate word per line");
  rec_cmd->add_option("--beam", rec.beam, "Beam width")->check(CLI::PositiveNumber);
  rec_cmd->add_option("--max-len", rec.max_len, "Longest output")->check(CLI::PositiveNumber);
  rec_cmd->add_option("--heatmap", rec.heatmap, "Write last-layer attention as PGM");

  struct {
    std::filesystem::path ckpt, data, lexicon;
    std::string split = "dev";
    std::size_t beam = 5;
  } ev;
  auto* eval_cmd = app.add_subcommand("eval", "Sequence accuracy on a dataset split");
  eval_cmd->add_option("--ckpt", ev.ckpt, "Checkpoint")->required();
  eval_cmd->add_option("--data", ev.data, "Dataset directory")->required();
  eval_cmd->add_option("--lexicon", ev.lexicon, "One candidate word per line");
  eval_cmd->add_option("--split", ev.split, "dev or train")
      ->check(CLI::IsMember({"dev", "train"}));
  eval_cmd->add_option("--beam", ev.beam, "Beam width")->check(CLI::PositiveNumber);

  std::vector<std::string> args(argv.rbegin(), argv.rend());
  if (!args.empty()) args.pop_back();
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (gen_cmd->parsed()) {
      if (gen.max_len < gen.min_len) throw UsageError("--max-len must be >= --min-len");
      const RenderJitter jitter = gen.clean ? RenderJitter::none() : RenderJitter{};
      const Dataset ds = gen_dataset(resolve_charset(gen.charset), gen.count, gen.min_len,
                                     gen.max_len, gen.seed, jitter);
      save_dataset(gen.out, ds);
      out << "wrote " << ds.train.size() << " train / " << ds.dev.size() << " dev samples to "
          << gen.out.string() << '\n';
      return kExitOk;
    }

    if (train_cmd->parsed()) {
      ModelConfig cfg = ModelConfig::make(parse_preset(tr.preset), parse_scales(tr.scales),
                                          resolve_charset(tr.charset));
      const Dataset ds = load_dataset(tr.data);
      const Vocabulary vocab(cfg.charset);
      for (const auto* split : {&ds.train, &ds.dev}) {
        for (const auto& s : *split) vocab.encode(s.label);
      }
      ScanModel<float> model(cfg, tr.seed);
      TrainConfig tc;
      tc.lr = tr.lr;
      tc.clip_norm = tr.clip;
      tc.batch_size = tr.batch;
      tc.epochs = tr.epochs;
      tc.epoch_fraction = tr.fraction;
      tc.dropout = tr.dropout;
      tc.target_accuracy = tr.target;
      tc.seed = tr.seed;
      tc.beam = tr.beam;
      tc.checkpoint = tr.out;
      out << "parameters " << model.parameters().scalar_count() << '\n';
      const auto report = train_loop<float>(model, ds.train, ds.dev, tc, [&](const EpochStats& s) {
        out << "epoch " << s.epoch << "  steps " << s.steps << "  loss " << std::fixed
            << std::setprecision(4) << s.mean_loss << "  dev " << s.dev_accuracy << "  "
            << std::setprecision(1) << s.seconds << "s" << std::defaultfloat << std::endl;
      });
      out << "best dev accuracy " << std::fixed << std::setprecision(4) << report.best_accuracy
          << " at epoch " << report.best_epoch << std::defaultfloat << '\n';
      return kExitOk;
    }

    if (rec_cmd->parsed()) {
      const auto model = detail::load_model(rec.ckpt);
      std::vector<std::string> lexicon;
      if (!rec.lexicon.empty()) lexicon = load_lexicon(rec.lexicon);
      const Recognition r = recognize(*model, read_pgm(rec.image), rec.beam,
                                      lexicon.empty() ? nullptr : &lexicon, rec.max_len);
      out << r.text << '\n';
      if (!rec.heatmap.empty()) {
        export_heatmap(r.attention, r.attention.layers - 1, r.centers, rec.heatmap);
      }
      return kExitOk;
    }

    if (eval_cmd->parsed()) {
      const auto model = detail::load_model(ev.ckpt);
      const Dataset ds = load_dataset(ev.data);
      const auto& samples = ev.split == "dev" ? ds.dev : ds.train;
      if (samples.empty()) throw DataError("split '" + ev.split + "' is empty");
      std::vector<std::string> lexicon;
      if (!ev.lexicon.empty()) lexicon = load_lexicon(ev.lexicon);
      const double acc = sequence_accuracy(*model, std::span<const Sample>(samples), ev.beam,
                                           lexicon.empty() ? nullptr : &lexicon);
      out << "accuracy " << std::fixed << std::setprecision(4) << acc << std::defaultfloat
          << " (" << samples.size() << " samples)\n";
      return kExitOk;
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ShapeError& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::invalid_argument& e) {
    // Bad preset names and similar configuration values.
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}

inline int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  return run_cli(std::vector<std::string>(argv, argv + argc), out, err);
}

}  // namespace scan
