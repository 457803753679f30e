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
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "scan/errors.hpp"
#include "scan/model.hpp"

namespace scan {

struct Hypothesis {
  std::vector<int> tokens;  // excludes <s>; ends with </s> when finished
  double logprob = 0.0;
  bool finished = false;

  /// Log-likelihood divided by the token count (including </s>), floored at 1.
  double normalized_score() const {
    return logprob / static_cast<double>(std::max<std::size_t>(1, tokens.size()));
  }
};

/// Log-probabilities over the whole vocabulary for the token after `prefix`.
using NextTokenScorer = std::function<std::vector<double>(std::span<const int> prefix)>;

struct BeamOptions {
  std::size_t beam = 5;
  std::size_t max_len = 25;
  int eos = Vocabulary::kEos;
  // Tokens never proposed (<s>, <pad>).
  std::vector<int> banned{Vocabulary::kPad, Vocabulary::kBos};
};

/// Beam search with length-normalized final ranking.
///
/// Every live hypothesis is expanded over all allowed tokens; the K best
/// expansions by accumulated log-probability survive, and those ending in
/// </s> leave the beam for the complete set. The search stops once K
/// hypotheses are complete, the beam empties, or max_len tokens have been
/// emitted; hypotheses still live at max_len are kept as unfinished
/// candidates. Candidates are ranked by normalized_score().
inline std::vector<Hypothesis> beam_search(const NextTokenScorer& scorer,
                                           std::size_t vocab_size, const BeamOptions& opts) {
  if (opts.beam < 1) throw std::invalid_argument("beam_search: beam width must be >= 1");
  if (opts.max_len < 1) throw std::invalid_argument("beam_search: max_len must be >= 1");
  std::vector<bool> allowed(vocab_size, true);
  for (int b : opts.banned) {
    if (b >= 0 && static_cast<std::size_t>(b) < vocab_size) allowed[b] = false;
  }

  struct Candidate {
    std::size_t parent;
    int token;
    double logprob;
  };

  std::vector<Hypothesis> live{Hypothesis{}};
  std::vector<Hypothesis> complete;
  for (std::size_t step = 0; step < opts.max_len && !live.empty(); ++step) {
    std::vector<Candidate> candidates;
    for (std::size_t h = 0; h < live.size(); ++h) {
      const auto logp = scorer(live[h].tokens);
      if (logp.size() != vocab_size) {
        throw ShapeError("beam_search: scorer returned " + std::to_string(logp.size()) +
                         " scores for a vocabulary of " + std::to_string(vocab_size));
      }
      for (std::size_t t = 0; t < vocab_size; ++t) {
        if (!allowed[t] || !std::isfinite(logp[t])) continue;
        candidates.push_back({h, static_cast<int>(t), live[h].logprob + logp[t]});
      }
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Candidate& a, const Candidate& b) { return a.logprob > b.logprob; });
    if (candidates.size() > opts.beam) candidates.resize(opts.beam);

    std::vector<Hypothesis> next;
    for (const auto& c : candidates) {
      Hypothesis hyp = live[c.parent];
      hyp.tokens.push_back(c.token);
      hyp.logprob = c.logprob;
      if (c.token == opts.eos) {
        hyp.finished = true;
        complete.push_back(std::move(hyp));
      } else {
        next.push_back(std::move(hyp));
      }
    }
    live = std::move(next);
    if (complete.size() >= opts.beam) break;
  }
  if (complete.size() < opts.beam) {
    for (auto& h : live) complete.push_back(std::move(h));
  }

  std::stable_sort(complete.begin(), complete.end(), [](const Hypothesis& a, const Hypothesis& b) {
    return a.normalized_score() > b.normalized_score();
  });
  if (complete.size() > opts.beam) complete.resize(opts.beam);
  return complete;
}

/// Beam search over a trained recognizer for one encoded image.
template <typename T>
std::vector<Hypothesis> beam_search(const ScanModel<T>& model,
                                    const SourceRepresentation<T>& src, std::size_t beam,
                                    std::size_t max_len = 25) {
  if (src.batch() != 1) throw ShapeError("beam_search: expected a single encoded image");
  BeamOptions opts;
  opts.beam = beam;
  opts.max_len = std::min(max_len, model.max_label_length() + 1);
  return beam_search(
      [&](std::span<const int> prefix) { return model.next_log_probs(src, prefix); },
      model.vocab().size(), opts);
}

/// Unit-cost edit distance (insert, delete, substitute).
inline std::size_t levenshtein(std::string_view a, std::string_view b) {
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diagonal = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t above = row[j];
      const std::size_t substitute = diagonal + (a[i - 1] == b[j - 1] ? 0 : 1);
      row[j] = std::min({above + 1, row[j - 1] + 1, substitute});
      diagonal = above;
    }
  }
  return row[b.size()];
}

inline std::string to_upper(std::string s) {
  for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

/// Picks the lexicon word closest (in edit distance) to any hypothesis.
/// Ties go to the hypothesis with the higher normalized score, then to the
/// lexicographically smaller word. Matching is case-insensitive.
inline std::string lexicon_select(std::span<const Hypothesis> hyps, const Vocabulary& vocab,
                                  std::span<const std::string> lexicon) {
  if (hyps.empty()) throw std::invalid_argument("lexicon_select: no hypotheses");
  if (lexicon.empty()) throw std::invalid_argument("lexicon_select: empty lexicon");
  const std::string* best_word = nullptr;
  std::size_t best_distance = std::numeric_limits<std::size_t>::max();
  double best_score = -std::numeric_limits<double>::infinity();
  std::string best_upper;
  for (const auto& hyp : hyps) {
    const std::string text = to_upper(vocab.decode(hyp.tokens));
    const double score = hyp.normalized_score();
    for (const auto& word : lexicon) {
      const std::string upper = to_upper(word);
      const std::size_t d = levenshtein(text, upper);
      const bool better =
          best_word == nullptr || d < best_distance ||
          (d == best_distance &&
           (score > best_score || (score == best_score && upper < best_upper)));
      if (better) {
        best_word = &word;
        best_distance = d;
        best_score = score;
        best_upper = upper;
      }
    }
  }
  return *best_word;
}

/// One word per line; blank lines skipped; words uppercased.
inline std::vector<std::string> load_lexicon(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open lexicon " + path.string());
  std::vector<std::string> words;
  std::string line;
  while (std::getline(is, line)) {
    while (!line.empty() && (line.back() == '\r' || std::isspace(static_cast<unsigned char>(
                                                        line.back())))) {
      line.pop_back();
    }
    std::size_t start = 0;
    while (start < line.size() && std::isspace(static_cast<unsigned char>(line[start]))) ++start;
    if (start < line.size()) words.push_back(to_upper(line.substr(start)));
  }
  if (words.empty()) throw DataError("lexicon " + path.string() + " is empty");
  return words;
}

}  // namespace scan
