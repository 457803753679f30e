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

#include <array>
#include <span>
#include <string>
#include <vector>

#include "scan/errors.hpp"

namespace scan {

inline const std::string& default_charset() {
  static const std::string charset = "0123456789ABCDEFGHIJKLMNOPQRSTUVWXYZ";
  return charset;
}

/// Token indices: 0 = <pad>, 1 = <s>, 2 = </s>, then the charset in order.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kFirstSymbol = 3;

  explicit Vocabulary(std::string charset = default_charset()) : charset_(std::move(charset)) {
    index_.fill(-1);
    if (charset_.empty()) throw DataError("vocabulary: empty charset");
    for (std::size_t i = 0; i < charset_.size(); ++i) {
      const auto c = static_cast<unsigned char>(charset_[i]);
      if (index_[c] != -1) throw DataError("vocabulary: duplicate symbol in charset");
      index_[c] = kFirstSymbol + static_cast<int>(i);
    }
  }

  std::size_t size() const { return charset_.size() + kFirstSymbol; }
  const std::string& charset() const { return charset_; }

  bool contains(char c) const { return index_[static_cast<unsigned char>(c)] != -1; }

  int index_of(char c) const {
    const int i = index_[static_cast<unsigned char>(c)];
    if (i < 0) throw DataError(std::string("symbol '") + c + "' is not in the charset");
    return i;
  }

  std::string symbol(int index) const {
    switch (index) {
      case kPad: return "<pad>";
      case kBos: return "<s>";
      case kEos: return "</s>";
      default: break;
    }
    if (index < kFirstSymbol || static_cast<std::size_t>(index) >= size()) {
      throw DataError("token index " + std::to_string(index) + " outside vocabulary");
    }
    return std::string(1, charset_[static_cast<std::size_t>(index - kFirstSymbol)]);
  }

  /// Tokens a decoder may emit: the charset and </s>.
  bool emittable(int index) const {
    return index == kEos ||
           (index >= kFirstSymbol && static_cast<std::size_t>(index) < size());
  }

  std::vector<int> encode(const std::string& text) const {
    std::vector<int> out;
    out.reserve(text.size());
    for (char c : text) out.push_back(index_of(c));
    return out;
  }

  /// Characters up to the first </s>; specials are dropped.
  std::string decode(std::span<const int> tokens) const {
    std::string out;
    for (int t : tokens) {
      if (t == kEos) break;
      if (t >= kFirstSymbol && static_cast<std::size_t>(t) < size()) {
        out.push_back(charset_[static_cast<std::size_t>(t - kFirstSymbol)]);
      }
    }
    return out;
  }

  bool operator==(const Vocabulary& other) const { return charset_ == other.charset_; }

 private:
  std::string charset_;
  std::array<int, 256> index_{};
};

}  // namespace scan
