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

#include <cmath>
#include <cstdint>
#include <deque>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "scan/tensor.hpp"

namespace scan {

/// A named trainable tensor plus its Adam moments.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> tensor;
  std::vector<T> first_moment;
  std::vector<T> second_moment;
  std::int64_t step = 0;
};

enum class Init {
  zeros,
  glorot,     // uniform in +-sqrt(6 / (fan_in + fan_out))
  embedding,  // uniform in +-0.1
};

/// Fan-in/fan-out for a weight tensor: the last axis is the output axis for
/// conv kernels ([k..., C_in, C_out]); linear weights are [d_out, d_in].
struct Fans {
  double in;
  double out;
};

/// Ordered, name-unique collection of parameters. References returned by
/// `add` stay valid for the store's lifetime.
template <typename T>
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;

  Tensor<T> add(const std::string& name, Shape shape, Init init, std::mt19937_64& rng,
                Fans fans = {0, 0}) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    Tensor<T> t(shape, T(0), true);
    auto values = t.mutable_data();
    if (init == Init::glorot) {
      const double limit = std::sqrt(6.0 / (fans.in + fans.out));
      std::uniform_real_distribution<double> dist(-limit, limit);
      for (auto& v : values) v = static_cast<T>(dist(rng));
    } else if (init == Init::embedding) {
      std::uniform_real_distribution<double> dist(-0.1, 0.1);
      for (auto& v : values) v = static_cast<T>(dist(rng));
    }
    index_[name] = params_.size();
    params_.push_back(Parameter<T>{name, t, std::vector<T>(t.size(), T(0)),
                                   std::vector<T>(t.size(), T(0)), 0});
    return t;
  }

  std::deque<Parameter<T>>& params() { return params_; }
  const std::deque<Parameter<T>>& params() const { return params_; }

  Parameter<T>& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
    return params_[it->second];
  }
  const Parameter<T>& at(const std::string& name) const {
    return const_cast<ParameterStore*>(this)->at(name);
  }
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.tensor.size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

 private:
  std::deque<Parameter<T>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace scan
