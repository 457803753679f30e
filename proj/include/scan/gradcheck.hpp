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
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "scan/parameters.hpp"
#include "scan/tensor.hpp"

namespace scan {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  // Location of the worst disagreement.
  std::size_t worst_tensor = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradCheckOptions {
  double eps = 1e-5;
  // 0 checks every scalar; otherwise a seeded uniform sample of this size.
  std::size_t samples = 0;
  std::uint64_t seed = 0;
};

/// Compares reverse-mode gradients of `objective` against central finite
/// differences. `objective` must rebuild the scalar loss from the current
/// parameter values on every call and be deterministic; a stochastic
/// objective (e.g. dropout left on) is rejected with std::logic_error.
/// Existing gradients of `params` are overwritten.
template <typename T, typename Objective>
GradCheckResult finite_diff_check(Objective&& objective, std::vector<Tensor<T>> params,
                                  const GradCheckOptions& opts = {}) {
  for (auto& p : params) p.zero_grad();
  const Tensor<T> loss = objective();
  const T base = loss.item();
  backward(loss);

  std::vector<std::vector<T>> analytic;
  for (const auto& p : params) {
    if (p.has_grad()) {
      analytic.emplace_back(p.grad().begin(), p.grad().end());
    } else {
      analytic.emplace_back(p.size(), T(0));
    }
  }

  auto evaluate = [&]() {
    NoGradGuard guard;
    return static_cast<double>(objective().item());
  };
  if (static_cast<double>(base) != evaluate()) {
    throw std::logic_error(
        "finite_diff_check: objective is not deterministic (is dropout enabled?)");
  }

  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t t = 0; t < params.size(); ++t) {
    for (std::size_t i = 0; i < params[t].size(); ++i) coords.emplace_back(t, i);
  }
  if (opts.samples != 0 && opts.samples < coords.size()) {
    std::mt19937_64 rng(opts.seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(opts.samples);
  }

  GradCheckResult result;
  for (const auto& [t, i] : coords) {
    auto values = params[t].mutable_data();
    const T original = values[i];
    values[i] = static_cast<T>(original + opts.eps);
    const double plus = evaluate();
    values[i] = static_cast<T>(original - opts.eps);
    const double minus = evaluate();
    values[i] = original;

    const double numeric = (plus - minus) / (2.0 * opts.eps);
    const double a = analytic[t][i];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    const double err = std::abs(a - numeric) / denom;
    ++result.checked;
    if (err > result.max_rel_error || result.checked == 1) {
      result.max_rel_error = std::max(result.max_rel_error, err);
      result.worst_tensor = t;
      result.worst_index = i;
      result.analytic = a;
      result.numeric = numeric;
    }
  }
  return result;
}

template <typename T, typename Objective>
GradCheckResult finite_diff_check(Objective&& objective, ParameterStore<T>& store,
                                  const GradCheckOptions& opts = {}) {
  std::vector<Tensor<T>> params;
  for (auto& p : store.params()) params.push_back(p.tensor);
  return finite_diff_check<T>(std::forward<Objective>(objective), std::move(params), opts);
}

}  // namespace scan
