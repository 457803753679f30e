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
#include <limits>
#include <stdexcept>

#include "scan/parameters.hpp"

namespace scan {

struct AdamConfig {
  double lr = 0.0005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update of every parameter in the store.
template <typename T>
void adam_step(ParameterStore<T>& store, const AdamConfig& cfg) {
  for (auto& p : store.params()) {
    if (!p.tensor.has_grad()) {
      throw std::logic_error("adam_step: parameter '" + p.name + "' has no gradient");
    }
  }
  for (auto& p : store.params()) {
    ++p.step;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(p.step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(p.step));
    auto w = p.tensor.mutable_data();
    auto g = p.tensor.grad();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i];
      const double m = cfg.beta1 * p.first_moment[i] + (1.0 - cfg.beta1) * gi;
      const double v = cfg.beta2 * p.second_moment[i] + (1.0 - cfg.beta2) * gi * gi;
      p.first_moment[i] = static_cast<T>(m);
      p.second_moment[i] = static_cast<T>(v);
      const double m_hat = m / c1;
      const double v_hat = v / c2;
      w[i] = static_cast<T>(w[i] - cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps));
    }
  }
}

template <typename T>
double grad_norm(const ParameterStore<T>& store) {
  double sq = 0.0;
  for (const auto& p : store.params()) {
    for (T g : p.tensor.grad()) sq += static_cast<double>(g) * g;
  }
  return std::sqrt(sq);
}

/// Rescales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm measured before clipping.
template <typename T>
double clip_grad_norm(ParameterStore<T>& store, double max_norm) {
  const double norm = grad_norm(store);
  // Slack keeps a second call from rescaling by a rounding-level factor.
  if (norm > max_norm * (1.0 + 1000.0 * std::numeric_limits<T>::epsilon())) {
    const double factor = max_norm / norm;
    for (auto& p : store.params()) {
      if (!p.tensor.has_grad()) continue;
      for (T& g : p.tensor.mutable_grad()) g = static_cast<T>(g * factor);
    }
  }
  return norm;
}

}  // namespace scan
