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

#include <cstddef>

#include <Eigen/Core>

namespace scan::detail {

// C[M,N] (+)= op(A) * op(B), all row-major. A is stored [M,K] (or [K,M]
// when trans_a), B is stored [K,N] (or [N,K] when trans_b).
template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t M, std::size_t N, std::size_t K,
          const T* A, const T* B, T* C, bool accumulate) {
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Idx = Eigen::Index;
  Eigen::Map<const Mat> a(A, static_cast<Idx>(trans_a ? K : M),
                          static_cast<Idx>(trans_a ? M : K));
  Eigen::Map<const Mat> b(B, static_cast<Idx>(trans_b ? N : K),
                          static_cast<Idx>(trans_b ? K : N));
  Eigen::Map<Mat> c(C, static_cast<Idx>(M), static_cast<Idx>(N));
  if (!accumulate) c.setZero();
  if (!trans_a && !trans_b) {
    c.noalias() += a * b;
  } else if (!trans_a && trans_b) {
    c.noalias() += a * b.transpose();
  } else if (trans_a && !trans_b) {
    c.noalias() += a.transpose() * b;
  } else {
    c.noalias() += a.transpose() * b.transpose();
  }
}

}  // namespace scan::detail
