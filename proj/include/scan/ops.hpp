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

// Differentiable tensor operations. Every op accepts an optional leading
// batch axis where it makes sense; shapes below omit it.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "scan/gemm.hpp"
#include "scan/tensor.hpp"

namespace scan {

enum class Padding { same, causal, valid };

namespace detail {

template <typename T>
T* parent_grad(Node<T>& self, std::size_t i) {
  Node<T>& p = *self.parents[i];
  return p.requires_grad ? p.grad_buffer() : nullptr;
}

inline std::size_t leading_extent(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t i = 0; i + 1 < shape.size(); ++i) n *= shape[i];
  return n;
}

template <typename T>
bool records(std::initializer_list<Tensor<T>> inputs) {
  if (!grad_enabled()) return false;
  for (const auto& t : inputs) {
    if (t.requires_grad()) return true;
  }
  return false;
}

template <typename T>
T stable_sigmoid(T x) {
  if (x >= 0) {
    T z = std::exp(-x);
    return T(1) / (T(1) + z);
  }
  T z = std::exp(x);
  return z / (T(1) + z);
}

// Shared 2-D convolution core; conv1d runs with H = 1.
struct ConvGeometry {
  std::size_t batch, height, width, in_ch;
  std::size_t k_h, k_w, out_ch;
  std::size_t pad_top, pad_left;
  std::size_t out_h, out_w;

  std::size_t rows() const { return batch * out_h * out_w; }
  std::size_t patch() const { return k_h * k_w * in_ch; }
};

template <typename T>
void im2col(const ConvGeometry& g, const T* x, T* cols) {
  const std::size_t patch = g.patch();
  for (std::size_t n = 0; n < g.batch; ++n) {
    const T* xn = x + n * g.height * g.width * g.in_ch;
    for (std::size_t oy = 0; oy < g.out_h; ++oy) {
      for (std::size_t ox = 0; ox < g.out_w; ++ox) {
        T* row = cols + ((n * g.out_h + oy) * g.out_w + ox) * patch;
        for (std::size_t ky = 0; ky < g.k_h; ++ky) {
          const auto iy = static_cast<std::ptrdiff_t>(oy + ky) -
                          static_cast<std::ptrdiff_t>(g.pad_top);
          T* dst = row + ky * g.k_w * g.in_ch;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) {
            std::fill(dst, dst + g.k_w * g.in_ch, T(0));
            continue;
          }
          for (std::size_t kx = 0; kx < g.k_w; ++kx) {
            const auto ix = static_cast<std::ptrdiff_t>(ox + kx) -
                            static_cast<std::ptrdiff_t>(g.pad_left);
            T* d = dst + kx * g.in_ch;
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width)) {
              std::fill(d, d + g.in_ch, T(0));
            } else {
              const T* s = xn + (static_cast<std::size_t>(iy) * g.width +
                                 static_cast<std::size_t>(ix)) * g.in_ch;
              std::copy(s, s + g.in_ch, d);
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const ConvGeometry& g, const T* cols, T* dx) {
  const std::size_t patch = g.patch();
  for (std::size_t n = 0; n < g.batch; ++n) {
    T* xn = dx + n * g.height * g.width * g.in_ch;
    for (std::size_t oy = 0; oy < g.out_h; ++oy) {
      for (std::size_t ox = 0; ox < g.out_w; ++ox) {
        const T* row = cols + ((n * g.out_h + oy) * g.out_w + ox) * patch;
        for (std::size_t ky = 0; ky < g.k_h; ++ky) {
          const auto iy = static_cast<std::ptrdiff_t>(oy + ky) -
                          static_cast<std::ptrdiff_t>(g.pad_top);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
          for (std::size_t kx = 0; kx < g.k_w; ++kx) {
            const auto ix = static_cast<std::ptrdiff_t>(ox + kx) -
                            static_cast<std::ptrdiff_t>(g.pad_left);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width)) continue;
            const T* s = row + (ky * g.k_w + kx) * g.in_ch;
            T* d = xn + (static_cast<std::size_t>(iy) * g.width +
                         static_cast<std::size_t>(ix)) * g.in_ch;
            for (std::size_t c = 0; c < g.in_ch; ++c) d[c] += s[c];
          }
        }
      }
    }
  }
}

// Images per im2col block, sized so one block of columns stays cache-resident.
inline std::size_t conv_block(const ConvGeometry& g) {
  constexpr std::size_t kBlockElems = std::size_t{1} << 17;
  const std::size_t per_image = g.out_h * g.out_w * g.patch();
  return std::clamp<std::size_t>(kBlockElems / std::max<std::size_t>(per_image, 1), 1, g.batch);
}

// Columns are rebuilt block by block in the backward pass instead of being
// kept alive on the tape.
template <typename T>
Tensor<T> conv_core(const char* op, const Tensor<T>& x, const Tensor<T>& kernel,
                    const Tensor<T>& bias, const ConvGeometry& geo, Shape out_shape) {
  const std::size_t patch = geo.patch();
  const std::size_t co = geo.out_ch;
  const std::size_t in_image = geo.height * geo.width * geo.in_ch;
  const std::size_t out_image = geo.out_h * geo.out_w;
  const std::size_t block = conv_block(geo);
  std::vector<T> cols(block * out_image * patch);
  std::vector<T> out(geo.rows() * co);
  const T* b = bias.data().data();
  for (std::size_t n0 = 0; n0 < geo.batch; n0 += block) {
    ConvGeometry part = geo;
    part.batch = std::min(block, geo.batch - n0);
    im2col(part, x.data().data() + n0 * in_image, cols.data());
    T* o = out.data() + n0 * out_image * co;
    gemm(false, false, part.rows(), co, patch, cols.data(), kernel.data().data(), o, false);
    for (std::size_t r = 0; r < part.rows(); ++r) {
      for (std::size_t c = 0; c < co; ++c) o[r * co + c] += b[c];
    }
  }

  return make_result<T>(
      op, std::move(out_shape), std::move(out), {x, kernel, bias},
      [geo, block](Node<T>& self) {
        const std::size_t patch = geo.patch();
        const std::size_t co = geo.out_ch;
        const std::size_t in_image = geo.height * geo.width * geo.in_ch;
        const std::size_t out_image = geo.out_h * geo.out_w;
        const T* g = self.grad.data();
        const T* xv = self.parents[0]->data.data();
        const T* kv = self.parents[1]->data.data();
        T* dx = parent_grad(self, 0);
        T* dk = parent_grad(self, 1);
        if (T* db = parent_grad(self, 2)) {
          for (std::size_t r = 0; r < geo.rows(); ++r) {
            for (std::size_t c = 0; c < co; ++c) db[c] += g[r * co + c];
          }
        }
        if (!dx && !dk) return;
        std::vector<T> cols(block * out_image * patch);
        for (std::size_t n0 = 0; n0 < geo.batch; n0 += block) {
          ConvGeometry part = geo;
          part.batch = std::min(block, geo.batch - n0);
          const T* gb = g + n0 * out_image * co;
          if (dk) {
            im2col(part, xv + n0 * in_image, cols.data());
            gemm(true, false, patch, co, part.rows(), cols.data(), gb, dk, true);
          }
          if (dx) {
            gemm(false, true, part.rows(), patch, co, gb, kv, cols.data(), false);
            col2im_add(part, cols.data(), dx + n0 * in_image);
          }
        }
      });
}

}  // namespace detail

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("add: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return make_result<T>("add", a.shape(), std::move(out), {a, b}, [](detail::Node<T>& self) {
    const T* g = self.grad.data();
    const std::size_t n = self.grad.size();
    for (std::size_t p = 0; p < 2; ++p) {
      if (T* d = detail::parent_grad(self, p)) {
        for (std::size_t i = 0; i < n; ++i) d[i] += g[i];
      }
    }
  });
}

/// x + y where y's shape is a trailing suffix of x's shape (bias rows,
/// position tables broadcast over a batch).
template <typename T>
Tensor<T> add_broadcast(const Tensor<T>& x, const Tensor<T>& y) {
  const Shape& xs = x.shape();
  const Shape& ys = y.shape();
  if (ys.size() > xs.size() || !std::equal(ys.rbegin(), ys.rend(), xs.rbegin())) {
    throw ShapeError("add_broadcast: " + to_string(ys) + " is not a suffix of " +
                     to_string(xs));
  }
  const std::size_t ny = y.size();
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i % ny];
  return make_result<T>("add_broadcast", xs, std::move(out), {x, y},
                        [ny](detail::Node<T>& self) {
                          const T* g = self.grad.data();
                          const std::size_t n = self.grad.size();
                          if (T* dx = detail::parent_grad(self, 0)) {
                            for (std::size_t i = 0; i < n; ++i) dx[i] += g[i];
                          }
                          if (T* dy = detail::parent_grad(self, 1)) {
                            for (std::size_t i = 0; i < n; ++i) dy[i % ny] += g[i];
                          }
                        });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * factor;
  return make_result<T>("scale", x.shape(), std::move(out), {x},
                        [factor](detail::Node<T>& self) {
                          T* dx = detail::parent_grad(self, 0);
                          const T* g = self.grad.data();
                          for (std::size_t i = 0; i < self.grad.size(); ++i) {
                            dx[i] += g[i] * factor;
                          }
                        });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("mul: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return make_result<T>("mul", a.shape(), std::move(out), {a, b}, [](detail::Node<T>& self) {
    const T* g = self.grad.data();
    const T* av = self.parents[0]->data.data();
    const T* bv = self.parents[1]->data.data();
    const std::size_t n = self.grad.size();
    if (T* da = detail::parent_grad(self, 0)) {
      for (std::size_t i = 0; i < n; ++i) da[i] += g[i] * bv[i];
    }
    if (T* db = detail::parent_grad(self, 1)) {
      for (std::size_t i = 0; i < n; ++i) db[i] += g[i] * av[i];
    }
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T total = 0;
  for (T v : x.data()) total += v;
  return make_result<T>("sum", Shape{1}, std::vector<T>{total}, {x},
                        [](detail::Node<T>& self) {
                          T* dx = detail::parent_grad(self, 0);
                          const T g = self.grad[0];
                          const std::size_t n = self.parents[0]->data.size();
                          for (std::size_t i = 0; i < n; ++i) dx[i] += g;
                        });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw ShapeError("reshape: " + to_string(x.shape()) + " -> " + to_string(shape));
  }
  std::vector<T> out(x.data().begin(), x.data().end());
  return make_result<T>("reshape", std::move(shape), std::move(out), {x},
                        [](detail::Node<T>& self) {
                          T* dx = detail::parent_grad(self, 0);
                          const T* g = self.grad.data();
                          for (std::size_t i = 0; i < self.grad.size(); ++i) dx[i] += g[i];
                        });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  std::vector<T> out(x.size());
  // NaN fails both comparisons and is passed through to the finiteness check.
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] <= T(0) ? T(0) : x[i];
  return make_result<T>("relu", x.shape(), std::move(out), {x}, [](detail::Node<T>& self) {
    T* dx = detail::parent_grad(self, 0);
    const T* g = self.grad.data();
    const T* y = self.data.data();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (y[i] > T(0)) dx[i] += g[i];
    }
  });
}

/// Gated linear unit over the last axis: x = [a; b] -> a * sigmoid(b).
template <typename T>
Tensor<T> glu(const Tensor<T>& x) {
  const std::size_t width = x.shape().back();
  if (width % 2 != 0) {
    throw ShapeError("glu: odd channel count " + std::to_string(width));
  }
  const std::size_t half = width / 2;
  const std::size_t rows = detail::leading_extent(x.shape());
  Shape out_shape = x.shape();
  out_shape.back() = half;
  std::vector<T> out(rows * half);
  std::vector<T> gate(rows * half);
  const T* xv = x.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < half; ++c) {
      const T s = detail::stable_sigmoid(xv[r * width + half + c]);
      gate[r * half + c] = s;
      out[r * half + c] = xv[r * width + c] * s;
    }
  }
  return make_result<T>(
      "glu", std::move(out_shape), std::move(out), {x},
      [rows, half, gate = std::move(gate)](detail::Node<T>& self) {
        T* dx = detail::parent_grad(self, 0);
        const T* g = self.grad.data();
        const T* xv = self.parents[0]->data.data();
        const std::size_t width = 2 * half;
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < half; ++c) {
            const T s = gate[r * half + c];
            const T gi = g[r * half + c];
            dx[r * width + c] += gi * s;
            dx[r * width + half + c] += gi * xv[r * width + c] * s * (T(1) - s);
          }
        }
      });
}

/// Inverted dropout. Identity when not training or p == 0.
template <typename T, typename Rng>
Tensor<T> dropout(const Tensor<T>& x, double p, bool training, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw std::invalid_argument("dropout: p must lie in [0, 1), got " + std::to_string(p));
  }
  if (!training || p == 0.0) return x;
  std::bernoulli_distribution keep(1.0 - p);
  const T factor = T(1.0 / (1.0 - p));
  std::vector<T> mask(x.size());
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    mask[i] = keep(rng) ? factor : T(0);
    out[i] = x[i] * mask[i];
  }
  return make_result<T>("dropout", x.shape(), std::move(out), {x},
                        [mask = std::move(mask)](detail::Node<T>& self) {
                          T* dx = detail::parent_grad(self, 0);
                          const T* g = self.grad.data();
                          for (std::size_t i = 0; i < mask.size(); ++i) dx[i] += g[i] * mask[i];
                        });
}

/// Softmax over the last axis, max-subtracted.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x) {
  const std::size_t width = x.shape().back();
  const std::size_t rows = detail::leading_extent(x.shape());
  std::vector<T> out(x.size());
  const T* xv = x.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = xv + r * width;
    T* o = out.data() + r * width;
    const T mx = *std::max_element(in, in + width);
    T total = 0;
    for (std::size_t c = 0; c < width; ++c) total += (o[c] = std::exp(in[c] - mx));
    for (std::size_t c = 0; c < width; ++c) o[c] /= total;
  }
  return make_result<T>("softmax", x.shape(), std::move(out), {x},
                        [rows, width](detail::Node<T>& self) {
                          T* dx = detail::parent_grad(self, 0);
                          const T* g = self.grad.data();
                          const T* y = self.data.data();
                          for (std::size_t r = 0; r < rows; ++r) {
                            const std::size_t o = r * width;
                            T dot = 0;
                            for (std::size_t c = 0; c < width; ++c) dot += g[o + c] * y[o + c];
                            for (std::size_t c = 0; c < width; ++c) {
                              dx[o + c] += y[o + c] * (g[o + c] - dot);
                            }
                          }
                        });
}

template <typename T>
Tensor<T> log_softmax(const Tensor<T>& x) {
  const std::size_t width = x.shape().back();
  const std::size_t rows = detail::leading_extent(x.shape());
  std::vector<T> out(x.size());
  const T* xv = x.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = xv + r * width;
    T* o = out.data() + r * width;
    const T mx = *std::max_element(in, in + width);
    T total = 0;
    for (std::size_t c = 0; c < width; ++c) total += std::exp(in[c] - mx);
    const T lse = mx + std::log(total);
    for (std::size_t c = 0; c < width; ++c) o[c] = in[c] - lse;
  }
  return make_result<T>("log_softmax", x.shape(), std::move(out), {x},
                        [rows, width](detail::Node<T>& self) {
                          T* dx = detail::parent_grad(self, 0);
                          const T* g = self.grad.data();
                          const T* y = self.data.data();
                          for (std::size_t r = 0; r < rows; ++r) {
                            const std::size_t o = r * width;
                            T gsum = 0;
                            for (std::size_t c = 0; c < width; ++c) gsum += g[o + c];
                            for (std::size_t c = 0; c < width; ++c) {
                              dx[o + c] += g[o + c] - std::exp(y[o + c]) * gsum;
                            }
                          }
                        });
}

/// y = x W^T + b over the last axis of x. W is [d_out, d_in].
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  if (weight.rank() != 2 || bias.rank() != 1 || bias.dim(0) != weight.dim(0) ||
      x.shape().back() != weight.dim(1)) {
    throw ShapeError("linear: x " + to_string(x.shape()) + ", W " + to_string(weight.shape()) +
                     ", b " + to_string(bias.shape()));
  }
  const std::size_t d_out = weight.dim(0);
  const std::size_t d_in = weight.dim(1);
  const std::size_t rows = detail::leading_extent(x.shape());
  Shape out_shape = x.shape();
  out_shape.back() = d_out;
  std::vector<T> out(rows * d_out);
  detail::gemm(false, true, rows, d_out, d_in, x.data().data(), weight.data().data(),
               out.data(), false);
  const T* b = bias.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < d_out; ++c) out[r * d_out + c] += b[c];
  }
  return make_result<T>(
      "linear", std::move(out_shape), std::move(out), {x, weight, bias},
      [rows, d_in, d_out](detail::Node<T>& self) {
        const T* g = self.grad.data();
        const T* xv = self.parents[0]->data.data();
        const T* w = self.parents[1]->data.data();
        if (T* dx = detail::parent_grad(self, 0)) {
          detail::gemm(false, false, rows, d_in, d_out, g, w, dx, true);
        }
        if (T* dw = detail::parent_grad(self, 1)) {
          detail::gemm(true, false, d_out, d_in, rows, g, xv, dw, true);
        }
        if (T* db = detail::parent_grad(self, 2)) {
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < d_out; ++c) db[c] += g[r * d_out + c];
          }
        }
      });
}

/// 1-D cross-correlation over time. x is [T, C_in] or [B, T, C_in]; kernel
/// is [k, C_in, C_out].
template <typename T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias,
                 Padding pad) {
  if (x.rank() != 2 && x.rank() != 3) {
    throw ShapeError("conv1d: input must be [T,C] or [B,T,C], got " + to_string(x.shape()));
  }
  if (kernel.rank() != 3 || bias.rank() != 1 || bias.dim(0) != kernel.dim(2) ||
      kernel.dim(1) != x.shape().back()) {
    throw ShapeError("conv1d: x " + to_string(x.shape()) + ", kernel " +
                     to_string(kernel.shape()) + ", bias " + to_string(bias.shape()));
  }
  const bool batched = x.rank() == 3;
  detail::ConvGeometry geo{};
  geo.batch = batched ? x.dim(0) : 1;
  geo.height = 1;
  geo.width = x.dim(batched ? 1 : 0);
  geo.in_ch = x.shape().back();
  geo.k_h = 1;
  geo.k_w = kernel.dim(0);
  geo.out_ch = kernel.dim(2);
  geo.pad_top = 0;
  geo.out_h = 1;
  switch (pad) {
    case Padding::same:
      geo.pad_left = (geo.k_w - 1) / 2;
      geo.out_w = geo.width;
      break;
    case Padding::causal:
      geo.pad_left = geo.k_w - 1;
      geo.out_w = geo.width;
      break;
    case Padding::valid:
      if (geo.width < geo.k_w) {
        throw ShapeError("conv1d: valid padding leaves no output (T=" +
                         std::to_string(geo.width) + ", k=" + std::to_string(geo.k_w) + ")");
      }
      geo.pad_left = 0;
      geo.out_w = geo.width - geo.k_w + 1;
      break;
  }
  Shape out_shape = batched ? Shape{geo.batch, geo.out_w, geo.out_ch}
                            : Shape{geo.out_w, geo.out_ch};
  return detail::conv_core("conv1d", x, kernel, bias, geo, std::move(out_shape));
}

/// 2-D cross-correlation. x is [H, W, C_in] or [N, H, W, C_in]; kernel is
/// [k_h, k_w, C_in, C_out].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias,
                 Padding pad) {
  if (x.rank() != 3 && x.rank() != 4) {
    throw ShapeError("conv2d: input must be [H,W,C] or [N,H,W,C], got " +
                     to_string(x.shape()));
  }
  if (kernel.rank() != 4 || bias.rank() != 1 || bias.dim(0) != kernel.dim(3) ||
      kernel.dim(2) != x.shape().back()) {
    throw ShapeError("conv2d: x " + to_string(x.shape()) + ", kernel " +
                     to_string(kernel.shape()) + ", bias " + to_string(bias.shape()));
  }
  if (pad == Padding::causal) throw ShapeError("conv2d: causal padding is 1-D only");
  const bool batched = x.rank() == 4;
  const std::size_t off = batched ? 1 : 0;
  detail::ConvGeometry geo{};
  geo.batch = batched ? x.dim(0) : 1;
  geo.height = x.dim(off);
  geo.width = x.dim(off + 1);
  geo.in_ch = x.dim(off + 2);
  geo.k_h = kernel.dim(0);
  geo.k_w = kernel.dim(1);
  geo.out_ch = kernel.dim(3);
  if (pad == Padding::same) {
    geo.pad_top = (geo.k_h - 1) / 2;
    geo.pad_left = (geo.k_w - 1) / 2;
    geo.out_h = geo.height;
    geo.out_w = geo.width;
  } else {
    if (geo.height < geo.k_h || geo.width < geo.k_w) {
      throw ShapeError("conv2d: valid padding leaves no output for input " +
                       to_string(x.shape()) + " and kernel " + to_string(kernel.shape()));
    }
    geo.pad_top = geo.pad_left = 0;
    geo.out_h = geo.height - geo.k_h + 1;
    geo.out_w = geo.width - geo.k_w + 1;
  }
  Shape out_shape = batched ? Shape{geo.batch, geo.out_h, geo.out_w, geo.out_ch}
                            : Shape{geo.out_h, geo.out_w, geo.out_ch};
  return detail::conv_core("conv2d", x, kernel, bias, geo, std::move(out_shape));
}

/// 2x2 max pooling with stride 2 over [H, W, C] or [N, H, W, C].
template <typename T>
Tensor<T> maxpool2(const Tensor<T>& x) {
  if (x.rank() != 3 && x.rank() != 4) {
    throw ShapeError("maxpool2: input must be [H,W,C] or [N,H,W,C], got " +
                     to_string(x.shape()));
  }
  const bool batched = x.rank() == 4;
  const std::size_t off = batched ? 1 : 0;
  const std::size_t n = batched ? x.dim(0) : 1;
  const std::size_t h = x.dim(off), w = x.dim(off + 1), c = x.dim(off + 2);
  if (h % 2 || w % 2) throw ShapeError("maxpool2: odd extent in " + to_string(x.shape()));
  const std::size_t oh = h / 2, ow = w / 2;
  std::vector<T> out(n * oh * ow * c);
  std::vector<std::uint32_t> arg(out.size());
  const T* xv = x.data().data();
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xo = 0; xo < ow; ++xo) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          std::size_t best = ((b * h + 2 * y) * w + 2 * xo) * c + ch;
          for (std::size_t dy = 0; dy < 2; ++dy) {
            for (std::size_t dx = 0; dx < 2; ++dx) {
              const std::size_t idx = ((b * h + 2 * y + dy) * w + 2 * xo + dx) * c + ch;
              if (xv[idx] > xv[best]) best = idx;
            }
          }
          const std::size_t o = ((b * oh + y) * ow + xo) * c + ch;
          out[o] = xv[best];
          arg[o] = static_cast<std::uint32_t>(best);
        }
      }
    }
  }
  Shape out_shape = batched ? Shape{n, oh, ow, c} : Shape{oh, ow, c};
  return make_result<T>("maxpool2", std::move(out_shape), std::move(out), {x},
                        [arg = std::move(arg)](detail::Node<T>& self) {
                          T* dx = detail::parent_grad(self, 0);
                          const T* g = self.grad.data();
                          for (std::size_t i = 0; i < arg.size(); ++i) dx[arg[i]] += g[i];
                        });
}

/// Batched matrix product: a [B, n, k] times b [B, k, m] (or b [B, m, k]
/// with trans_b). Rank-2 operands are treated as B = 1.
template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b, bool trans_b = false) {
  if (a.rank() != b.rank() || (a.rank() != 2 && a.rank() != 3)) {
    throw ShapeError("bmm: " + to_string(a.shape()) + " x " + to_string(b.shape()));
  }
  const bool batched = a.rank() == 3;
  const std::size_t off = batched ? 1 : 0;
  const std::size_t batch = batched ? a.dim(0) : 1;
  const std::size_t n = a.dim(off), k = a.dim(off + 1);
  const std::size_t bk = trans_b ? b.dim(off + 1) : b.dim(off);
  const std::size_t m = trans_b ? b.dim(off) : b.dim(off + 1);
  if (bk != k || (batched && b.dim(0) != batch)) {
    throw ShapeError("bmm: " + to_string(a.shape()) + " x " + to_string(b.shape()) +
                     (trans_b ? "^T" : ""));
  }
  std::vector<T> out(batch * n * m);
  for (std::size_t i = 0; i < batch; ++i) {
    detail::gemm(false, trans_b, n, m, k, a.data().data() + i * n * k,
                 b.data().data() + i * k * m, out.data() + i * n * m, false);
  }
  Shape out_shape = batched ? Shape{batch, n, m} : Shape{n, m};
  return make_result<T>(
      "bmm", std::move(out_shape), std::move(out), {a, b},
      [batch, n, k, m, trans_b](detail::Node<T>& self) {
        const T* g = self.grad.data();
        const T* av = self.parents[0]->data.data();
        const T* bv = self.parents[1]->data.data();
        T* da = detail::parent_grad(self, 0);
        T* db = detail::parent_grad(self, 1);
        for (std::size_t i = 0; i < batch; ++i) {
          const T* gi = g + i * n * m;
          if (da) {
            // dA = dC * op(B)^T
            detail::gemm(false, !trans_b, n, k, m, gi, bv + i * k * m, da + i * n * k, true);
          }
          if (db) {
            if (trans_b) {
              // B is [m, k]: dB = dC^T * A
              detail::gemm(true, false, m, k, n, gi, av + i * n * k, db + i * k * m, true);
            } else {
              // dB = A^T * dC
              detail::gemm(true, false, k, m, n, av + i * n * k, gi, db + i * k * m, true);
            }
          }
        }
      });
}

/// Row gather: out[..., :] = table[indices[...], :]. `lead` is the shape of
/// the index array.
template <typename T>
Tensor<T> embedding(const Tensor<T>& table, std::span<const int> indices, Shape lead) {
  if (table.rank() != 2) throw ShapeError("embedding: table must be 2-D");
  if (numel(lead) != indices.size()) throw ShapeError("embedding: index shape mismatch");
  const std::size_t rows = table.dim(0), d = table.dim(1);
  std::vector<int> idx(indices.begin(), indices.end());
  for (int i : idx) {
    if (i < 0 || static_cast<std::size_t>(i) >= rows) {
      throw ShapeError("embedding: index " + std::to_string(i) + " outside table of " +
                       std::to_string(rows) + " rows");
    }
  }
  std::vector<T> out(idx.size() * d);
  const T* tv = table.data().data();
  for (std::size_t r = 0; r < idx.size(); ++r) {
    std::copy(tv + static_cast<std::size_t>(idx[r]) * d,
              tv + static_cast<std::size_t>(idx[r] + 1) * d, out.data() + r * d);
  }
  lead.push_back(d);
  return make_result<T>("embedding", std::move(lead), std::move(out), {table},
                        [d, idx = std::move(idx)](detail::Node<T>& self) {
                          T* dt = detail::parent_grad(self, 0);
                          const T* g = self.grad.data();
                          for (std::size_t r = 0; r < idx.size(); ++r) {
                            T* row = dt + static_cast<std::size_t>(idx[r]) * d;
                            for (std::size_t c = 0; c < d; ++c) row[c] += g[r * d + c];
                          }
                        });
}

/// The first `count` entries along axis 0.
template <typename T>
Tensor<T> slice_rows(const Tensor<T>& x, std::size_t count) {
  if (count == 0 || count > x.dim(0)) {
    throw ShapeError("slice_rows: " + std::to_string(count) + " rows from " +
                     to_string(x.shape()));
  }
  Shape shape = x.shape();
  const std::size_t stride = x.size() / shape[0];
  shape[0] = count;
  std::vector<T> out(x.data().begin(), x.data().begin() + count * stride);
  return make_result<T>("slice_rows", std::move(shape), std::move(out), {x},
                        [](detail::Node<T>& self) {
                          T* dx = detail::parent_grad(self, 0);
                          const T* g = self.grad.data();
                          for (std::size_t i = 0; i < self.grad.size(); ++i) dx[i] += g[i];
                        });
}

/// Negative log-likelihood of `targets` under softmax(logits), summed over
/// the steps of each sequence and averaged over the batch. logits is
/// [n, V] or [B, n, V]; positions whose target equals `ignore` are skipped.
template <typename T>
Tensor<T> nll_loss(const Tensor<T>& logits, std::span<const int> targets, int ignore = -1) {
  if (logits.rank() != 2 && logits.rank() != 3) {
    throw ShapeError("nll_loss: logits must be [n,V] or [B,n,V]");
  }
  const std::size_t batch = logits.rank() == 3 ? logits.dim(0) : 1;
  const std::size_t vocab = logits.shape().back();
  const std::size_t rows = detail::leading_extent(logits.shape());
  if (targets.size() != rows) {
    throw ShapeError("nll_loss: " + std::to_string(targets.size()) + " targets for " +
                     std::to_string(rows) + " rows");
  }
  std::vector<int> tgt(targets.begin(), targets.end());
  for (int t : tgt) {
    if (t != ignore && (t < 0 || static_cast<std::size_t>(t) >= vocab)) {
      throw ShapeError("nll_loss: target " + std::to_string(t) + " outside vocabulary of " +
                       std::to_string(vocab));
    }
  }
  std::vector<T> probs(rows * vocab);
  T total = 0;
  const T* lv = logits.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    if (tgt[r] == ignore) continue;
    const T* in = lv + r * vocab;
    T* p = probs.data() + r * vocab;
    const T mx = *std::max_element(in, in + vocab);
    T z = 0;
    for (std::size_t c = 0; c < vocab; ++c) z += (p[c] = std::exp(in[c] - mx));
    for (std::size_t c = 0; c < vocab; ++c) p[c] /= z;
    total -= in[tgt[r]] - mx - std::log(z);
  }
  total /= static_cast<T>(batch);
  return make_result<T>(
      "nll_loss", Shape{1}, std::vector<T>{total}, {logits},
      [rows, vocab, batch, ignore, tgt = std::move(tgt),
       probs = std::move(probs)](detail::Node<T>& self) {
        T* dl = detail::parent_grad(self, 0);
        const T g = self.grad[0] / static_cast<T>(batch);
        for (std::size_t r = 0; r < rows; ++r) {
          if (tgt[r] == ignore) continue;
          const T* p = probs.data() + r * vocab;
          T* d = dl + r * vocab;
          for (std::size_t c = 0; c < vocab; ++c) d[c] += g * p[c];
          d[tgt[r]] -= g;
        }
      });
}

}  // namespace scan
