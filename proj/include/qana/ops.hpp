// Copyright 2026 The QANA Authors
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

// Primitive layers with analytic backward passes. Every function is pure
// over its inputs except batch_norm_train (running statistics) and dropout
// (consumes the caller's RNG).

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <type_traits>
#include <vector>

#include "qana/tensor.hpp"

namespace qana::ops {

template <class T>
using cspan = std::type_identity_t<std::span<const T>>;
template <class T>
using mspan = std::type_identity_t<std::span<T>>;

enum class Padding { same, valid };
enum class Mode { train, infer };

struct ConvGeometry {
  std::size_t out_h = 0;
  std::size_t out_w = 0;
  std::size_t pad_top = 0;
  std::size_t pad_left = 0;
};

/// Same padding splits the total pad with the extra row/column on the
/// bottom/right.
inline ConvGeometry conv_geometry(std::size_t in_h, std::size_t in_w, std::size_t kh, std::size_t kw,
                                  std::size_t stride, Padding padding, std::string_view op = "conv") {
  if (stride < 1) throw Error(Errc::invalid_argument, std::string(op) + ": stride must be >= 1");
  ConvGeometry g;
  if (padding == Padding::valid) {
    if (in_h < kh) throw ShapeError(op, "input height", in_h, kh);
    if (in_w < kw) throw ShapeError(op, "input width", in_w, kw);
    g.out_h = (in_h - kh) / stride + 1;
    g.out_w = (in_w - kw) / stride + 1;
    return g;
  }
  g.out_h = (in_h + stride - 1) / stride;
  g.out_w = (in_w + stride - 1) / stride;
  const auto total = [&](std::size_t out, std::size_t in, std::size_t k) -> std::size_t {
    const std::size_t needed = (out - 1) * stride + k;
    return needed > in ? needed - in : 0;
  };
  g.pad_top = total(g.out_h, in_h, kh) / 2;
  g.pad_left = total(g.out_w, in_w, kw) / 2;
  return g;
}

// ---------------------------------------------------------------------------
// conv2d

template <class T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& kernel, cspan<T> bias = {},
                      std::size_t stride = 1, Padding padding = Padding::same) {
  require_rank(x, 4, "conv2d input");
  require_rank(kernel, 4, "conv2d kernel");
  const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), cin = x.dim(3);
  const std::size_t kh = kernel.dim(0), kw = kernel.dim(1), cout = kernel.dim(3);
  if (kernel.dim(2) != cin) throw ShapeError("conv2d", "input channels", cin, kernel.dim(2));
  if (!bias.empty() && bias.size() != cout) throw ShapeError("conv2d", "bias length", bias.size(), cout);
  const auto g = conv_geometry(h, w, kh, kw, stride, padding, "conv2d");

  BasicTensor<T> y({n, g.out_h, g.out_w, cout});
  const T* xp = x.ptr();
  const T* kp = kernel.ptr();
  T* yp = y.ptr();
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t oh = 0; oh < g.out_h; ++oh)
      for (std::size_t ow = 0; ow < g.out_w; ++ow) {
        T* yrow = yp + ((b * g.out_h + oh) * g.out_w + ow) * cout;
        if (!bias.empty()) std::copy(bias.begin(), bias.end(), yrow);
        for (std::size_t i = 0; i < kh; ++i) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * stride + i) - static_cast<std::ptrdiff_t>(g.pad_top);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t j = 0; j < kw; ++j) {
            const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * stride + j) - static_cast<std::ptrdiff_t>(g.pad_left);
            if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(w)) continue;
            const T* xrow = xp + ((b * h + static_cast<std::size_t>(ih)) * w + static_cast<std::size_t>(iw)) * cin;
            const T* krow = kp + (i * kw + j) * cin * cout;
            for (std::size_t ci = 0; ci < cin; ++ci) {
              const T xv = xrow[ci];
              if (xv == T{}) continue;
              const T* kr = krow + ci * cout;
              for (std::size_t co = 0; co < cout; ++co) yrow[co] += xv * kr[co];
            }
          }
        }
      }
  return y;
}

template <class T>
struct ConvGrads {
  BasicTensor<T> dx;
  BasicTensor<T> dkernel;
  std::vector<T> dbias;
};

template <class T>
ConvGrads<T> conv2d_backward(const BasicTensor<T>& x, const BasicTensor<T>& kernel, const BasicTensor<T>& dy,
                             std::size_t stride = 1, Padding padding = Padding::same, bool need_dx = true) {
  const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), cin = x.dim(3);
  const std::size_t kh = kernel.dim(0), kw = kernel.dim(1), cout = kernel.dim(3);
  const auto g = conv_geometry(h, w, kh, kw, stride, padding, "conv2d_backward");
  if (dy.shape() != Shape{n, g.out_h, g.out_w, cout})
    throw Error(Errc::shape_mismatch, "conv2d_backward: upstream gradient " + shape_string(dy.shape()));

  ConvGrads<T> grads{need_dx ? BasicTensor<T>(x.shape()) : BasicTensor<T>(), BasicTensor<T>(kernel.shape()),
                     std::vector<T>(cout, T{})};
  const T* xp = x.ptr();
  const T* kp = kernel.ptr();
  const T* dyp = dy.ptr();
  T* dxp = need_dx ? grads.dx.ptr() : nullptr;
  T* dkp = grads.dkernel.ptr();
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t oh = 0; oh < g.out_h; ++oh)
      for (std::size_t ow = 0; ow < g.out_w; ++ow) {
        const T* dyrow = dyp + ((b * g.out_h + oh) * g.out_w + ow) * cout;
        for (std::size_t co = 0; co < cout; ++co) grads.dbias[co] += dyrow[co];
        for (std::size_t i = 0; i < kh; ++i) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * stride + i) - static_cast<std::ptrdiff_t>(g.pad_top);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t j = 0; j < kw; ++j) {
            const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * stride + j) - static_cast<std::ptrdiff_t>(g.pad_left);
            if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(w)) continue;
            const std::size_t xoff = ((b * h + static_cast<std::size_t>(ih)) * w + static_cast<std::size_t>(iw)) * cin;
            const std::size_t koff = (i * kw + j) * cin * cout;
            for (std::size_t ci = 0; ci < cin; ++ci) {
              const T xv = xp[xoff + ci];
              T* dkr = dkp + koff + ci * cout;
              for (std::size_t co = 0; co < cout; ++co) dkr[co] += xv * dyrow[co];
              if (dxp) {
                const T* kr = kp + koff + ci * cout;
                T acc{};
                for (std::size_t co = 0; co < cout; ++co) acc += kr[co] * dyrow[co];
                dxp[xoff + ci] += acc;
              }
            }
          }
        }
      }
  return grads;
}

// ---------------------------------------------------------------------------
// depthwise_conv2d: kernel [kh, kw, C, 1]

template <class T>
BasicTensor<T> depthwise_conv2d(const BasicTensor<T>& x, const BasicTensor<T>& kernel, cspan<T> bias = {},
                                std::size_t stride = 1, Padding padding = Padding::same) {
  require_rank(x, 4, "depthwise_conv2d input");
  require_rank(kernel, 4, "depthwise_conv2d kernel");
  const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  const std::size_t kh = kernel.dim(0), kw = kernel.dim(1);
  if (kernel.dim(2) != c) throw ShapeError("depthwise_conv2d", "channels", c, kernel.dim(2));
  if (kernel.dim(3) != 1) throw ShapeError("depthwise_conv2d", "depth multiplier", kernel.dim(3), 1);
  if (!bias.empty() && bias.size() != c) throw ShapeError("depthwise_conv2d", "bias length", bias.size(), c);
  const auto g = conv_geometry(h, w, kh, kw, stride, padding, "depthwise_conv2d");

  BasicTensor<T> y({n, g.out_h, g.out_w, c});
  const T* xp = x.ptr();
  const T* kp = kernel.ptr();
  T* yp = y.ptr();
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t oh = 0; oh < g.out_h; ++oh)
      for (std::size_t ow = 0; ow < g.out_w; ++ow) {
        T* yrow = yp + ((b * g.out_h + oh) * g.out_w + ow) * c;
        if (!bias.empty()) std::copy(bias.begin(), bias.end(), yrow);
        for (std::size_t i = 0; i < kh; ++i) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * stride + i) - static_cast<std::ptrdiff_t>(g.pad_top);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t j = 0; j < kw; ++j) {
            const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * stride + j) - static_cast<std::ptrdiff_t>(g.pad_left);
            if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(w)) continue;
            const T* xrow = xp + ((b * h + static_cast<std::size_t>(ih)) * w + static_cast<std::size_t>(iw)) * c;
            const T* kr = kp + (i * kw + j) * c;
            for (std::size_t ch = 0; ch < c; ++ch) yrow[ch] += xrow[ch] * kr[ch];
          }
        }
      }
  return y;
}

template <class T>
ConvGrads<T> depthwise_conv2d_backward(const BasicTensor<T>& x, const BasicTensor<T>& kernel, const BasicTensor<T>& dy,
                                       std::size_t stride = 1, Padding padding = Padding::same) {
  const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  const std::size_t kh = kernel.dim(0), kw = kernel.dim(1);
  const auto g = conv_geometry(h, w, kh, kw, stride, padding, "depthwise_conv2d_backward");
  if (dy.shape() != Shape{n, g.out_h, g.out_w, c})
    throw Error(Errc::shape_mismatch, "depthwise_conv2d_backward: upstream gradient " + shape_string(dy.shape()));

  ConvGrads<T> grads{BasicTensor<T>(x.shape()), BasicTensor<T>(kernel.shape()), std::vector<T>(c, T{})};
  const T* xp = x.ptr();
  const T* kp = kernel.ptr();
  const T* dyp = dy.ptr();
  T* dxp = grads.dx.ptr();
  T* dkp = grads.dkernel.ptr();
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t oh = 0; oh < g.out_h; ++oh)
      for (std::size_t ow = 0; ow < g.out_w; ++ow) {
        const T* dyrow = dyp + ((b * g.out_h + oh) * g.out_w + ow) * c;
        for (std::size_t ch = 0; ch < c; ++ch) grads.dbias[ch] += dyrow[ch];
        for (std::size_t i = 0; i < kh; ++i) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * stride + i) - static_cast<std::ptrdiff_t>(g.pad_top);
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t j = 0; j < kw; ++j) {
            const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * stride + j) - static_cast<std::ptrdiff_t>(g.pad_left);
            if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(w)) continue;
            const std::size_t xoff = ((b * h + static_cast<std::size_t>(ih)) * w + static_cast<std::size_t>(iw)) * c;
            const std::size_t koff = (i * kw + j) * c;
            for (std::size_t ch = 0; ch < c; ++ch) {
              dkp[koff + ch] += xp[xoff + ch] * dyrow[ch];
              dxp[xoff + ch] += kp[koff + ch] * dyrow[ch];
            }
          }
        }
      }
  return grads;
}

// ---------------------------------------------------------------------------
// separable_conv2d = pointwise(depthwise(x)), stride 1, same padding

template <class T>
BasicTensor<T> separable_conv2d(const BasicTensor<T>& x, const BasicTensor<T>& depth_kernel,
                                const BasicTensor<T>& point_kernel, cspan<T> bias = {}) {
  if (point_kernel.rank() != 4 || point_kernel.dim(0) != 1 || point_kernel.dim(1) != 1)
    throw Error(Errc::shape_mismatch, "separable_conv2d: point kernel must be [1,1,C,Cout], got " +
                                          shape_string(point_kernel.shape()));
  return conv2d(depthwise_conv2d(x, depth_kernel), point_kernel, bias);
}

// ---------------------------------------------------------------------------
// batch_norm over the last axis

template <class T>
struct BatchNormCache {
  BasicTensor<T> xhat;
  std::vector<T> inv_std;
  bool train = false;
};

namespace detail {
template <class T>
std::size_t bn_channels(const BasicTensor<T>& x, cspan<T> gamma, cspan<T> beta) {
  if (x.empty()) throw Error(Errc::empty_input, "batch_norm: empty batch");
  const std::size_t c = x.shape().back();
  if (gamma.size() != c) throw ShapeError("batch_norm", "gamma length", gamma.size(), c);
  if (beta.size() != c) throw ShapeError("batch_norm", "beta length", beta.size(), c);
  return c;
}
}  // namespace detail

template <class T>
BasicTensor<T> batch_norm_infer(const BasicTensor<T>& x, cspan<T> gamma, cspan<T> beta,
                                cspan<T> mean, cspan<T> var, T eps,
                                BatchNormCache<T>* cache = nullptr) {
  if (!(eps > T{})) throw Error(Errc::invalid_argument, "batch_norm: eps must be > 0");
  const std::size_t c = detail::bn_channels(x, gamma, beta);
  if (mean.size() != c) throw ShapeError("batch_norm", "running mean length", mean.size(), c);
  if (var.size() != c) throw ShapeError("batch_norm", "running var length", var.size(), c);
  std::vector<T> inv(c);
  for (std::size_t ch = 0; ch < c; ++ch) inv[ch] = T{1} / std::sqrt(var[ch] + eps);
  BasicTensor<T> y(x.shape());
  BasicTensor<T> xhat;
  if (cache) xhat = BasicTensor<T>(x.shape());
  const std::size_t m = x.size() / c;
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t i = r * c + ch;
      const T xh = (x[i] - mean[ch]) * inv[ch];
      if (cache) xhat[i] = xh;
      y[i] = gamma[ch] * xh + beta[ch];
    }
  if (cache) *cache = BatchNormCache<T>{std::move(xhat), std::move(inv), false};
  return y;
}

/// Normalizes by batch statistics (two-pass mean / biased variance) and
/// updates running = momentum * running + (1 - momentum) * batch.
template <class T>
BasicTensor<T> batch_norm_train(const BasicTensor<T>& x, cspan<T> gamma, cspan<T> beta,
                                mspan<T> running_mean, mspan<T> running_var, T momentum, T eps,
                                BatchNormCache<T>* cache = nullptr) {
  if (!(eps > T{})) throw Error(Errc::invalid_argument, "batch_norm: eps must be > 0");
  const std::size_t c = detail::bn_channels(x, gamma, beta);
  const std::size_t m = x.size() / c;
  std::vector<T> mean(c, T{}), var(c, T{});
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t ch = 0; ch < c; ++ch) mean[ch] += x[r * c + ch];
  for (auto& v : mean) v /= static_cast<T>(m);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T d = x[r * c + ch] - mean[ch];
      var[ch] += d * d;
    }
  for (auto& v : var) v /= static_cast<T>(m);

  std::vector<T> inv(c);
  for (std::size_t ch = 0; ch < c; ++ch) inv[ch] = T{1} / std::sqrt(var[ch] + eps);
  BasicTensor<T> xhat(x.shape());
  BasicTensor<T> y(x.shape());
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t i = r * c + ch;
      xhat[i] = (x[i] - mean[ch]) * inv[ch];
      y[i] = gamma[ch] * xhat[i] + beta[ch];
    }
  if (running_mean.size() == c && running_var.size() == c)
    for (std::size_t ch = 0; ch < c; ++ch) {
      running_mean[ch] = momentum * running_mean[ch] + (T{1} - momentum) * mean[ch];
      running_var[ch] = momentum * running_var[ch] + (T{1} - momentum) * var[ch];
    }
  if (cache) *cache = BatchNormCache<T>{std::move(xhat), std::move(inv), true};
  return y;
}

template <class T>
struct BatchNormGrads {
  BasicTensor<T> dx;
  std::vector<T> dgamma;
  std::vector<T> dbeta;
};

template <class T>
BatchNormGrads<T> batch_norm_backward(const BasicTensor<T>& dy, cspan<T> gamma, const BatchNormCache<T>& cache) {
  const std::size_t c = gamma.size();
  const std::size_t m = dy.size() / c;
  BatchNormGrads<T> g{BasicTensor<T>(dy.shape()), std::vector<T>(c, T{}), std::vector<T>(c, T{})};
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t i = r * c + ch;
      g.dgamma[ch] += dy[i] * cache.xhat[i];
      g.dbeta[ch] += dy[i];
    }
  if (!cache.train) {
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t ch = 0; ch < c; ++ch) g.dx[r * c + ch] = dy[r * c + ch] * gamma[ch] * cache.inv_std[ch];
    return g;
  }
  // dxhat sums are gamma * dbeta and gamma * dgamma.
  const T mf = static_cast<T>(m);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t i = r * c + ch;
      const T dxhat = dy[i] * gamma[ch];
      g.dx[i] = cache.inv_std[ch] / mf *
                (mf * dxhat - gamma[ch] * g.dbeta[ch] - cache.xhat[i] * gamma[ch] * g.dgamma[ch]);
    }
  return g;
}

// ---------------------------------------------------------------------------
// pointwise activations; clamp subgradients are 0 exactly at the corners

template <class T>
BasicTensor<T> relu6(const BasicTensor<T>& x) {
  BasicTensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::min(T{6}, std::max(T{0}, x[i]));
  return y;
}

template <class T>
BasicTensor<T> relu6_backward(const BasicTensor<T>& x, const BasicTensor<T>& dy) {
  BasicTensor<T> dx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = (x[i] > T{0} && x[i] < T{6}) ? dy[i] : T{0};
  return dx;
}

template <class T>
BasicTensor<T> bounded_unit(const BasicTensor<T>& x) {
  BasicTensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::min(T{1}, std::max(T{0}, x[i]));
  return y;
}

template <class T>
BasicTensor<T> bounded_unit_backward(const BasicTensor<T>& x, const BasicTensor<T>& dy) {
  BasicTensor<T> dx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = (x[i] > T{0} && x[i] < T{1}) ? dy[i] : T{0};
  return dx;
}

template <class T>
BasicTensor<T> relu(const BasicTensor<T>& x) {
  BasicTensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::max(T{0}, x[i]);
  return y;
}

template <class T>
BasicTensor<T> relu_backward(const BasicTensor<T>& x, const BasicTensor<T>& dy) {
  BasicTensor<T> dx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > T{0} ? dy[i] : T{0};
  return dx;
}

/// Open-interval sigmoid: saturated results are pinned one ulp inside (0, 1).
template <class T>
T sigmoid_scalar(T v) {
  const T s = v >= T{0} ? T{1} / (T{1} + std::exp(-v)) : std::exp(v) / (T{1} + std::exp(v));
  constexpr T lo = std::numeric_limits<T>::denorm_min();
  const T hi = std::nextafter(T{1}, T{0});
  if (std::isnan(s)) return s;
  return std::clamp(s, lo, hi);
}

template <class T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x) {
  BasicTensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = sigmoid_scalar(x[i]);
  return y;
}

/// Takes the forward output s, not the input.
template <class T>
BasicTensor<T> sigmoid_backward(const BasicTensor<T>& s, const BasicTensor<T>& dy) {
  BasicTensor<T> dx(s.shape());
  for (std::size_t i = 0; i < s.size(); ++i) dx[i] = dy[i] * s[i] * (T{1} - s[i]);
  return dx;
}

// ---------------------------------------------------------------------------
// maxpool2d (valid windows); argmax ties go to the first index in window order

template <class T>
BasicTensor<T> maxpool2d(const BasicTensor<T>& x, std::size_t window = 2, std::size_t stride = 2,
                         std::vector<std::size_t>* argmax = nullptr) {
  require_rank(x, 4, "maxpool2d");
  const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  const auto g = conv_geometry(h, w, window, window, stride, Padding::valid, "maxpool2d");
  BasicTensor<T> y({n, g.out_h, g.out_w, c});
  if (argmax) argmax->assign(y.size(), 0);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t oh = 0; oh < g.out_h; ++oh)
      for (std::size_t ow = 0; ow < g.out_w; ++ow)
        for (std::size_t ch = 0; ch < c; ++ch) {
          std::size_t best = ((b * h + oh * stride) * w + ow * stride) * c + ch;
          for (std::size_t i = 0; i < window; ++i)
            for (std::size_t j = 0; j < window; ++j) {
              const std::size_t idx = ((b * h + oh * stride + i) * w + ow * stride + j) * c + ch;
              if (x[idx] > x[best]) best = idx;
            }
          const std::size_t o = ((b * g.out_h + oh) * g.out_w + ow) * c + ch;
          y[o] = x[best];
          if (argmax) (*argmax)[o] = best;
        }
  return y;
}

template <class T>
BasicTensor<T> maxpool2d_backward(const Shape& input_shape, const std::vector<std::size_t>& argmax,
                                  const BasicTensor<T>& dy) {
  BasicTensor<T> dx(input_shape);
  for (std::size_t o = 0; o < dy.size(); ++o) dx[argmax[o]] += dy[o];
  return dx;
}

// ---------------------------------------------------------------------------
// dense: x [N, D], W [K, D], b [K] -> [N, K]

template <class T>
BasicTensor<T> dense(const BasicTensor<T>& x, const BasicTensor<T>& weight, cspan<T> bias = {}) {
  require_rank(x, 2, "dense input");
  require_rank(weight, 2, "dense weight");
  const std::size_t n = x.dim(0), d = x.dim(1), k = weight.dim(0);
  if (weight.dim(1) != d) throw ShapeError("dense", "input features", d, weight.dim(1));
  if (!bias.empty() && bias.size() != k) throw ShapeError("dense", "bias length", bias.size(), k);
  BasicTensor<T> y({n, k});
  for (std::size_t b = 0; b < n; ++b) {
    const T* xr = x.ptr() + b * d;
    for (std::size_t o = 0; o < k; ++o) {
      const T* wr = weight.ptr() + o * d;
      T acc = bias.empty() ? T{} : bias[o];
      for (std::size_t i = 0; i < d; ++i) acc += wr[i] * xr[i];
      y[b * k + o] = acc;
    }
  }
  return y;
}

template <class T>
struct DenseGrads {
  BasicTensor<T> dx;
  BasicTensor<T> dweight;
  std::vector<T> dbias;
};

template <class T>
DenseGrads<T> dense_backward(const BasicTensor<T>& x, const BasicTensor<T>& weight, const BasicTensor<T>& dy) {
  const std::size_t n = x.dim(0), d = x.dim(1), k = weight.dim(0);
  DenseGrads<T> g{BasicTensor<T>(x.shape()), BasicTensor<T>(weight.shape()), std::vector<T>(k, T{})};
  for (std::size_t b = 0; b < n; ++b) {
    const T* xr = x.ptr() + b * d;
    T* dxr = g.dx.ptr() + b * d;
    for (std::size_t o = 0; o < k; ++o) {
      const T gy = dy[b * k + o];
      g.dbias[o] += gy;
      const T* wr = weight.ptr() + o * d;
      T* dwr = g.dweight.ptr() + o * d;
      for (std::size_t i = 0; i < d; ++i) {
        dxr[i] += gy * wr[i];
        dwr[i] += gy * xr[i];
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// dropout (inverted scaling); mask holds 0 or 1/(1-rate)

template <class T>
BasicTensor<T> dropout(const BasicTensor<T>& x, double rate, Mode mode, std::mt19937_64& rng,
                       BasicTensor<T>* mask = nullptr) {
  if (!(rate >= 0.0 && rate < 1.0)) throw Error(Errc::invalid_argument, "dropout: rate must be in [0, 1)");
  if (mode == Mode::infer || rate == 0.0) {
    if (mask) *mask = BasicTensor<T>(x.shape(), T{1});
    return x;
  }
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  BasicTensor<T> m(x.shape());
  BasicTensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    m[i] = uniform(rng) < rate ? T{0} : keep_scale;
    y[i] = x[i] * m[i];
  }
  if (mask) *mask = std::move(m);
  return y;
}

// ---------------------------------------------------------------------------
// spatial_mean: [N, H, W, C] -> [N, C]

template <class T>
BasicTensor<T> spatial_mean(const BasicTensor<T>& x) {
  require_rank(x, 4, "spatial_mean");
  const std::size_t n = x.dim(0), hw = x.dim(1) * x.dim(2), c = x.dim(3);
  BasicTensor<T> y({n, c});
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t p = 0; p < hw; ++p)
      for (std::size_t ch = 0; ch < c; ++ch) y[b * c + ch] += x[(b * hw + p) * c + ch];
    for (std::size_t ch = 0; ch < c; ++ch) y[b * c + ch] /= static_cast<T>(hw);
  }
  return y;
}

template <class T>
BasicTensor<T> spatial_mean_backward(const Shape& input_shape, const BasicTensor<T>& dy) {
  const std::size_t n = input_shape[0], hw = input_shape[1] * input_shape[2], c = input_shape[3];
  BasicTensor<T> dx(input_shape);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t p = 0; p < hw; ++p)
      for (std::size_t ch = 0; ch < c; ++ch) dx[(b * hw + p) * c + ch] = dy[b * c + ch] / static_cast<T>(hw);
  return dx;
}

// ---------------------------------------------------------------------------
// channel plumbing

template <class T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.rank() != b.rank()) throw ShapeError("concat_channels", "rank", b.rank(), a.rank());
  for (std::size_t i = 0; i + 1 < a.rank(); ++i)
    if (a.dim(i) != b.dim(i)) throw ShapeError("concat_channels", "axis " + std::to_string(i), b.dim(i), a.dim(i));
  const std::size_t ca = a.shape().back(), cb = b.shape().back(), rows = a.size() / ca;
  Shape shape = a.shape();
  shape.back() = ca + cb;
  BasicTensor<T> y(shape);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(a.ptr() + r * ca, ca, y.ptr() + r * (ca + cb));
    std::copy_n(b.ptr() + r * cb, cb, y.ptr() + r * (ca + cb) + ca);
  }
  return y;
}

template <class T>
std::pair<BasicTensor<T>, BasicTensor<T>> split_channels(const BasicTensor<T>& x, std::size_t first) {
  const std::size_t c = x.shape().back(), rows = x.size() / c;
  Shape sa = x.shape(), sb = x.shape();
  sa.back() = first;
  sb.back() = c - first;
  BasicTensor<T> a(sa), b(sb);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(x.ptr() + r * c, first, a.ptr() + r * first);
    std::copy_n(x.ptr() + r * c + first, c - first, b.ptr() + r * (c - first));
  }
  return {std::move(a), std::move(b)};
}

/// y[..., c] = x[..., c] * scale[c]
template <class T>
BasicTensor<T> scale_channels(const BasicTensor<T>& x, cspan<T> scale) {
  const std::size_t c = x.shape().back();
  if (scale.size() != c) throw ShapeError("scale_channels", "scale length", scale.size(), c);
  BasicTensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * scale[i % c];
  return y;
}

template <class T>
std::vector<T> channel_sum_product(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  const std::size_t c = a.shape().back();
  std::vector<T> out(c, T{});
  for (std::size_t i = 0; i < a.size(); ++i) out[i % c] += a[i] * b[i];
  return out;
}

/// x [N, H, W, C] scaled by s [N, C]
template <class T>
BasicTensor<T> scale_sample_channels(const BasicTensor<T>& x, const BasicTensor<T>& s) {
  const std::size_t n = x.dim(0), c = x.dim(3), hw = x.dim(1) * x.dim(2);
  if (s.shape() != Shape{n, c}) throw Error(Errc::shape_mismatch, "scale_sample_channels: gate " + shape_string(s.shape()));
  BasicTensor<T> y(x.shape());
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t p = 0; p < hw; ++p)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const std::size_t i = (b * hw + p) * c + ch;
        y[i] = x[i] * s[b * c + ch];
      }
  return y;
}

template <class T>
BasicTensor<T> multiply(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.shape() != b.shape()) throw Error(Errc::shape_mismatch, "multiply: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  BasicTensor<T> y(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] * b[i];
  return y;
}

template <class T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.shape() != b.shape()) throw Error(Errc::shape_mismatch, "add: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  BasicTensor<T> y(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] + b[i];
  return y;
}

template <class T>
void add_inplace(BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.shape() != b.shape()) throw Error(Errc::shape_mismatch, "add_inplace: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

// ---------------------------------------------------------------------------
// softmax cross-entropy, mean over the batch

template <class T>
struct LossResult {
  T loss{};
  BasicTensor<T> dlogits;
};

template <class T>
std::vector<T> softmax_row(cspan<T> logits) {
  const T m = *std::max_element(logits.begin(), logits.end());
  std::vector<T> p(logits.size());
  T z{};
  for (std::size_t i = 0; i < logits.size(); ++i) z += (p[i] = std::exp(logits[i] - m));
  for (auto& v : p) v /= z;
  return p;
}

template <class T>
LossResult<T> softmax_cross_entropy(const BasicTensor<T>& logits, std::span<const int> labels) {
  require_rank(logits, 2, "softmax_cross_entropy");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  if (labels.size() != n) throw ShapeError("softmax_cross_entropy", "label count", labels.size(), n);
  LossResult<T> r{T{}, BasicTensor<T>(logits.shape())};
  for (std::size_t b = 0; b < n; ++b) {
    const auto label = labels[b];
    if (label < 0 || static_cast<std::size_t>(label) >= k)
      throw Error(Errc::invalid_argument, "softmax_cross_entropy: label " + std::to_string(label) + " out of range");
    const auto row = std::span<const T>(logits.ptr() + b * k, k);
    const T m = *std::max_element(row.begin(), row.end());
    T z{};
    for (T v : row) z += std::exp(v - m);
    const T log_z = std::log(z) + m;
    r.loss += log_z - row[static_cast<std::size_t>(label)];
    for (std::size_t o = 0; o < k; ++o) {
      const T p = std::exp(row[o] - log_z);
      r.dlogits[b * k + o] = (p - (static_cast<std::size_t>(label) == o ? T{1} : T{0})) / static_cast<T>(n);
    }
  }
  r.loss /= static_cast<T>(n);
  return r;
}

}  // namespace qana::ops
