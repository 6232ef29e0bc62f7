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

// Straightforward reference implementations used as test oracles. They are
// written independently of the library kernels: explicit padding arithmetic,
// no zero-skipping, no loop reordering.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "qana/tensor.hpp"

namespace oracle {

using qana::BasicTensor;
using qana::Shape;

struct Pads {
  std::size_t out;
  long before;
};

inline Pads same_pads(std::size_t in, std::size_t k, std::size_t stride) {
  const std::size_t out = (in + stride - 1) / stride;
  const long total = std::max<long>(0, static_cast<long>((out - 1) * stride + k) - static_cast<long>(in));
  return {out, total / 2};
}

inline Pads valid_pads(std::size_t in, std::size_t k, std::size_t stride) { return {(in - k) / stride + 1, 0}; }

template <class T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& k, const std::vector<T>& bias,
                      std::size_t stride, bool same) {
  const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), ci = x.dim(3);
  const std::size_t kh = k.dim(0), kw = k.dim(1), co = k.dim(3);
  const Pads ph = same ? same_pads(h, kh, stride) : valid_pads(h, kh, stride);
  const Pads pw = same ? same_pads(w, kw, stride) : valid_pads(w, kw, stride);
  BasicTensor<T> y({n, ph.out, pw.out, co});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t oy = 0; oy < ph.out; ++oy)
      for (std::size_t ox = 0; ox < pw.out; ++ox)
        for (std::size_t o = 0; o < co; ++o) {
          T acc = bias.empty() ? T{} : bias[o];
          for (std::size_t dy = 0; dy < kh; ++dy)
            for (std::size_t dx = 0; dx < kw; ++dx)
              for (std::size_t i = 0; i < ci; ++i) {
                const long iy = static_cast<long>(oy * stride + dy) - ph.before;
                const long ix = static_cast<long>(ox * stride + dx) - pw.before;
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(w)) continue;
                acc += x.at(b, iy, ix, i) * k.at(dy, dx, i, o);
              }
          y.at(b, oy, ox, o) = acc;
        }
  return y;
}

template <class T>
BasicTensor<T> depthwise(const BasicTensor<T>& x, const BasicTensor<T>& k, std::size_t stride, bool same) {
  const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  const std::size_t kh = k.dim(0), kw = k.dim(1);
  const Pads ph = same ? same_pads(h, kh, stride) : valid_pads(h, kh, stride);
  const Pads pw = same ? same_pads(w, kw, stride) : valid_pads(w, kw, stride);
  BasicTensor<T> y({n, ph.out, pw.out, c});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t oy = 0; oy < ph.out; ++oy)
      for (std::size_t ox = 0; ox < pw.out; ++ox)
        for (std::size_t ch = 0; ch < c; ++ch) {
          T acc{};
          for (std::size_t dy = 0; dy < kh; ++dy)
            for (std::size_t dx = 0; dx < kw; ++dx) {
              const long iy = static_cast<long>(oy * stride + dy) - ph.before;
              const long ix = static_cast<long>(ox * stride + dx) - pw.before;
              if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(w)) continue;
              acc += x.at(b, iy, ix, ch) * k.at(dy, dx, ch, 0);
            }
          y.at(b, oy, ox, ch) = acc;
        }
  return y;
}

template <class T>
BasicTensor<T> maxpool(const BasicTensor<T>& x, std::size_t window, std::size_t stride) {
  const std::size_t n = x.dim(0), c = x.dim(3);
  const std::size_t oh = (x.dim(1) - window) / stride + 1, ow = (x.dim(2) - window) / stride + 1;
  BasicTensor<T> y({n, oh, ow, c});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox)
        for (std::size_t ch = 0; ch < c; ++ch) {
          std::vector<T> window_values;
          for (std::size_t dy = 0; dy < window; ++dy)
            for (std::size_t dx = 0; dx < window; ++dx)
              window_values.push_back(x.at(b, oy * stride + dy, ox * stride + dx, ch));
          y.at(b, oy, ox, ch) = *std::max_element(window_values.begin(), window_values.end());
        }
  return y;
}

template <class T>
BasicTensor<T> dense(const BasicTensor<T>& x, const BasicTensor<T>& w, const std::vector<T>& bias) {
  BasicTensor<T> y({x.dim(0), w.dim(0)});
  for (std::size_t b = 0; b < x.dim(0); ++b)
    for (std::size_t o = 0; o < w.dim(0); ++o) {
      T acc = bias.empty() ? T{} : bias[o];
      for (std::size_t i = 0; i < x.dim(1); ++i) acc += w.at(o, i) * x.at(b, i);
      y.at(b, o) = acc;
    }
  return y;
}

/// Largest elementwise |a - b| / max(1e-6, |b|) with an absolute floor for
/// values near zero.
template <class T>
double max_rel_diff(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i]));
    worst = std::max(worst, d / std::max(1.0, std::abs(static_cast<double>(b[i]))));
  }
  return worst;
}

/// ||a - n|| / max(||a|| + ||n||, tiny), the usual gradient-check metric.
inline double relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric) {
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  const double denom = std::sqrt(na) + std::sqrt(nn);
  return denom < 1e-300 ? 0.0 : std::sqrt(diff) / denom;
}

/// Central differences of f with respect to every element of `values`.
inline std::vector<double> numeric_gradient(std::span<double> values, const std::function<double()>& f,
                                            double h = 1e-6) {
  std::vector<double> g(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + h;
    const double up = f();
    values[i] = saved - h;
    const double down = f();
    values[i] = saved;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

inline BasicTensor<double> random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  BasicTensor<double> t(std::move(shape));
  for (auto& v : t.data()) v = u(rng);
  return t;
}

inline BasicTensor<float> random_tensor_f(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  return random_tensor(std::move(shape), rng, lo, hi).cast<float>();
}

}  // namespace oracle
