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


// 8-bit affine quantization: x ~ scale * (q - zero_point).
// Activations use uint8 codes; weights use symmetric int8 codes in
// [-127, 127] with zero_point 0.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "qana/tensor.hpp"

namespace qana {

struct QuantParams {
  double scale = 1.0;
  std::int32_t zero_point = 0;

  void validate(const std::string& what) const {
    if (!(scale > 0.0) || !std::isfinite(scale)) throw Error(Errc::invalid_argument, what + ": quant scale must be > 0");
    if (zero_point < 0 || zero_point > 255)
      throw Error(Errc::invalid_argument, what + ": zero point " + std::to_string(zero_point) + " outside [0, 255]");
  }

  friend bool operator==(const QuantParams&, const QuantParams&) = default;
};

struct QuantizedTensor {
  Shape shape;
  std::vector<std::uint8_t> data;
  QuantParams qp;
};

/// Symmetric per-tensor int8 weights.
struct QuantizedWeights {
  Shape shape;
  std::vector<std::int8_t> data;
  double scale = 1.0;

  friend bool operator==(const QuantizedWeights&, const QuantizedWeights&) = default;
};

inline std::uint8_t quantize_value(double x, const QuantParams& qp) {
  const double q = std::round(x / qp.scale) + qp.zero_point;  // std::round: half away from zero
  return static_cast<std::uint8_t>(std::clamp(q, 0.0, 255.0));
}

inline double dequantize_value(std::uint8_t q, const QuantParams& qp) {
  return qp.scale * (static_cast<double>(q) - qp.zero_point);
}

template <class T>
QuantizedTensor quantize_tensor(const BasicTensor<T>& x, const QuantParams& qp) {
  qp.validate("quantize_tensor");
  QuantizedTensor out{x.shape(), std::vector<std::uint8_t>(x.size()), qp};
  for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = quantize_value(static_cast<double>(x[i]), qp);
  return out;
}

inline TensorD dequantize(const QuantizedTensor& qt) {
  TensorD out(qt.shape);
  for (std::size_t i = 0; i < qt.data.size(); ++i) out[i] = dequantize_value(qt.data[i], qt.qp);
  return out;
}

/// Round-trip x through the 8-bit grid of qp.
inline double fake_quant(double x, const QuantParams& qp) { return dequantize_value(quantize_value(x, qp), qp); }

template <class T>
QuantizedWeights quantize_weights(const BasicTensor<T>& w) {
  double amax = 0.0;
  for (T v : w.data()) amax = std::max(amax, std::abs(static_cast<double>(v)));
  QuantizedWeights out{w.shape(), std::vector<std::int8_t>(w.size()), amax > 0.0 ? amax / 127.0 : 1.0};
  for (std::size_t i = 0; i < w.size(); ++i)
    out.data[i] = static_cast<std::int8_t>(std::clamp(std::round(static_cast<double>(w[i]) / out.scale), -127.0, 127.0));
  return out;
}

inline TensorD dequantize(const QuantizedWeights& w) {
  TensorD out(w.shape);
  for (std::size_t i = 0; i < w.data.size(); ++i) out[i] = w.scale * w.data[i];
  return out;
}

/// Nearest-rank percentile (p in [0, 100]) of an unsorted sample.
template <class T>
double percentile(std::vector<T> values, double p) {
  if (values.empty()) throw Error(Errc::empty_input, "percentile: no values");
  if (!(p >= 0.0 && p <= 100.0)) throw Error(Errc::invalid_argument, "percentile: p outside [0, 100]");
  const auto n = values.size();
  auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(n)));
  rank = std::clamp<std::size_t>(rank, 1, n);
  auto kth = values.begin() + static_cast<std::ptrdiff_t>(rank - 1);
  std::nth_element(values.begin(), kth, values.end());
  return static_cast<double>(*kth);
}

inline constexpr double kCalibrationPercentile = 99.9;
// Keeps dead (all-zero) slots representable with a positive scale.
inline constexpr double kMinActivationScale = 1e-6;

/// [0, p99.9] onto codes 0..255, zero_point 0.
template <class T>
QuantParams calibrate_unsigned(const std::vector<T>& values) {
  return {std::max(percentile(values, kCalibrationPercentile) / 255.0, kMinActivationScale), 0};
}

/// Symmetric range [-p99.9(|x|), p99.9(|x|)] mapped to +-127 levels.
template <class T>
QuantParams calibrate_symmetric(std::vector<T> values) {
  for (auto& v : values) v = std::abs(v);
  return {std::max(percentile(std::move(values), kCalibrationPercentile) / 127.0, kMinActivationScale), 0};
}

/// [min(0, p0.1), max(0, p99.9)] onto 0..255 with a zero point.
template <class T>
QuantParams calibrate_asymmetric(const std::vector<T>& values) {
  const double lo = std::min(0.0, percentile(values, 100.0 - kCalibrationPercentile));
  const double hi = std::max(0.0, percentile(values, kCalibrationPercentile));
  const double scale = std::max((hi - lo) / 255.0, kMinActivationScale);
  return {scale, static_cast<std::int32_t>(std::clamp(std::round(-lo / scale), 0.0, 255.0))};
}

}  // namespace qana
