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

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "qana/error.hpp"

namespace qana {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "," : "") << shape[i];
  out << ']';
  return out.str();
}

/// Dense row-major tensor. 4-D activations are NHWC, conv kernels are
/// [kh, kw, in, out].
template <class T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;

  explicit BasicTensor(Shape shape, T fill = T{})
      : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
    check_dims();
  }

  BasicTensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_dims();
    if (data_.size() != shape_size(shape_))
      throw ShapeError("tensor", "data length", data_.size(), shape_size(shape_));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  T* ptr() noexcept { return data_.data(); }
  const T* ptr() const noexcept { return data_.data(); }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  // NHWC / [kh,kw,in,out] element access.
  T& at(std::size_t a, std::size_t b, std::size_t c, std::size_t d) noexcept {
    return data_[((a * shape_[1] + b) * shape_[2] + c) * shape_[3] + d];
  }
  const T& at(std::size_t a, std::size_t b, std::size_t c, std::size_t d) const noexcept {
    return data_[((a * shape_[1] + b) * shape_[2] + c) * shape_[3] + d];
  }
  T& at(std::size_t a, std::size_t b) noexcept { return data_[a * shape_[1] + b]; }
  const T& at(std::size_t a, std::size_t b) const noexcept { return data_[a * shape_[1] + b]; }

  BasicTensor reshaped(Shape shape) const {
    if (shape_size(shape) != data_.size())
      throw ShapeError("reshape", "element count", shape_size(shape), data_.size());
    return BasicTensor(std::move(shape), data_);
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  template <class U>
  BasicTensor<U> cast() const {
    std::vector<U> out(data_.size());
    std::transform(data_.begin(), data_.end(), out.begin(), [](T v) { return static_cast<U>(v); });
    return BasicTensor<U>(shape_, std::move(out));
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  void check_dims() const {
    for (std::size_t i = 0; i < shape_.size(); ++i)
      if (shape_[i] == 0) throw ShapeError("tensor", "axis " + std::to_string(i), 0, 1);
  }

  Shape shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

template <class T>
void require_rank(const BasicTensor<T>& t, std::size_t rank, std::string_view op) {
  if (t.rank() != rank) throw ShapeError(op, "rank", t.rank(), rank);
}

template <class T>
T max_abs_diff(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.shape() != b.shape()) throw Error(Errc::shape_mismatch, "max_abs_diff: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  T worst{};
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

template <class T>
T max_abs(const BasicTensor<T>& a) {
  T worst{};
  for (T v : a.data()) worst = std::max(worst, std::abs(v));
  return worst;
}

}  // namespace qana
