// Copyright 2026 The fedrf Authors. All Rights Reserved.
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
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace fedrf {

/// Storage for tensors and parameters. Every buffer starts on a SIMD boundary
/// so Eigen's vectorised reductions split work the same way on every run.
template <typename T>
using Buffer = std::vector<T, Eigen::aligned_allocator<T>>;

/// Dense [channels x time] activation array, channel-major.
template <typename T>
class Tensor2D {
 public:
  using value_type = T;
  using MatrixMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ConstMatrixMap =
      Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

  Tensor2D() = default;
  Tensor2D(std::size_t channels, std::size_t time, T fill = T(0))
      : channels_(channels), time_(time), values_(channels * time, fill) {}
  Tensor2D(std::size_t channels, std::size_t time, Buffer<T> values)
      : channels_(channels), time_(time), values_(std::move(values)) {
    if (values_.size() != channels_ * time_)
      throw std::invalid_argument("Tensor2D: value count does not match channels x time");
  }

  /// Builds from nested rows, e.g. {{1, 2, 3}}.
  static Tensor2D from_rows(const std::vector<std::vector<T>>& rows) {
    if (rows.empty()) throw std::invalid_argument("Tensor2D: no rows");
    Tensor2D out(rows.size(), rows.front().size());
    for (std::size_t c = 0; c < rows.size(); ++c) {
      if (rows[c].size() != out.time_) throw std::invalid_argument("Tensor2D: ragged rows");
      std::copy(rows[c].begin(), rows[c].end(), out.row(c).begin());
    }
    return out;
  }

  std::size_t channels() const noexcept { return channels_; }
  std::size_t time() const noexcept { return time_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  T& operator()(std::size_t c, std::size_t t) { return values_[c * time_ + t]; }
  const T& operator()(std::size_t c, std::size_t t) const { return values_[c * time_ + t]; }

  std::span<T> row(std::size_t c) { return {values_.data() + c * time_, time_}; }
  std::span<const T> row(std::size_t c) const { return {values_.data() + c * time_, time_}; }

  Buffer<T>& values() noexcept { return values_; }
  const Buffer<T>& values() const noexcept { return values_; }
  T* data() noexcept { return values_.data(); }
  const T* data() const noexcept { return values_.data(); }

  MatrixMap matrix() {
    return MatrixMap(values_.data(), static_cast<Eigen::Index>(channels_),
                     static_cast<Eigen::Index>(time_));
  }
  ConstMatrixMap matrix() const {
    return ConstMatrixMap(values_.data(), static_cast<Eigen::Index>(channels_),
                          static_cast<Eigen::Index>(time_));
  }

  /// Copy of channels [first, first + count).
  Tensor2D slice_channels(std::size_t first, std::size_t count) const {
    if (first + count > channels_) throw std::invalid_argument("Tensor2D: channel slice out of range");
    Tensor2D out(count, time_);
    std::copy_n(values_.begin() + static_cast<std::ptrdiff_t>(first * time_), count * time_,
                out.values_.begin());
    return out;
  }

  void fill(T v) { std::fill(values_.begin(), values_.end(), v); }

  bool same_shape(const Tensor2D& o) const noexcept {
    return channels_ == o.channels_ && time_ == o.time_;
  }

  bool all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](T v) { return std::isfinite(v); });
  }

  friend bool operator==(const Tensor2D&, const Tensor2D&) = default;

 private:
  std::size_t channels_ = 0;
  std::size_t time_ = 0;
  Buffer<T> values_;
};

/// Trainable tensor with an accumulating gradient buffer.
template <typename T>
struct Parameter {
  std::string name;
  std::vector<std::size_t> shape;
  Buffer<T> values;
  Buffer<T> grad;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, std::vector<std::size_t> s, bool train = true)
      : name(std::move(n)), shape(std::move(s)), trainable(train) {
    const std::size_t count =
        std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
    values.assign(count, T(0));
    grad.assign(count, T(0));
  }

  std::size_t size() const noexcept { return values.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }
};

/// Element count implied by a shape.
inline std::size_t shape_size(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

}  // namespace fedrf
