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

#include <cstddef>
#include <stdexcept>
#include <variant>
#include <vector>

#include "fedrf/tensor.hpp"

namespace fedrf {

/// Low-rank branch on every dilated convolution:
///   z_i = DilConv_i(x) + (alpha / rank) * up_i(down_i(x))
/// down_i: [rank x C x K] with the host block's dilation, up_i: [2C x rank x 1].
/// Neither carries a bias.
template <typename T>
struct LoraAdapter {
  std::size_t rank = 0;
  double alpha = 0.0;
  std::vector<Parameter<T>> down;
  std::vector<Parameter<T>> up;

  T scale() const { return static_cast<T>(alpha / static_cast<double>(rank)); }
};

/// Per-block channel-wise affine transform of the block input,
/// x'_i = gamma_i * x_i + beta_i.
template <typename T>
struct FilmAdapter {
  std::vector<Parameter<T>> gamma;
  std::vector<Parameter<T>> beta;
};

template <typename T>
using AdapterSet = std::variant<std::monostate, LoraAdapter<T>, FilmAdapter<T>>;

/// x'[c, t] = gamma[c] x[c, t] + beta[c]
template <typename T>
Tensor2D<T> film_forward(const Tensor2D<T>& x, const Parameter<T>& gamma, const Parameter<T>& beta) {
  if (gamma.size() != x.channels() || beta.size() != x.channels())
    throw std::invalid_argument("film: gamma/beta size does not match channel count");
  Tensor2D<T> y(x.channels(), x.time());
  for (std::size_t c = 0; c < x.channels(); ++c) {
    const T g = gamma.values[c];
    const T b = beta.values[c];
    const auto in = x.row(c);
    auto out = y.row(c);
    for (std::size_t t = 0; t < x.time(); ++t) out[t] = g * in[t] + b;
  }
  return y;
}

/// Returns dL/dx and accumulates gamma/beta gradients when trainable.
template <typename T>
Tensor2D<T> film_backward(const Tensor2D<T>& x, const Tensor2D<T>& grad_y, Parameter<T>& gamma,
                          Parameter<T>& beta) {
  if (!x.same_shape(grad_y)) throw std::invalid_argument("film_backward: shape mismatch");
  Tensor2D<T> grad_x(x.channels(), x.time());
  for (std::size_t c = 0; c < x.channels(); ++c) {
    const auto in = x.row(c);
    const auto gy = grad_y.row(c);
    auto gx = grad_x.row(c);
    const T g = gamma.values[c];
    T dg = 0, db = 0;
    for (std::size_t t = 0; t < x.time(); ++t) {
      gx[t] = g * gy[t];
      dg += gy[t] * in[t];
      db += gy[t];
    }
    if (gamma.trainable) gamma.grad[c] += dg;
    if (beta.trainable) beta.grad[c] += db;
  }
  return grad_x;
}

}  // namespace fedrf
