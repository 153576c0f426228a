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

// Forward/backward kernels for fixed-architecture 1-D convolutional nets.
//
// Convolutions use zero-padded "same" output with symmetric padding of
// dilation*(K-1)/2 on each side; K must be odd. Per tap k the output gets
//   y[:, t] += W_k * x[:, t + dilation*(k - (K-1)/2)]
// which is evaluated as one GEMM per tap over the valid time range.

#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>

#include <Eigen/Core>

#include "fedrf/tensor.hpp"

namespace fedrf {

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using DynStride = Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>;

/// Slice W[:, :, k] of a [C_out x C_in x K] weight as a strided matrix.
template <typename T>
Eigen::Map<const RowMat<T>, 0, DynStride> tap(const Buffer<T>& w, std::size_t c_out,
                                              std::size_t c_in, std::size_t kernel,
                                              std::size_t k) {
  return {w.data() + k, static_cast<Eigen::Index>(c_out), static_cast<Eigen::Index>(c_in),
          DynStride(static_cast<Eigen::Index>(c_in * kernel), static_cast<Eigen::Index>(kernel))};
}

template <typename T>
Eigen::Map<RowMat<T>, 0, DynStride> tap(Buffer<T>& w, std::size_t c_out, std::size_t c_in,
                                        std::size_t kernel, std::size_t k) {
  return {w.data() + k, static_cast<Eigen::Index>(c_out), static_cast<Eigen::Index>(c_in),
          DynStride(static_cast<Eigen::Index>(c_in * kernel), static_cast<Eigen::Index>(kernel))};
}

/// Valid output range [t0, t0 + len) for a tap with signed offset `off`.
inline std::pair<std::ptrdiff_t, std::ptrdiff_t> tap_range(std::ptrdiff_t off, std::ptrdiff_t T) {
  const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, -off);
  const std::ptrdiff_t t1 = std::min<std::ptrdiff_t>(T, T - off);
  return {t0, std::max<std::ptrdiff_t>(0, t1 - t0)};
}

template <typename T>
void check_conv_shapes(const Tensor2D<T>& x, const Parameter<T>& weight, const std::type_identity_t<Parameter<T>>* bias,
                       std::size_t dilation) {
  if (weight.shape.size() != 3)
    throw std::invalid_argument("conv1d: weight '" + weight.name + "' must be [C_out x C_in x K]");
  const std::size_t c_out = weight.shape[0];
  const std::size_t c_in = weight.shape[1];
  const std::size_t kernel = weight.shape[2];
  if (x.channels() != c_in)
    throw std::invalid_argument("conv1d: input has " + std::to_string(x.channels()) +
                                " channels, weight '" + weight.name + "' expects " +
                                std::to_string(c_in));
  if (kernel % 2 == 0) throw std::invalid_argument("conv1d: kernel size must be odd");
  if (dilation == 0) throw std::invalid_argument("conv1d: dilation must be positive");
  if (dilation * (kernel - 1) >= x.time())
    throw std::invalid_argument("conv1d: dilation span " + std::to_string(dilation * (kernel - 1)) +
                                " must be shorter than the sequence (" + std::to_string(x.time()) +
                                ")");
  if (bias && (bias->size() != c_out))
    throw std::invalid_argument("conv1d: bias '" + bias->name + "' must have C_out entries");
}

}  // namespace detail

/// Dilated 1-D convolution, zero-padded "same" output.
template <typename T>
Tensor2D<T> conv1d_forward(const Tensor2D<T>& x, const Parameter<T>& weight,
                           const std::type_identity_t<Parameter<T>>* bias, std::size_t dilation) {
  detail::check_conv_shapes(x, weight, bias, dilation);
  const std::size_t c_out = weight.shape[0];
  const std::size_t c_in = weight.shape[1];
  const std::size_t kernel = weight.shape[2];
  const auto len_t = static_cast<std::ptrdiff_t>(x.time());
  const auto half = static_cast<std::ptrdiff_t>((kernel - 1) / 2);

  Tensor2D<T> y(c_out, x.time());
  auto Y = y.matrix();
  if (bias) {
    for (std::size_t c = 0; c < c_out; ++c)
      Y.row(static_cast<Eigen::Index>(c)).setConstant(bias->values[c]);
  }
  const auto X = x.matrix();
  for (std::size_t k = 0; k < kernel; ++k) {
    const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(dilation) * (static_cast<std::ptrdiff_t>(k) - half);
    const auto [t0, len] = detail::tap_range(off, len_t);
    if (len == 0) continue;
    const auto Wk = detail::tap(weight.values, c_out, c_in, kernel, k);
    Y.middleCols(t0, len).noalias() += Wk * X.middleCols(t0 + off, len);
  }
  return y;
}

/// Reverse mode of conv1d_forward. Adds dL/dx into *grad_x when non-null and
/// accumulates weight/bias gradients for trainable parameters only.
template <typename T>
void conv1d_backward_accumulate(const Tensor2D<T>& grad_y, const Tensor2D<T>& x,
                                Parameter<T>& weight, std::type_identity_t<Parameter<T>>* bias, std::size_t dilation,
                                Tensor2D<T>* grad_x) {
  detail::check_conv_shapes(x, weight, bias, dilation);
  const std::size_t c_out = weight.shape[0];
  const std::size_t c_in = weight.shape[1];
  const std::size_t kernel = weight.shape[2];
  if (grad_y.channels() != c_out || grad_y.time() != x.time())
    throw std::invalid_argument("conv1d_backward: grad_y shape does not match forward output");
  if (grad_x && !grad_x->same_shape(x))
    throw std::invalid_argument("conv1d_backward: grad_x shape does not match input");

  const auto len_t = static_cast<std::ptrdiff_t>(x.time());
  const auto half = static_cast<std::ptrdiff_t>((kernel - 1) / 2);
  const auto GY = grad_y.matrix();
  const auto X = x.matrix();

  if (bias && bias->trainable) {
    for (std::size_t c = 0; c < c_out; ++c)
      bias->grad[c] += GY.row(static_cast<Eigen::Index>(c)).sum();
  }
  for (std::size_t k = 0; k < kernel; ++k) {
    const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(dilation) * (static_cast<std::ptrdiff_t>(k) - half);
    const auto [t0, len] = detail::tap_range(off, len_t);
    if (len == 0) continue;
    if (weight.trainable) {
      auto gWk = detail::tap(weight.grad, c_out, c_in, kernel, k);
      gWk.noalias() += GY.middleCols(t0, len) * X.middleCols(t0 + off, len).transpose();
    }
    if (grad_x) {
      const auto Wk = detail::tap(weight.values, c_out, c_in, kernel, k);
      grad_x->matrix().middleCols(t0 + off, len).noalias() +=
          Wk.transpose() * GY.middleCols(t0, len);
    }
  }
}

/// Reverse mode of conv1d_forward returning a fresh dL/dx.
template <typename T>
Tensor2D<T> conv1d_backward(const Tensor2D<T>& grad_y, const Tensor2D<T>& x,
                            Parameter<T>& weight, std::type_identity_t<Parameter<T>>* bias, std::size_t dilation) {
  Tensor2D<T> grad_x(x.channels(), x.time());
  conv1d_backward_accumulate(grad_y, x, weight, bias, dilation, &grad_x);
  return grad_x;
}

/// h = sigmoid(gate) * tanh(filter); gate is the first half of the channels.
template <typename T>
Tensor2D<T> gated_activation(const Tensor2D<T>& z) {
  if (z.channels() % 2 != 0)
    throw std::invalid_argument("gated_activation: channel count must be even");
  const std::size_t c = z.channels() / 2;
  const auto n = static_cast<Eigen::Index>(c * z.time());
  Tensor2D<T> h(c, z.time());
  const Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>> gate(z.data(), n);
  const Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>> filt(z.data() + n, n);
  Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>>(h.data(), n) = gate.logistic() * filt.tanh();
  return h;
}

template <typename T>
Tensor2D<T> gated_activation_backward(const Tensor2D<T>& z, const Tensor2D<T>& grad_h) {
  if (z.channels() % 2 != 0)
    throw std::invalid_argument("gated_activation: channel count must be even");
  const std::size_t c = z.channels() / 2;
  if (grad_h.channels() != c || grad_h.time() != z.time())
    throw std::invalid_argument("gated_activation_backward: grad shape mismatch");
  const auto n = static_cast<Eigen::Index>(c * z.time());
  using Arr = Eigen::Array<T, Eigen::Dynamic, 1>;
  Tensor2D<T> grad_z(z.channels(), z.time());
  const Arr s = Eigen::Map<const Arr>(z.data(), n).logistic();
  const Arr th = Eigen::Map<const Arr>(z.data() + n, n).tanh();
  const Eigen::Map<const Arr> gh(grad_h.data(), n);
  Eigen::Map<Arr>(grad_z.data(), n) = gh * th * s * (T(1) - s);
  Eigen::Map<Arr>(grad_z.data() + n, n) = gh * s * (T(1) - th * th);
  return grad_z;
}

template <typename T>
Tensor2D<T> relu(const Tensor2D<T>& x) {
  Tensor2D<T> y = x;
  for (auto& v : y.values()) v = v > T(0) ? v : T(0);
  return y;
}

/// dL/dx for y = relu(x), given the forward input.
template <typename T>
Tensor2D<T> relu_backward(const Tensor2D<T>& x, const Tensor2D<T>& grad_y) {
  if (!x.same_shape(grad_y)) throw std::invalid_argument("relu_backward: shape mismatch");
  Tensor2D<T> g = grad_y;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!(x.values()[i] > T(0))) g.values()[i] = T(0);
  return g;
}

template <typename T>
struct LossAndGrad {
  double loss = 0.0;
  Tensor2D<T> grad;
};

/// Mean squared error over every element, with dL/dpred = 2/N (pred - target).
template <typename T>
LossAndGrad<T> mse_loss(const Tensor2D<T>& pred, const Tensor2D<T>& target) {
  if (!pred.same_shape(target)) throw std::invalid_argument("mse_loss: shape mismatch");
  const std::size_t n = pred.size();
  LossAndGrad<T> out{0.0, Tensor2D<T>(pred.channels(), pred.time())};
  const T scale = T(2) / static_cast<T>(n);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const T d = pred.values()[i] - target.values()[i];
    acc += static_cast<double>(d) * static_cast<double>(d);
    out.grad.values()[i] = scale * d;
  }
  out.loss = acc / static_cast<double>(n);
  return out;
}

/// Loss only; skips the gradient buffer.
template <typename T>
double mse_value(const Tensor2D<T>& pred, const Tensor2D<T>& target) {
  if (!pred.same_shape(target)) throw std::invalid_argument("mse_loss: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred.values()[i]) - static_cast<double>(target.values()[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(pred.size());
}

}  // namespace fedrf
