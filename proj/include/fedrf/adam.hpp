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

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "fedrf/tensor.hpp"

namespace fedrf {

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment buffers for one parameter.
template <typename T>
struct AdamState {
  Buffer<T> m;
  Buffer<T> v;
  std::uint64_t step = 0;
  AdamHyper hyper;

  AdamState() = default;
  AdamState(std::size_t n, AdamHyper h) : m(n, T(0)), v(n, T(0)), hyper(h) {}
};

/// One bias-corrected Adam update; zeroes the gradient afterwards.
template <typename T>
void adam_step(Parameter<T>& param, AdamState<T>& state) {
  if (!param.trainable)
    throw std::logic_error("adam_step: parameter '" + param.name + "' is frozen");
  if (state.m.size() != param.size() || state.v.size() != param.size())
    throw std::invalid_argument("adam_step: optimizer state does not match parameter '" +
                                param.name + "'");
  ++state.step;
  const auto& h = state.hyper;
  const T b1 = static_cast<T>(h.beta1);
  const T b2 = static_cast<T>(h.beta2);
  const T corr1 = static_cast<T>(1.0 - std::pow(h.beta1, static_cast<double>(state.step)));
  const T corr2 = static_cast<T>(1.0 - std::pow(h.beta2, static_cast<double>(state.step)));
  const T lr = static_cast<T>(h.lr);
  const T eps = static_cast<T>(h.eps);
  for (std::size_t i = 0; i < param.size(); ++i) {
    const T g = param.grad[i];
    state.m[i] = b1 * state.m[i] + (T(1) - b1) * g;
    state.v[i] = b2 * state.v[i] + (T(1) - b2) * g * g;
    const T m_hat = state.m[i] / corr1;
    const T v_hat = state.v[i] / corr2;
    param.values[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
  }
  param.zero_grad();
}

}  // namespace fedrf
