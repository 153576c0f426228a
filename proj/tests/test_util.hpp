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

// Test-only oracles and generators. Nothing here calls into the kernels it
// is used to check.

#pragma once

#include <cstring>
#include <random>
#include <span>
#include <type_traits>
#include <vector>

#include "fedrf/tensor.hpp"
#include "fedrf/wavenet.hpp"

namespace fedrf::testing {

/// Direct summation over the zero-padded sequence.
inline std::vector<std::vector<double>> conv_oracle(const std::vector<std::vector<double>>& x,
                                                    std::span<const double> w, std::size_t c_out,
                                                    std::size_t kernel, std::span<const double> bias,
                                                    std::size_t dilation) {
  const std::size_t c_in = x.size();
  const long T = static_cast<long>(x.front().size());
  const long half = static_cast<long>((kernel - 1) / 2);
  std::vector<std::vector<double>> y(c_out, std::vector<double>(static_cast<std::size_t>(T), 0.0));
  for (std::size_t co = 0; co < c_out; ++co)
    for (long t = 0; t < T; ++t) {
      double acc = bias.empty() ? 0.0 : bias[co];
      for (std::size_t ci = 0; ci < c_in; ++ci)
        for (std::size_t k = 0; k < kernel; ++k) {
          const long src = t + static_cast<long>(dilation) * (static_cast<long>(k) - half);
          if (src < 0 || src >= T) continue;
          acc += x[ci][static_cast<std::size_t>(src)] * w[(co * c_in + ci) * kernel + k];
        }
      y[co][static_cast<std::size_t>(t)] = acc;
    }
  return y;
}

template <typename T>
Tensor2D<T> random_tensor(std::size_t c, std::size_t t, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Tensor2D<T> x(c, t);
  for (auto& v : x.values()) v = static_cast<T>(n(rng));
  return x;
}

template <typename T>
void randomize(Parameter<T>& p, std::mt19937_64& rng, double scale = 0.5) {
  std::normal_distribution<double> n(0.0, scale);
  for (auto& v : p.values) v = static_cast<T>(n(rng));
}

template <typename T>
bool bit_identical(const Tensor2D<T>& a, const Tensor2D<T>& b) {
  return a.same_shape(b) && std::memcmp(a.data(), b.data(), a.size() * sizeof(T)) == 0;
}

template <typename A, typename B>
bool bit_identical(const A& a, const B& b) {
  static_assert(std::is_same_v<typename A::value_type, typename B::value_type>);
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(typename A::value_type)) == 0;
}

/// Flattened values of the given parameters.
template <typename T>
std::vector<double> gather(const std::vector<Parameter<T>*>& params) {
  std::vector<double> out;
  for (const auto* p : params)
    for (const T v : p->values) out.push_back(static_cast<double>(v));
  return out;
}

template <typename T>
void scatter(const std::vector<Parameter<T>*>& params, std::span<const double> w) {
  std::size_t i = 0;
  for (auto* p : params)
    for (auto& v : p->values) v = static_cast<T>(w[i++]);
}

template <typename T>
std::vector<double> gather_grad(const std::vector<Parameter<T>*>& params) {
  std::vector<double> out;
  for (const auto* p : params)
    for (const T v : p->grad) out.push_back(static_cast<double>(v));
  return out;
}

/// Fixed random linear functional L(y) = <proj, y>, used to turn tensor
/// outputs into scalars for gradient checks.
struct Projection {
  Tensor2D<double> weights;

  double value(const Tensor2D<double>& y) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) acc += weights.values()[i] * y.values()[i];
    return acc;
  }
};

}  // namespace fedrf::testing
