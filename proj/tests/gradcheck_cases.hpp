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

// Randomised finite-difference scenarios in 64-bit mode, shared by the unit
// tests and the acceptance suite. Each returns the worst relative error.

#pragma once

#include <random>
#include <span>
#include <vector>

#include "fedrf/grad_check.hpp"
#include "fedrf/ops.hpp"
#include "fedrf/peft.hpp"
#include "fedrf/wavenet.hpp"
#include "test_util.hpp"

namespace fedrf::testing {

inline constexpr double kModelFdStep = 1e-7;

/// Random conv (C_in, C_out <= 3, T <= 8) checked on input, weight and bias.
inline double conv_gradcheck(std::uint64_t seed, std::size_t dilation) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> ch(1, 3);
  const std::size_t c_in = ch(rng), c_out = ch(rng), kernel = 3;
  const std::size_t min_t = dilation * (kernel - 1) + 1;
  const std::size_t T = std::uniform_int_distribution<std::size_t>(std::max<std::size_t>(min_t, 2), std::max<std::size_t>(min_t, 8))(rng);
  auto x = random_tensor<double>(c_in, T, rng);
  Parameter<double> w("w", {c_out, c_in, kernel}), b("b", {c_out});
  randomize(w, rng);
  randomize(b, rng);
  const Projection proj{random_tensor<double>(c_out, T, rng)};

  std::vector<double> point(x.values().begin(), x.values().end());
  for (double v : w.values) point.push_back(v);
  for (double v : b.values) point.push_back(v);
  auto f = [&](std::span<const double> p, std::vector<double>* grad) {
    std::copy_n(p.begin(), x.size(), x.values().begin());
    std::copy_n(p.begin() + x.size(), w.size(), w.values.begin());
    std::copy_n(p.begin() + x.size() + w.size(), b.size(), b.values.begin());
    const auto y = conv1d_forward(x, w, &b, dilation);
    if (grad) {
      w.zero_grad();
      b.zero_grad();
      const auto gx = conv1d_backward(proj.weights, x, w, &b, dilation);
      grad->assign(gx.values().begin(), gx.values().end());
      grad->insert(grad->end(), w.grad.begin(), w.grad.end());
      grad->insert(grad->end(), b.grad.begin(), b.grad.end());
    }
    return proj.value(y);
  };
  return grad_check(f, point, {1e-3});
}

/// Random pre-activation [2C x T] with C = 2, T = 4.
inline double gated_gradcheck(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto z = random_tensor<double>(4, 4, rng, 1.5);
  const Projection proj{random_tensor<double>(2, 4, rng)};
  auto f = [&](std::span<const double> p, std::vector<double>* grad) {
    std::copy(p.begin(), p.end(), z.values().begin());
    if (grad) {
      const auto gz = gated_activation_backward(z, proj.weights);
      grad->assign(gz.values().begin(), gz.values().end());
    }
    return proj.value(gated_activation(z));
  };
  return grad_check(f, z.values(), {1e-6});
}

enum class AdapterCase { None, Lora, Film };

/// MSE of a randomly initialised model against a random target, checked on
/// every trainable parameter and on the input.
inline double model_gradcheck(std::uint64_t seed, std::size_t blocks, std::size_t channels,
                              std::size_t T, AdapterCase adapter, std::size_t rank = 2) {
  std::mt19937_64 rng(seed);
  WaveNetConfig cfg{blocks, channels, 3, 5};
  auto model = build<double>(cfg, seed);
  for (auto* p : model.backbone_parameters()) randomize(*p, rng, 0.4);
  if (adapter == AdapterCase::Lora) {
    attach_lora(model, rank, 1.5 * static_cast<double>(rank), seed + 1);
    for (auto* p : model.adapter_parameters()) randomize(*p, rng, 0.4);
  } else if (adapter == AdapterCase::Film) {
    attach_film(model);
    for (auto* p : model.adapter_parameters()) randomize(*p, rng, 0.6);
  }
  auto x = random_tensor<double>(2, T, rng);
  const auto target = random_tensor<double>(2, T, rng);

  std::vector<Parameter<double>*> params;
  for (auto* p : model.parameters())
    if (p->trainable) params.push_back(p);
  std::vector<double> point(x.values().begin(), x.values().end());
  const auto pv = gather(params);
  point.insert(point.end(), pv.begin(), pv.end());

  ForwardTrace<double> trace;
  auto f = [&](std::span<const double> p, std::vector<double>* grad) {
    std::copy_n(p.begin(), x.size(), x.values().begin());
    scatter(params, p.subspan(x.size()));
    if (!grad) return mse_value(forward(model, x), target);
    const auto y = forward(model, x, &trace);
    const auto lg = mse_loss(y, target);
    model.zero_grad();
    Tensor2D<double> gx(2, T);
    backward(model, trace, lg.grad, &gx);
    grad->assign(gx.values().begin(), gx.values().end());
    const auto gp = gather_grad(params);
    grad->insert(grad->end(), gp.begin(), gp.end());
    return lg.loss;
  };
  return grad_check(f, point, {kModelFdStep});
}

}  // namespace fedrf::testing
