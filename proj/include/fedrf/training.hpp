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
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedrf/adam.hpp"
#include "fedrf/ops.hpp"
#include "fedrf/rng.hpp"
#include "fedrf/signal.hpp"
#include "fedrf/wavenet.hpp"

namespace fedrf {

/// [2 x T] tensor with I in row 0 and Q in row 1.
inline Tensor2D<float> to_tensor(std::span<const cfloat> x) {
  Tensor2D<float> t(2, x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    t(0, i) = x[i].real();
    t(1, i) = x[i].imag();
  }
  return t;
}

inline ComplexVec to_complex(const Tensor2D<float>& t) {
  if (t.channels() != 2) throw std::invalid_argument("to_complex: expected a [2 x T] tensor");
  ComplexVec out(t.time());
  for (std::size_t i = 0; i < t.time(); ++i) out[i] = {t(0, i), t(1, i)};
  return out;
}

/// Separator output for one mixture, as a complex waveform.
inline ComplexVec separate(const WaveNetModel<float>& model, std::span<const cfloat> mixture) {
  return to_complex(forward(model, to_tensor(mixture)));
}

/// Adam state for every trainable parameter of a model, in parameter order.
class Optimizer {
 public:
  Optimizer(WaveNetModel<float>& model, AdamHyper hyper) : hyper_(hyper) {
    for (auto* p : model.parameters()) {
      if (!p->trainable) continue;
      names_.push_back(p->name);
      states_.emplace_back(p->size(), hyper);
    }
  }

  /// Applies one update to each trainable parameter and clears its gradient.
  void step(WaveNetModel<float>& model) {
    std::size_t j = 0;
    for (auto* p : model.parameters()) {
      if (!p->trainable) continue;
      if (j >= names_.size() || names_[j] != p->name)
        throw std::logic_error("Optimizer: trainable set changed since construction ('" + p->name + "')");
      adam_step(*p, states_[j++]);
    }
    if (j != names_.size()) throw std::logic_error("Optimizer: trainable set changed since construction");
  }

  double lr() const { return hyper_.lr; }
  void set_lr(double lr) {
    hyper_.lr = lr;
    for (auto& s : states_) s.hyper.lr = lr;
  }
  bool empty() const { return states_.empty(); }

 private:
  AdamHyper hyper_;
  std::vector<std::string> names_;
  std::vector<AdamState<float>> states_;
};

/// Accumulates MSE gradients over the batch (each sample weighted 1/B), takes
/// one Adam step on the trainable parameters and returns the batch-mean loss.
inline double backward_and_step(WaveNetModel<float>& model,
                                std::span<const MixtureSample* const> batch, Optimizer& opt) {
  if (batch.empty()) throw std::invalid_argument("backward_and_step: empty batch");
  const bool any_trainable = !opt.empty();
  const float inv_b = 1.0f / static_cast<float>(batch.size());
  double total = 0.0;
  ForwardTrace<float> trace;
  for (const auto* s : batch) {
    const auto x = to_tensor(s->mixture);
    const auto target = to_tensor(s->soi);
    if (!any_trainable) {
      total += mse_value(forward(model, x), target);
      continue;
    }
    const auto pred = forward(model, x, &trace);
    auto lg = mse_loss(pred, target);
    total += lg.loss;
    lg.grad.matrix() *= inv_b;
    backward(model, trace, lg.grad);
  }
  if (any_trainable) opt.step(model);
  return total / static_cast<double>(batch.size());
}

inline double backward_and_step(WaveNetModel<float>& model, std::span<const MixtureSample> batch,
                                Optimizer& opt) {
  std::vector<const MixtureSample*> ptrs;
  for (const auto& s : batch) ptrs.push_back(&s);
  return backward_and_step(model, std::span<const MixtureSample* const>(ptrs), opt);
}

/// Mean per-sample MSE over a dataset.
inline double evaluate_mse(const WaveNetModel<float>& model, std::span<const MixtureSample> data) {
  if (data.empty()) throw std::invalid_argument("evaluate_mse: empty dataset");
  double total = 0.0;
  for (const auto& s : data) total += mse_value(forward(model, to_tensor(s.mixture)), to_tensor(s.soi));
  return total / static_cast<double>(data.size());
}

/// One pass over `data` in an order shuffled by `seed`; returns the mean
/// batch loss.
inline double train_epoch(WaveNetModel<float>& model, std::span<const MixtureSample> data,
                          Optimizer& opt, std::size_t batch_size, std::uint64_t seed) {
  if (data.empty()) throw std::invalid_argument("train_epoch: empty dataset");
  if (batch_size == 0) throw std::invalid_argument("train_epoch: batch size must be positive");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  double total = 0.0;
  std::size_t batches = 0;
  std::vector<const MixtureSample*> batch;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    batch.clear();
    for (std::size_t j = i; j < std::min(order.size(), i + batch_size); ++j) batch.push_back(&data[order[j]]);
    total += backward_and_step(model, std::span<const MixtureSample* const>(batch), opt);
    ++batches;
  }
  return total / static_cast<double>(batches);
}

/// Copies of the trainable parameter values, for best-checkpoint restore.
inline std::vector<Buffer<float>> snapshot_trainable(WaveNetModel<float>& model) {
  std::vector<Buffer<float>> out;
  for (auto* p : model.parameters())
    if (p->trainable) out.push_back(p->values);
  return out;
}

inline void restore_trainable(WaveNetModel<float>& model, const std::vector<Buffer<float>>& snap) {
  std::size_t j = 0;
  for (auto* p : model.parameters())
    if (p->trainable) p->values = snap.at(j++);
}

}  // namespace fedrf
