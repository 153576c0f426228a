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

// Non-IID node simulation: data partitioning, local adaptation, federated
// rounds with weighted averaging, and per-round communication accounting.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <mutex>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "fedrf/peft.hpp"
#include "fedrf/signal.hpp"
#include "fedrf/training.hpp"
#include "fedrf/wavenet.hpp"

namespace fedrf {

// ---------------------------------------------------------------------------
// Nodes and data

enum class Regime { Balanced, Imbalanced };

inline std::string to_string(Regime r) { return r == Regime::Balanced ? "balanced" : "imbalanced"; }

inline Regime parse_regime(const std::string& s) {
  if (s == "balanced") return Regime::Balanced;
  if (s == "imbalanced") return Regime::Imbalanced;
  throw std::invalid_argument("unknown regime '" + s + "' (expected balanced|imbalanced)");
}

struct NodeProfile {
  std::size_t node_id = 0;  // 1-based
  std::vector<std::pair<InterferenceKind, std::size_t>> composition;
  Regime regime = Regime::Balanced;

  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& [k, c] : composition) n += c;
    return n;
  }

  std::size_t count(InterferenceKind kind) const {
    std::size_t n = 0;
    for (const auto& [k, c] : composition)
      if (k == kind) n += c;
    return n;
  }

  InterferenceMix mix() const {
    InterferenceMix m;
    for (const auto& [k, c] : composition) m.emplace_back(k, static_cast<double>(c));
    return m;
  }
};

inline constexpr std::size_t kNodeCount = 5;

/// Per-node interference composition. With N samples per node the balanced
/// regime gives N per node (mixed nodes split 2:1 comm:EMI); the imbalanced
/// regime cuts EMI on nodes 3-5 to N * 200/3000 (200 at N = 3000).
inline std::vector<NodeProfile> partition_profiles(Regime regime, std::size_t samples_per_node = 3000) {
  if (samples_per_node < 3) throw std::invalid_argument("partition: need at least 3 samples per node");
  using K = InterferenceKind;
  const std::size_t n = samples_per_node;
  const auto comm_mixed = static_cast<std::size_t>(std::llround(2.0 * static_cast<double>(n) / 3.0));
  std::size_t emi_mixed = n - comm_mixed;
  std::size_t emi_only = n;
  if (regime == Regime::Imbalanced) {
    const auto scarce = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(static_cast<double>(n) * 200.0 / 3000.0)));
    emi_mixed = scarce;
    emi_only = scarce;
  }
  return {
      {1, {{K::CS2like, n}}, regime},
      {2, {{K::CS3like, n}}, regime},
      {3, {{K::CS2like, comm_mixed}, {K::EMIlike, emi_mixed}}, regime},
      {4, {{K::CS3like, comm_mixed}, {K::EMIlike, emi_mixed}}, regime},
      {5, {{K::EMIlike, emi_only}}, regime},
  };
}

struct NodeData {
  NodeProfile profile;
  std::vector<MixtureSample> train;
  std::vector<MixtureSample> val;
};

/// Validation share: 10% rounded, at least one sample when n >= 2.
inline std::size_t validation_count(std::size_t n) {
  if (n < 2) return 0;
  return std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(n))), 1, n - 1);
}

/// Generates one node's samples (SINR ~ U[-10, 10] dB) and splits them 90/10.
inline NodeData materialize_node(const NodeProfile& profile, const OfdmConfig& ofdm,
                                 std::uint64_t seed, const InterferenceParams& params = {}) {
  if (profile.total() == 0)
    throw std::invalid_argument("node " + std::to_string(profile.node_id) + " has no samples");
  auto all = make_dataset(profile.mix(), profile.total(), SinrMode::uniform(), ofdm,
                          derive_seed(seed, {0xDA7A, profile.node_id}), params);
  std::vector<std::size_t> order(all.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, {0x5B117, profile.node_id}));
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n_val = validation_count(all.size());
  NodeData node{profile, {}, {}};
  for (std::size_t i = 0; i < order.size(); ++i)
    (i < n_val ? node.val : node.train).push_back(std::move(all[order[i]]));
  return node;
}

inline std::vector<NodeData> partition(Regime regime, std::uint64_t seed, const OfdmConfig& ofdm,
                                       std::size_t samples_per_node = 3000,
                                       const InterferenceParams& params = {}) {
  std::vector<NodeData> nodes;
  for (const auto& p : partition_profiles(regime, samples_per_node))
    nodes.push_back(materialize_node(p, ofdm, seed, params));
  return nodes;
}

// ---------------------------------------------------------------------------
// Methods

enum class Method { Backbone, FedAvg, LFilm, FedFilm, LLora, FedLora, FullFt };

struct MethodSpec {
  Method method = Method::Backbone;
  std::size_t rank = 4;
  /// LoRA alpha; non-positive means alpha = rank.
  double alpha = 0.0;

  double lora_alpha() const { return alpha > 0.0 ? alpha : static_cast<double>(rank); }
  bool federated() const {
    return method == Method::FedAvg || method == Method::FedFilm || method == Method::FedLora;
  }
  bool uses_lora() const { return method == Method::LLora || method == Method::FedLora; }
  bool uses_film() const { return method == Method::LFilm || method == Method::FedFilm; }
  bool full() const { return method == Method::FedAvg || method == Method::FullFt; }
};

inline std::string method_name(Method m) {
  switch (m) {
    case Method::Backbone: return "backbone";
    case Method::FedAvg: return "fedavg";
    case Method::LFilm: return "l_film";
    case Method::FedFilm: return "fed_film";
    case Method::LLora: return "l_lora";
    case Method::FedLora: return "fed_lora";
    case Method::FullFt: return "full_ft";
  }
  throw std::invalid_argument("unknown method");
}

inline Method parse_method(const std::string& s) {
  for (const auto m : {Method::Backbone, Method::FedAvg, Method::LFilm, Method::FedFilm,
                       Method::LLora, Method::FedLora, Method::FullFt})
    if (method_name(m) == s) return m;
  throw std::invalid_argument("unknown method '" + s +
                              "' (expected backbone|fedavg|l_film|fed_film|l_lora|fed_lora|full_ft)");
}

/// Artifact/CSV label, e.g. "fed_lora_r4".
inline std::string method_tag(const MethodSpec& m) {
  return m.uses_lora() ? method_name(m.method) + "_r" + std::to_string(m.rank) : method_name(m.method);
}

/// Backbone copy with the method's adapter attached (or all weights
/// trainable for full fine-tuning / full FedAvg).
inline WaveNetModel<float> prepare_model(const WaveNetModel<float>& backbone, const MethodSpec& m,
                                         std::uint64_t adapter_seed) {
  WaveNetModel<float> model = backbone;
  if (model.has_adapter()) throw std::invalid_argument("prepare_model: backbone already carries an adapter");
  if (m.uses_lora()) {
    attach_lora(model, m.rank, m.lora_alpha(), adapter_seed);
  } else if (m.uses_film()) {
    attach_film(model);
  } else {
    model.set_backbone_trainable(m.full());
  }
  return model;
}

inline constexpr std::uint64_t kAdapterInitTag = 0xADA9;

// ---------------------------------------------------------------------------
// FedAvg

/// Coordinate-wise sum_k (w_k / sum_j w_j) theta_k. Contributions are summed
/// in a canonical order (by weight, then contents) so the result does not
/// depend on the order of the inputs.
inline AdapterVector fedavg(const std::vector<AdapterVector>& vectors, const std::vector<double>& weights) {
  if (vectors.empty()) throw std::invalid_argument("fedavg: no vectors");
  if (vectors.size() != weights.size()) throw std::invalid_argument("fedavg: one weight per vector required");
  double total = 0.0;
  for (std::size_t k = 0; k < vectors.size(); ++k) {
    if (!vectors[k].same_layout(vectors.front()))
      throw std::invalid_argument("fedavg: layout mismatch between " + vectors.front().describe() +
                                  " and " + vectors[k].describe());
    if (!(weights[k] >= 0.0) || !std::isfinite(weights[k]))
      throw std::invalid_argument("fedavg: weights must be non-negative and finite");
    total += weights[k];
  }
  if (!(total > 0.0)) throw std::invalid_argument("fedavg: total weight is zero");

  std::vector<std::size_t> order(vectors.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (weights[a] != weights[b]) return weights[a] < weights[b];
    return std::lexicographical_compare(vectors[a].values.begin(), vectors[a].values.end(),
                                        vectors[b].values.begin(), vectors[b].values.end());
  });

  AdapterVector out = vectors.front();
  const std::size_t n = out.values.size();
  std::vector<double> acc(n, 0.0);
  for (const std::size_t k : order) {
    const double w = weights[k] / total;
    const auto& v = vectors[k].values;
    for (std::size_t i = 0; i < n; ++i) acc[i] += w * static_cast<double>(v[i]);
  }
  for (std::size_t i = 0; i < n; ++i) out.values[i] = static_cast<float>(acc[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Communication ledger

struct LedgerEntry {
  std::size_t round = 0;
  std::size_t node = 0;
  std::string method;
  double val_mse = 0.0;
  std::size_t params_up = 0;
  std::size_t params_down = 0;

  std::size_t bytes_up() const { return 4 * params_up; }
  std::size_t bytes_down() const { return 4 * params_down; }
};

struct CommLedger {
  std::vector<LedgerEntry> entries;

  std::size_t total_uploaded() const {
    std::size_t n = 0;
    for (const auto& e : entries) n += e.params_up;
    return n;
  }
  std::size_t total_downloaded() const {
    std::size_t n = 0;
    for (const auto& e : entries) n += e.params_down;
    return n;
  }
  std::size_t total_bytes() const { return 4 * (total_uploaded() + total_downloaded()); }

  /// Upload per node in `round` (0 when the round has no entries).
  std::size_t per_round_upload(std::size_t round, std::size_t node) const {
    for (const auto& e : entries)
      if (e.round == round && e.node == node) return e.params_up;
    return 0;
  }
};

inline constexpr std::string_view kRoundLogHeader = "round,node,method,val_mse,params_up,params_down";

inline void write_round_log(std::ostream& out, const CommLedger& ledger) {
  out << kRoundLogHeader << '\n';
  out.precision(9);
  for (const auto& e : ledger.entries)
    out << e.round << ',' << e.node << ',' << e.method << ',' << e.val_mse << ',' << e.params_up
        << ',' << e.params_down << '\n';
}

// ---------------------------------------------------------------------------
// Training drivers

struct FederationConfig {
  std::size_t rounds = 10;
  std::size_t local_epochs = 2;
  std::size_t batch_size = 8;
  double lr_adapter = 1e-3;
  double lr_full = 1e-4;
  std::uint64_t seed = 0;
  /// Worker threads for node training; 1 runs nodes sequentially.
  std::size_t parallel = 1;

  double lr_for(const MethodSpec& m) const { return m.full() ? lr_full : lr_adapter; }
};

/// Shuffle seed for a node's global epoch index; shared by the local and
/// federated drivers so that one federated round equals E local epochs.
inline std::uint64_t epoch_seed(std::uint64_t seed, std::size_t node_id, std::size_t epoch) {
  return derive_seed(seed, {0xE90C, node_id, epoch});
}

struct FederatedResult {
  /// Each node's locally adapted model after the final round.
  std::vector<WaveNetModel<float>> node_models;
  std::vector<AdapterVector> node_vectors;
  AdapterVector global;
  CommLedger ledger;
};

namespace detail {

template <typename Fn>
void for_each_node(std::size_t n, std::size_t parallel, Fn&& fn) {
  if (parallel <= 1 || n <= 1) {
    for (std::size_t k = 0; k < n; ++k) fn(k);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::size_t next = 0;
  std::mutex mu;
  {
    std::vector<std::jthread> workers;
    for (std::size_t w = 0; w < std::min(parallel, n); ++w)
      workers.emplace_back([&] {
        for (;;) {
          std::size_t k;
          {
            std::lock_guard lock(mu);
            if (next >= n) return;
            k = next++;
          }
          try {
            fn(k);
          } catch (...) {
            errors[k] = std::current_exception();
          }
        }
      });
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace detail

/// Round protocol: broadcast the global vector, E local epochs per node,
/// upload, weighted average by train-split size.
inline FederatedResult run_federated(const FederationConfig& cfg, const MethodSpec& method,
                                     const std::vector<NodeData>& nodes,
                                     const WaveNetModel<float>& backbone) {
  if (!method.federated()) throw std::invalid_argument("run_federated: " + method_tag(method) + " is not a federated method");
  if (cfg.rounds == 0 || cfg.local_epochs == 0)
    throw std::invalid_argument("run_federated: rounds and local epochs must be >= 1");
  if (nodes.empty()) throw std::invalid_argument("run_federated: no nodes");
  for (const auto& n : nodes)
    if (n.train.empty() || n.val.empty())
      throw std::invalid_argument("run_federated: node " + std::to_string(n.profile.node_id) +
                                  " has an empty train or validation split");

  const auto template_model = prepare_model(backbone, method, derive_seed(cfg.seed, {kAdapterInitTag}));
  std::vector<double> weights;
  for (const auto& n : nodes) weights.push_back(static_cast<double>(n.train.size()));

  FederatedResult result;
  result.global = pack(template_model);
  result.node_models.assign(nodes.size(), template_model);
  result.node_vectors.assign(nodes.size(), result.global);
  const std::string tag = method_tag(method);
  const std::size_t exchanged = result.global.values.size();
  std::vector<double> val(nodes.size(), 0.0);

  for (std::size_t round = 1; round <= cfg.rounds; ++round) {
    detail::for_each_node(nodes.size(), cfg.parallel, [&](std::size_t k) {
      auto& model = result.node_models[k];
      model = template_model;
      unpack(result.global, model);
      Optimizer opt(model, AdamHyper{cfg.lr_for(method)});
      for (std::size_t e = 0; e < cfg.local_epochs; ++e) {
        const std::size_t epoch = (round - 1) * cfg.local_epochs + e;
        train_epoch(model, nodes[k].train, opt, cfg.batch_size,
                    epoch_seed(cfg.seed, nodes[k].profile.node_id, epoch));
      }
      val[k] = evaluate_mse(model, nodes[k].val);
      result.node_vectors[k] = pack(model);
    });
    for (std::size_t k = 0; k < nodes.size(); ++k)
      result.ledger.entries.push_back({round, nodes[k].profile.node_id, tag, val[k], exchanged, exchanged});
    result.global = fedavg(result.node_vectors, weights);
  }
  return result;
}

struct LocalConfig {
  std::size_t max_epochs = 20;
  std::size_t batch_size = 8;
  double lr_adapter = 1e-3;
  double lr_full = 1e-4;
  std::uint64_t seed = 0;
  /// ReduceLROnPlateau + early stopping + best restore; off means plain
  /// max_epochs of training.
  bool plateau_schedule = true;
  double plateau_factor = 0.5;
  std::size_t plateau_patience = 2;
  double min_delta = 1e-5;
  std::size_t early_stop_patience = 5;

  double lr_for(const MethodSpec& m) const { return m.full() ? lr_full : lr_adapter; }
};

struct EpochRecord {
  std::size_t epoch = 0;  // 0 = before training
  double val_mse = 0.0;
  double lr = 0.0;
};

struct LocalResult {
  WaveNetModel<float> model;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
};

/// Local adaptation on one node's data.
inline LocalResult run_local(const LocalConfig& cfg, const MethodSpec& method, const NodeData& node,
                             const WaveNetModel<float>& backbone) {
  if (method.federated()) throw std::invalid_argument("run_local: " + method_tag(method) + " is a federated method");
  LocalResult result{prepare_model(backbone, method, derive_seed(cfg.seed, {kAdapterInitTag})), {}, 0};
  if (method.method == Method::Backbone) return result;
  if (node.train.empty() || node.val.empty())
    throw std::invalid_argument("run_local: node " + std::to_string(node.profile.node_id) +
                                " has an empty train or validation split");

  auto& model = result.model;
  Optimizer opt(model, AdamHyper{cfg.lr_for(method)});
  double best = evaluate_mse(model, node.val);
  result.history.push_back({0, best, opt.lr()});
  auto best_params = snapshot_trainable(model);
  std::size_t since_best = 0;
  std::size_t bad_epochs = 0;

  for (std::size_t e = 0; e < cfg.max_epochs; ++e) {
    train_epoch(model, node.train, opt, cfg.batch_size, epoch_seed(cfg.seed, node.profile.node_id, e));
    const double val = evaluate_mse(model, node.val);
    result.history.push_back({e + 1, val, opt.lr()});
    if (!cfg.plateau_schedule) continue;
    if (val < best - cfg.min_delta) {
      best = val;
      best_params = snapshot_trainable(model);
      result.best_epoch = e + 1;
      since_best = 0;
      bad_epochs = 0;
    } else {
      ++since_best;
      if (++bad_epochs >= cfg.plateau_patience) {
        opt.set_lr(opt.lr() * cfg.plateau_factor);
        bad_epochs = 0;
      }
      if (since_best >= cfg.early_stop_patience) break;
    }
  }
  if (cfg.plateau_schedule) restore_trainable(model, best_params);
  else result.best_epoch = cfg.max_epochs;
  return result;
}

}  // namespace fedrf
