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

// Attaching LoRA/FiLM adapters to a backbone, and the flat adapter vector
// that is exchanged in each federated round.

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "fedrf/binary_io.hpp"
#include "fedrf/wavenet.hpp"

namespace fedrf {

/// Attaches a rank-r branch to every dilated convolution and freezes the
/// backbone. down_i is Kaiming-uniform, up_i is zero, so the branch output is
/// identically zero until the first update.
template <typename T>
LoraAdapter<T>& attach_lora(WaveNetModel<T>& model, std::size_t rank, double alpha,
                            std::uint64_t seed) {
  if (rank == 0) throw std::invalid_argument("attach_lora: rank must be >= 1");
  if (model.has_adapter()) throw std::logic_error("attach_lora: model already has an adapter");
  const auto& cfg = model.config;
  Rng rng(seed);
  LoraAdapter<T> lora;
  lora.rank = rank;
  lora.alpha = alpha;
  for (std::size_t i = 0; i < cfg.n_blocks; ++i) {
    const std::string prefix = "lora." + std::to_string(i) + ".";
    lora.down.push_back(detail::conv_weight<T>(prefix + "A", rank, cfg.channels, cfg.kernel, rng));
    lora.up.push_back(Parameter<T>(prefix + "B", {2 * cfg.channels, rank, 1}));
  }
  model.set_backbone_trainable(false);
  model.adapter = std::move(lora);
  return std::get<LoraAdapter<T>>(model.adapter);
}

/// Identity-initialised FiLM (gamma = 1, beta = 0) before every block;
/// freezes the backbone.
template <typename T>
FilmAdapter<T>& attach_film(WaveNetModel<T>& model) {
  if (model.has_adapter()) throw std::logic_error("attach_film: model already has an adapter");
  const auto& cfg = model.config;
  FilmAdapter<T> film;
  for (std::size_t i = 0; i < cfg.n_blocks; ++i) {
    const std::string prefix = "film." + std::to_string(i) + ".";
    Parameter<T> gamma(prefix + "gamma", {cfg.channels});
    std::fill(gamma.values.begin(), gamma.values.end(), T(1));
    film.gamma.push_back(std::move(gamma));
    film.beta.push_back(Parameter<T>(prefix + "beta", {cfg.channels}));
  }
  model.set_backbone_trainable(false);
  model.adapter = std::move(film);
  return std::get<FilmAdapter<T>>(model.adapter);
}

/// Number of parameters that receive updates.
template <typename T>
std::size_t count_trainable(const WaveNetModel<T>& model) {
  std::size_t n = 0;
  for (const auto* p : model.parameters())
    if (p->trainable) n += p->size();
  return n;
}

/// LoRA adapter size: R * (r C K + 2 C r).
inline std::size_t lora_param_count(const WaveNetConfig& cfg, std::size_t rank) {
  return cfg.n_blocks * (rank * cfg.channels * cfg.kernel + 2 * cfg.channels * rank);
}

inline std::size_t film_param_count(const WaveNetConfig& cfg) {
  return 2 * cfg.n_blocks * cfg.channels;
}

enum class AdapterMethod : std::uint8_t { Lora = 0, Film = 1, Full = 2 };

/// Flat trainable-parameter vector in canonical order. For Full the vector is
/// every backbone parameter.
struct AdapterVector {
  AdapterMethod method = AdapterMethod::Lora;
  std::size_t rank = 0;
  std::size_t n_blocks = 0;
  std::size_t channels = 0;
  std::vector<float> values;
  std::vector<std::pair<std::string, std::vector<std::size_t>>> layout;

  bool same_layout(const AdapterVector& o) const {
    return method == o.method && rank == o.rank && n_blocks == o.n_blocks &&
           channels == o.channels && values.size() == o.values.size();
  }

  std::string describe() const {
    std::string m = method == AdapterMethod::Lora   ? "lora(r=" + std::to_string(rank) + ")"
                    : method == AdapterMethod::Film ? std::string("film")
                                                    : std::string("full");
    return m + " R=" + std::to_string(n_blocks) + " C=" + std::to_string(channels) + " n=" +
           std::to_string(values.size());
  }

  friend bool operator==(const AdapterVector&, const AdapterVector&) = default;
};

namespace detail {

template <typename T>
std::pair<AdapterMethod, std::size_t> method_of(const WaveNetModel<T>& model) {
  if (const auto* l = std::get_if<LoraAdapter<T>>(&model.adapter)) return {AdapterMethod::Lora, l->rank};
  if (std::holds_alternative<FilmAdapter<T>>(model.adapter)) return {AdapterMethod::Film, 0};
  return {AdapterMethod::Full, 0};
}

template <typename T>
std::vector<Parameter<T>*> exchanged_parameters(WaveNetModel<T>& model, AdapterMethod method) {
  return method == AdapterMethod::Full ? model.backbone_parameters() : model.adapter_parameters();
}

}  // namespace detail

/// Packs the attached adapter, or the full backbone when none is attached.
template <typename T>
AdapterVector pack(const WaveNetModel<T>& model) {
  auto& m = const_cast<WaveNetModel<T>&>(model);
  const auto [method, rank] = detail::method_of(model);
  AdapterVector v{method, rank, model.config.n_blocks, model.config.channels, {}, {}};
  for (const auto* p : detail::exchanged_parameters(m, method)) {
    v.layout.emplace_back(p->name, p->shape);
    for (const T x : p->values) v.values.push_back(static_cast<float>(x));
  }
  return v;
}

/// Overwrites the model's exchanged parameters from `v`; rejects vectors whose
/// method, rank, block count, channel count or length differ.
template <typename T>
void unpack(const AdapterVector& v, WaveNetModel<T>& model) {
  const auto [method, rank] = detail::method_of(model);
  if (v.method != method || v.rank != rank || v.n_blocks != model.config.n_blocks ||
      v.channels != model.config.channels)
    throw std::invalid_argument("unpack: vector layout " + v.describe() +
                                " does not match the model's adapter");
  auto params = detail::exchanged_parameters(model, method);
  std::size_t total = 0;
  for (const auto* p : params) total += p->size();
  if (total != v.values.size())
    throw std::invalid_argument("unpack: vector has " + std::to_string(v.values.size()) +
                                " values, adapter expects " + std::to_string(total));
  std::size_t off = 0;
  for (auto* p : params)
    for (auto& x : p->values) x = static_cast<T>(v.values[off++]);
}

// ---------------------------------------------------------------------------
// Adapter file/wire format, little-endian:
//   "FLAD" | method u8 | rank u8 | R u16 | C u16 | payload f32 in canonical order

inline constexpr std::string_view kAdapterMagic = "FLAD";
inline constexpr std::size_t kAdapterHeaderBytes = 4 + 1 + 1 + 2 + 2;

inline std::vector<char> adapter_bytes(const AdapterVector& v) {
  ByteWriter w;
  w.put_bytes(kAdapterMagic);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(v.method));
  w.put<std::uint8_t>(static_cast<std::uint8_t>(v.rank));
  w.put<std::uint16_t>(static_cast<std::uint16_t>(v.n_blocks));
  w.put<std::uint16_t>(static_cast<std::uint16_t>(v.channels));
  w.put_f32(v.values);
  return w.bytes();
}

inline AdapterVector adapter_from_bytes(std::vector<char> bytes, const std::string& source) {
  ByteReader r(std::move(bytes), source);
  if (r.get_bytes(4) != kAdapterMagic) throw std::runtime_error(source + ": bad FLAD magic");
  AdapterVector v;
  const auto method = r.get<std::uint8_t>();
  if (method > 2) throw std::runtime_error(source + ": unknown adapter method " + std::to_string(method));
  v.method = static_cast<AdapterMethod>(method);
  v.rank = r.get<std::uint8_t>();
  v.n_blocks = r.get<std::uint16_t>();
  v.channels = r.get<std::uint16_t>();
  if (r.remaining() % 4 != 0) throw std::runtime_error(source + ": payload is not a whole number of f32");
  v.values.resize(r.remaining() / 4);
  r.get_f32(v.values);
  return v;
}

inline void save_adapter(const AdapterVector& v, const std::string& path) {
  write_file_bytes(path, adapter_bytes(v));
}

inline AdapterVector load_adapter(const std::string& path) {
  return adapter_from_bytes(read_file_bytes(path), path);
}

}  // namespace fedrf
