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

// WaveNet separator over 2-channel (I/Q) sequences.
//
//   x_0      = input_proj(x)                               1x1, 2 -> C
//   block i  : x'_i = FiLM_i(x_i)                          (only with FiLM)
//              z    = dilated_i(x'_i) [+ LoRA_i(x'_i)]     K taps, C -> 2C, dilation 2^(i mod m)
//              h    = sigmoid(z[:C]) * tanh(z[C:])
//              u    = proj_i(h)                            1x1, C -> 2C
//              x_{i+1} = (x'_i + u[:C]) / sqrt(2),  s_i = u[C:]
//   out      = output_proj(relu(skip_proj(sum_i s_i / sqrt(R))))

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "fedrf/adapters.hpp"
#include "fedrf/binary_io.hpp"
#include "fedrf/ops.hpp"
#include "fedrf/rng.hpp"
#include "fedrf/tensor.hpp"

namespace fedrf {

struct WaveNetConfig {
  std::size_t n_blocks = 15;
  std::size_t channels = 48;
  std::size_t kernel = 3;
  std::size_t dilation_cycle = 5;

  void validate() const {
    if (n_blocks == 0 || channels == 0 || kernel == 0 || dilation_cycle == 0)
      throw std::invalid_argument("WaveNetConfig: all sizes must be positive");
    if (kernel % 2 == 0) throw std::invalid_argument("WaveNetConfig: kernel must be odd");
  }

  std::size_t dilation(std::size_t block) const { return std::size_t{1} << (block % dilation_cycle); }

  friend bool operator==(const WaveNetConfig&, const WaveNetConfig&) = default;
};

/// 1 + (K - 1) * sum_i 2^(i mod m)
inline std::size_t receptive_field(const WaveNetConfig& cfg) {
  cfg.validate();
  std::size_t span = 0;
  for (std::size_t i = 0; i < cfg.n_blocks; ++i) span += cfg.dilation(i);
  return 1 + (cfg.kernel - 1) * span;
}

/// Backbone parameter count implied by the layer inventory.
inline std::size_t backbone_param_count(const WaveNetConfig& cfg) {
  const std::size_t c = cfg.channels;
  const std::size_t input = 2 * c + c;
  const std::size_t block = (2 * c * c * cfg.kernel + 2 * c) + (2 * c * c + 2 * c);
  const std::size_t skip = c * c + c;
  const std::size_t output = 2 * c + 2;
  return input + cfg.n_blocks * block + skip + output;
}

template <typename T>
struct ResidualBlock {
  std::size_t dilation = 1;
  Parameter<T> dilated_w, dilated_b;
  Parameter<T> proj_w, proj_b;
};

template <typename T>
class WaveNetModel {
 public:
  WaveNetConfig config;
  Parameter<T> input_w, input_b;
  std::vector<ResidualBlock<T>> blocks;
  Parameter<T> skip_w, skip_b;
  Parameter<T> output_w, output_b;
  AdapterSet<T> adapter;

  /// Backbone parameters in canonical (checkpoint) order.
  std::vector<Parameter<T>*> backbone_parameters() {
    std::vector<Parameter<T>*> out{&input_w, &input_b};
    for (auto& b : blocks) {
      out.push_back(&b.dilated_w);
      out.push_back(&b.dilated_b);
      out.push_back(&b.proj_w);
      out.push_back(&b.proj_b);
    }
    for (auto* p : {&skip_w, &skip_b, &output_w, &output_b}) out.push_back(p);
    return out;
  }

  std::vector<const Parameter<T>*> backbone_parameters() const {
    auto ptrs = const_cast<WaveNetModel*>(this)->backbone_parameters();
    return {ptrs.begin(), ptrs.end()};
  }

  /// Adapter parameters in canonical order: per block, A before B
  /// (LoRA) or gamma before beta (FiLM).
  std::vector<Parameter<T>*> adapter_parameters() {
    std::vector<Parameter<T>*> out;
    if (auto* lora = std::get_if<LoraAdapter<T>>(&adapter)) {
      for (std::size_t i = 0; i < lora->down.size(); ++i) {
        out.push_back(&lora->down[i]);
        out.push_back(&lora->up[i]);
      }
    } else if (auto* film = std::get_if<FilmAdapter<T>>(&adapter)) {
      for (std::size_t i = 0; i < film->gamma.size(); ++i) {
        out.push_back(&film->gamma[i]);
        out.push_back(&film->beta[i]);
      }
    }
    return out;
  }

  std::vector<const Parameter<T>*> adapter_parameters() const {
    auto ptrs = const_cast<WaveNetModel*>(this)->adapter_parameters();
    return {ptrs.begin(), ptrs.end()};
  }

  std::vector<Parameter<T>*> parameters() {
    auto out = backbone_parameters();
    for (auto* p : adapter_parameters()) out.push_back(p);
    return out;
  }

  std::vector<const Parameter<T>*> parameters() const {
    auto ptrs = const_cast<WaveNetModel*>(this)->parameters();
    return {ptrs.begin(), ptrs.end()};
  }

  /// Backbone parameter count (adapters excluded).
  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto* p : backbone_parameters()) n += p->size();
    return n;
  }

  bool has_adapter() const { return !std::holds_alternative<std::monostate>(adapter); }

  void set_backbone_trainable(bool trainable) {
    for (auto* p : backbone_parameters()) {
      p->trainable = trainable;
      p->zero_grad();
    }
  }

  void zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
  }
};

namespace detail {

/// Kaiming-uniform with a = sqrt(5), i.e. U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
template <typename T>
void kaiming_uniform(Parameter<T>& p, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : p.values) v = static_cast<T>(dist(rng));
}

template <typename T>
Parameter<T> conv_weight(std::string name, std::size_t c_out, std::size_t c_in, std::size_t k,
                         Rng& rng) {
  Parameter<T> p(std::move(name), {c_out, c_in, k});
  kaiming_uniform(p, c_in * k, rng);
  return p;
}

}  // namespace detail

/// Fresh backbone: Kaiming-uniform weights, zero biases, all trainable.
template <typename T>
WaveNetModel<T> build(const WaveNetConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  const std::size_t c = cfg.channels;
  WaveNetModel<T> m;
  m.config = cfg;
  m.input_w = detail::conv_weight<T>("input_proj.weight", c, 2, 1, rng);
  m.input_b = Parameter<T>("input_proj.bias", {c});
  for (std::size_t i = 0; i < cfg.n_blocks; ++i) {
    ResidualBlock<T> b;
    const std::string prefix = "blocks." + std::to_string(i) + ".";
    b.dilation = cfg.dilation(i);
    b.dilated_w = detail::conv_weight<T>(prefix + "dilated.weight", 2 * c, c, cfg.kernel, rng);
    b.dilated_b = Parameter<T>(prefix + "dilated.bias", {2 * c});
    b.proj_w = detail::conv_weight<T>(prefix + "proj.weight", 2 * c, c, 1, rng);
    b.proj_b = Parameter<T>(prefix + "proj.bias", {2 * c});
    m.blocks.push_back(std::move(b));
  }
  m.skip_w = detail::conv_weight<T>("skip_proj.weight", c, c, 1, rng);
  m.skip_b = Parameter<T>("skip_proj.bias", {c});
  m.output_w = detail::conv_weight<T>("output_proj.weight", 2, c, 1, rng);
  m.output_b = Parameter<T>("output_proj.bias", {2});
  return m;
}

/// Converts parameter storage to another scalar type (e.g. float -> double
/// for gradient checks).
template <typename U, typename T>
WaveNetModel<U> cast_model(const WaveNetModel<T>& src) {
  auto conv = [](const Parameter<T>& p) {
    Parameter<U> q(p.name, p.shape, p.trainable);
    for (std::size_t i = 0; i < p.size(); ++i) q.values[i] = static_cast<U>(p.values[i]);
    return q;
  };
  WaveNetModel<U> m;
  m.config = src.config;
  m.input_w = conv(src.input_w);
  m.input_b = conv(src.input_b);
  for (const auto& b : src.blocks)
    m.blocks.push_back({b.dilation, conv(b.dilated_w), conv(b.dilated_b), conv(b.proj_w), conv(b.proj_b)});
  m.skip_w = conv(src.skip_w);
  m.skip_b = conv(src.skip_b);
  m.output_w = conv(src.output_w);
  m.output_b = conv(src.output_b);
  if (const auto* lora = std::get_if<LoraAdapter<T>>(&src.adapter)) {
    LoraAdapter<U> l{lora->rank, lora->alpha, {}, {}};
    for (const auto& p : lora->down) l.down.push_back(conv(p));
    for (const auto& p : lora->up) l.up.push_back(conv(p));
    m.adapter = std::move(l);
  } else if (const auto* film = std::get_if<FilmAdapter<T>>(&src.adapter)) {
    FilmAdapter<U> f;
    for (const auto& p : film->gamma) f.gamma.push_back(conv(p));
    for (const auto& p : film->beta) f.beta.push_back(conv(p));
    m.adapter = std::move(f);
  }
  return m;
}

/// Intermediate activations kept for the backward pass.
template <typename T>
struct BlockTrace {
  Tensor2D<T> input;     // x_i
  Tensor2D<T> block_in;  // x'_i (equals x_i without FiLM)
  Tensor2D<T> z;
  Tensor2D<T> h;
  Tensor2D<T> lora_mid;  // down_i(x'_i), LoRA only
};

template <typename T>
struct ForwardTrace {
  Tensor2D<T> input;
  std::vector<BlockTrace<T>> blocks;
  Tensor2D<T> skip_mix;  // sum_i s_i / sqrt(R)
  Tensor2D<T> skip_pre;  // skip_proj(skip_mix)
  Tensor2D<T> skip_act;  // relu(skip_pre)
};

/// Separator forward pass on a [2 x T] input; fills `trace` when given.
template <typename T>
Tensor2D<T> forward(const WaveNetModel<T>& model, const Tensor2D<T>& x,
                    ForwardTrace<T>* trace = nullptr) {
  const auto& cfg = model.config;
  if (x.channels() != 2)
    throw std::invalid_argument("wavenet forward: expected 2 input channels, got " +
                                std::to_string(x.channels()));
  const std::size_t c = cfg.channels;
  const T inv_sqrt2 = static_cast<T>(1.0 / std::sqrt(2.0));
  const auto* lora = std::get_if<LoraAdapter<T>>(&model.adapter);
  const auto* film = std::get_if<FilmAdapter<T>>(&model.adapter);

  if (trace) {
    trace->input = x;
    trace->blocks.assign(model.blocks.size(), {});
  }
  Tensor2D<T> state = conv1d_forward(x, model.input_w, &model.input_b, 1);
  Tensor2D<T> skip(c, x.time());
  for (std::size_t i = 0; i < model.blocks.size(); ++i) {
    const auto& blk = model.blocks[i];
    Tensor2D<T> block_in = film ? film_forward(state, film->gamma[i], film->beta[i]) : state;
    Tensor2D<T> z = conv1d_forward(block_in, blk.dilated_w, &blk.dilated_b, blk.dilation);
    Tensor2D<T> mid;
    if (lora) {
      mid = conv1d_forward(block_in, lora->down[i], nullptr, blk.dilation);
      const Tensor2D<T> branch = conv1d_forward(mid, lora->up[i], nullptr, 1);
      z.matrix() += lora->scale() * branch.matrix();
    }
    Tensor2D<T> h = gated_activation(z);
    const Tensor2D<T> u = conv1d_forward(h, blk.proj_w, &blk.proj_b, 1);
    Tensor2D<T> next(c, x.time());
    next.matrix() = (block_in.matrix() + u.matrix().topRows(static_cast<Eigen::Index>(c))) * inv_sqrt2;
    skip.matrix() += u.matrix().bottomRows(static_cast<Eigen::Index>(c));
    if (trace) {
      auto& bt = trace->blocks[i];
      bt.input = std::move(state);
      bt.block_in = std::move(block_in);
      bt.z = std::move(z);
      bt.h = std::move(h);
      bt.lora_mid = std::move(mid);
    }
    state = std::move(next);
  }
  skip.matrix() *= static_cast<T>(1.0 / std::sqrt(static_cast<double>(model.blocks.size())));
  Tensor2D<T> pre = conv1d_forward(skip, model.skip_w, &model.skip_b, 1);
  Tensor2D<T> act = relu(pre);
  Tensor2D<T> out = conv1d_forward(act, model.output_w, &model.output_b, 1);
  if (trace) {
    trace->skip_mix = std::move(skip);
    trace->skip_pre = std::move(pre);
    trace->skip_act = std::move(act);
  }
  return out;
}

/// Accumulates parameter gradients of a loss with dL/dout = grad_out; frozen
/// parameters are left untouched. Adds dL/dx into *grad_input when given.
template <typename T>
void backward(WaveNetModel<T>& model, const ForwardTrace<T>& trace, const Tensor2D<T>& grad_out,
              Tensor2D<T>* grad_input = nullptr) {
  const std::size_t c = model.config.channels;
  const std::size_t len = trace.input.time();
  const auto ci = static_cast<Eigen::Index>(c);
  const T inv_sqrt2 = static_cast<T>(1.0 / std::sqrt(2.0));
  auto* lora = std::get_if<LoraAdapter<T>>(&model.adapter);
  auto* film = std::get_if<FilmAdapter<T>>(&model.adapter);

  Tensor2D<T> g_act(c, len);
  conv1d_backward_accumulate(grad_out, trace.skip_act, model.output_w, &model.output_b, 1, &g_act);
  const Tensor2D<T> g_pre = relu_backward(trace.skip_pre, g_act);
  Tensor2D<T> g_mix(c, len);
  conv1d_backward_accumulate(g_pre, trace.skip_mix, model.skip_w, &model.skip_b, 1, &g_mix);
  g_mix.matrix() *= static_cast<T>(1.0 / std::sqrt(static_cast<double>(model.blocks.size())));

  Tensor2D<T> g_state(c, len);  // dL/dx_{i+1}
  Tensor2D<T> g_u(2 * c, len);
  g_u.matrix().bottomRows(ci) = g_mix.matrix();
  for (std::size_t ii = model.blocks.size(); ii-- > 0;) {
    auto& blk = model.blocks[ii];
    const auto& bt = trace.blocks[ii];
    Tensor2D<T> g_in(c, len);
    g_in.matrix() = g_state.matrix() * inv_sqrt2;
    g_u.matrix().topRows(ci) = g_in.matrix();
    Tensor2D<T> g_h(c, len);
    conv1d_backward_accumulate(g_u, bt.h, blk.proj_w, &blk.proj_b, 1, &g_h);
    const Tensor2D<T> g_z = gated_activation_backward(bt.z, g_h);
    conv1d_backward_accumulate(g_z, bt.block_in, blk.dilated_w, &blk.dilated_b, blk.dilation, &g_in);
    if (lora) {
      Tensor2D<T> g_branch = g_z;
      g_branch.matrix() *= lora->scale();
      Tensor2D<T> g_mid(lora->rank, len);
      conv1d_backward_accumulate(g_branch, bt.lora_mid, lora->up[ii], nullptr, 1, &g_mid);
      conv1d_backward_accumulate(g_mid, bt.block_in, lora->down[ii], nullptr, blk.dilation, &g_in);
    }
    if (film)
      g_state = film_backward(bt.input, g_in, film->gamma[ii], film->beta[ii]);
    else
      g_state = std::move(g_in);
  }
  conv1d_backward_accumulate(g_state, trace.input, model.input_w, &model.input_b, 1, grad_input);
}

// ---------------------------------------------------------------------------
// Checkpoints: little-endian
//   "FLRF" | version u16 | R u32 | C u32 | K u32 | m u32 | n_tensors u32 |
//   per tensor: name_len u16, name bytes, ndim u8, dims u32 x ndim |
//   payload: every tensor's values as f32, in table order

inline constexpr std::string_view kCheckpointMagic = "FLRF";
inline constexpr std::uint16_t kCheckpointVersion = 1;

template <typename T>
std::vector<char> checkpoint_bytes(const WaveNetModel<T>& model) {
  ByteWriter w;
  w.put_bytes(kCheckpointMagic);
  w.put<std::uint16_t>(kCheckpointVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(model.config.n_blocks));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(model.config.channels));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(model.config.kernel));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(model.config.dilation_cycle));
  const auto params = model.backbone_parameters();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(params.size()));
  for (const auto* p : params) {
    w.put<std::uint16_t>(static_cast<std::uint16_t>(p->name.size()));
    w.put_bytes(p->name);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(p->shape.size()));
    for (const auto d : p->shape) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
  }
  for (const auto* p : params) {
    if constexpr (std::is_same_v<T, float>) {
      w.put_f32(p->values);
    } else {
      for (const T v : p->values) w.put<float>(static_cast<float>(v));
    }
  }
  return w.bytes();
}

template <typename T>
void save(const WaveNetModel<T>& model, const std::string& path) {
  write_file_bytes(path, checkpoint_bytes(model));
}

/// Loads a backbone checkpoint. Throws on bad magic/version, on any tensor
/// whose name or shape differs from the echoed config's layout, and on
/// truncated or oversized files.
inline WaveNetModel<float> load(const std::string& path) {
  ByteReader r(read_file_bytes(path), path);
  if (r.get_bytes(4) != kCheckpointMagic)
    throw std::runtime_error(path + ": not a checkpoint (bad FLRF magic)");
  const auto version = r.get<std::uint16_t>();
  if (version != kCheckpointVersion)
    throw std::runtime_error(path + ": unsupported checkpoint version " + std::to_string(version));
  WaveNetConfig cfg;
  cfg.n_blocks = r.get<std::uint32_t>();
  cfg.channels = r.get<std::uint32_t>();
  cfg.kernel = r.get<std::uint32_t>();
  cfg.dilation_cycle = r.get<std::uint32_t>();
  cfg.validate();
  WaveNetModel<float> model = build<float>(cfg, 0);
  auto params = model.backbone_parameters();
  const auto n = r.get<std::uint32_t>();
  if (n != params.size())
    throw std::runtime_error(path + ": expected " + std::to_string(params.size()) +
                             " tensors for the echoed config, found " + std::to_string(n));
  for (auto* p : params) {
    const auto name_len = r.get<std::uint16_t>();
    const auto name = r.get_bytes(name_len);
    if (name != p->name)
      throw std::runtime_error(path + ": tensor '" + name + "' found where '" + p->name +
                               "' was expected");
    std::vector<std::size_t> shape(r.get<std::uint8_t>());
    for (auto& d : shape) d = r.get<std::uint32_t>();
    if (shape != p->shape)
      throw std::runtime_error(path + ": tensor '" + name + "' has shape " + shape_string(shape) +
                               ", expected " + shape_string(p->shape));
  }
  for (auto* p : params) r.get_f32(p->values);
  if (!r.at_end())
    throw std::runtime_error(path + ": " + std::to_string(r.remaining()) +
                             " trailing bytes after the last tensor");
  return model;
}

/// Loads and checks that the echoed config equals `expected`.
inline WaveNetModel<float> load(const std::string& path, const WaveNetConfig& expected) {
  auto model = load(path);
  if (!(model.config == expected))
    throw std::runtime_error(path + ": checkpoint config does not match the expected model config");
  return model;
}

}  // namespace fedrf
