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

// Experiment driver behind the command-line tool: configuration, the
// pretrain / adapt / eval / report stages and the files they exchange.
//
// Run directory layout (<out> is output.dir):
//   <out>/backbone.flrf, pretrain_loss.csv, pretrain_summary.csv, pretrain.config.ini
//   <out>/<regime>/<tag>/   node<k>.flad | node<k>.flrf, global.*, round_log.csv,
//                           local_log.csv, config.ini
//   <out>/<regime>/eval/    ber_local.csv, ber_global_by_type.csv, summary.csv, config.ini
//   <out>/<regime>/report.md, tradeoff.csv

#pragma once

#include <algorithm>
#include <charconv>
#include <concepts>
#include <cstdio>
#include <numeric>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "fedrf/federation.hpp"
#include "fedrf/peft.hpp"
#include "fedrf/signal.hpp"
#include "fedrf/training.hpp"
#include "fedrf/wavenet.hpp"

namespace fedrf {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Text helpers

/// Shortest decimal that parses back to the same double.
inline std::string format_real(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

inline std::string read_text_file(const fs::path& path) {
  const auto bytes = read_file_bytes(path.string());
  return {bytes.begin(), bytes.end()};
}

// ---------------------------------------------------------------------------
// Configuration

struct PretrainSettings {
  std::size_t steps = 5000;
  std::size_t samples = 2000;
  std::size_t batch_size = 8;
  double lr = 5e-4;
  /// Fixed subset used for the initial/final MSE summary.
  std::size_t probe_samples = 64;
};

struct AdaptSettings {
  std::string method = "fed_lora";
  std::size_t rank = 4;
  double alpha = 0.0;
  std::size_t rounds = 10;
  std::size_t local_epochs = 2;
  std::size_t max_epochs = 20;
  std::size_t batch_size = 8;
  double lr_adapter = 1e-3;
  double lr_full = 1e-4;
  bool plateau_schedule = true;
  double plateau_factor = 0.5;
  std::size_t plateau_patience = 2;
  double min_delta = 1e-5;
  std::size_t early_stop_patience = 5;
  std::size_t parallel = 1;
};

struct EvalSettings {
  std::vector<double> sinr_levels = sinr_sweep();
  std::size_t frames_per_level = 30;
  /// Per kind and level in the shared global test set.
  std::size_t global_frames_per_level = 10;
  std::vector<std::string> methods = {"backbone", "fedavg",      "l_film",      "fed_film", "l_lora_r4",
                                      "fed_lora_r2", "fed_lora_r4", "fed_lora_r8", "full_ft"};
};

struct ExperimentConfig {
  WaveNetConfig model;
  OfdmConfig ofdm{64, 16, 56, 51};
  InterferenceParams interference;
  Regime regime = Regime::Balanced;
  std::size_t samples_per_node = 200;
  PretrainSettings pretrain;
  AdaptSettings adapt;
  EvalSettings eval;
  std::uint64_t seed = 0;
  std::string out_dir = "runs/desk";

  /// Full-scale numerology and dataset sizes.
  static ExperimentConfig full_scale() {
    ExperimentConfig c;
    c.ofdm.n_symbols = 512;
    c.samples_per_node = 3000;
    c.pretrain.steps = 151200;
    c.pretrain.samples = 56000;
    c.out_dir = "runs/full";
    return c;
  }

  void validate() const;
};

namespace detail {

template <typename F>
void visit_fields(ExperimentConfig& c, F&& f) {
  f("model", "blocks", c.model.n_blocks);
  f("model", "channels", c.model.channels);
  f("model", "kernel", c.model.kernel);
  f("model", "dilation_cycle", c.model.dilation_cycle);
  f("data", "fft_size", c.ofdm.fft_size);
  f("data", "cp_len", c.ofdm.cp_len);
  f("data", "active_subcarriers", c.ofdm.active_subcarriers);
  f("data", "n_symbols", c.ofdm.n_symbols);
  f("data", "regime", c.regime);
  f("data", "samples_per_node", c.samples_per_node);
  auto& ip = c.interference;
  f("interference", "cs2_rolloff", ip.cs2_rolloff);
  f("interference", "cs2_samples_per_symbol", ip.cs2_samples_per_symbol);
  f("interference", "cs2_span_symbols", ip.cs2_span_symbols);
  f("interference", "cs2_max_cfo", ip.cs2_max_cfo);
  f("interference", "cs3_fft_size", ip.cs3_fft_size);
  f("interference", "cs3_cp_len", ip.cs3_cp_len);
  f("interference", "emi_burst_rate", ip.emi_burst_rate);
  f("interference", "emi_min_len", ip.emi_min_len);
  f("interference", "emi_max_len", ip.emi_max_len);
  f("interference", "emi_amplitude_sigma", ip.emi_amplitude_sigma);
  f("interference", "noise_floor_db", ip.noise_floor_db);
  f("pretrain", "steps", c.pretrain.steps);
  f("pretrain", "samples", c.pretrain.samples);
  f("pretrain", "batch_size", c.pretrain.batch_size);
  f("pretrain", "lr", c.pretrain.lr);
  f("pretrain", "probe_samples", c.pretrain.probe_samples);
  auto& a = c.adapt;
  f("adapt", "method", a.method);
  f("adapt", "rank", a.rank);
  f("adapt", "alpha", a.alpha);
  f("adapt", "rounds", a.rounds);
  f("adapt", "local_epochs", a.local_epochs);
  f("adapt", "max_epochs", a.max_epochs);
  f("adapt", "batch_size", a.batch_size);
  f("adapt", "lr_adapter", a.lr_adapter);
  f("adapt", "lr_full", a.lr_full);
  f("adapt", "plateau_schedule", a.plateau_schedule);
  f("adapt", "plateau_factor", a.plateau_factor);
  f("adapt", "plateau_patience", a.plateau_patience);
  f("adapt", "min_delta", a.min_delta);
  f("adapt", "early_stop_patience", a.early_stop_patience);
  f("adapt", "parallel", a.parallel);
  f("eval", "sinr_levels", c.eval.sinr_levels);
  f("eval", "frames_per_level", c.eval.frames_per_level);
  f("eval", "global_frames_per_level", c.eval.global_frames_per_level);
  f("eval", "methods", c.eval.methods);
  f("seeds", "seed", c.seed);
  f("output", "dir", c.out_dir);
}

template <std::unsigned_integral U>
std::string to_text(U v) {
  return std::to_string(v);
}
inline std::string to_text(double v) { return format_real(v); }
inline std::string to_text(bool v) { return v ? "true" : "false"; }
inline std::string to_text(const std::string& v) { return v; }
inline std::string to_text(Regime r) { return to_string(r); }
inline std::string to_text(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_real(v[i]);
  return s;
}
inline std::string to_text(const std::vector<std::string>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
  return s;
}

template <typename T>
void parse_number(const std::string& text, T& out, const std::string& key) {
  const std::string t = trim(text);
  const auto res = std::from_chars(t.data(), t.data() + t.size(), out);
  if (res.ec != std::errc{} || res.ptr != t.data() + t.size() || t.empty())
    throw std::invalid_argument("config: '" + key + "' has invalid value '" + text + "'");
}

template <std::unsigned_integral U>
void from_text(const std::string& t, U& v, const std::string& k) {
  parse_number(t, v, k);
}
inline void from_text(const std::string& t, double& v, const std::string& k) { parse_number(t, v, k); }
inline void from_text(const std::string& t, bool& v, const std::string& k) {
  const auto s = trim(t);
  if (s == "true" || s == "1") v = true;
  else if (s == "false" || s == "0") v = false;
  else throw std::invalid_argument("config: '" + k + "' must be true or false, got '" + t + "'");
}
inline void from_text(const std::string& t, std::string& v, const std::string&) { v = trim(t); }
inline void from_text(const std::string& t, Regime& v, const std::string&) { v = parse_regime(trim(t)); }
inline void from_text(const std::string& t, std::vector<double>& v, const std::string& k) {
  v.clear();
  for (const auto& part : split(t, ',')) parse_number(part, v.emplace_back(), k);
}
inline void from_text(const std::string& t, std::vector<std::string>& v, const std::string&) {
  v.clear();
  for (const auto& part : split(t, ','))
    if (!trim(part).empty()) v.push_back(trim(part));
}

}  // namespace detail

/// Method tag such as "fed_lora_r4"; a LoRA tag without a rank suffix uses
/// `default_rank`.
inline MethodSpec parse_method_tag(const std::string& tag, std::size_t default_rank, double alpha) {
  std::string name = tag;
  std::size_t rank = default_rank;
  const auto pos = tag.rfind("_r");
  if (pos != std::string::npos && pos + 2 < tag.size() &&
      std::all_of(tag.begin() + static_cast<long>(pos) + 2, tag.end(), ::isdigit)) {
    name = tag.substr(0, pos);
    detail::parse_number(tag.substr(pos + 2), rank, "method rank");
  }
  MethodSpec spec{parse_method(name), rank, alpha};
  if (name != tag && !spec.uses_lora())
    throw std::invalid_argument("method '" + tag + "': only LoRA methods take a rank suffix");
  if (spec.uses_lora() && (rank == 0 || rank > 255))
    throw std::invalid_argument("method '" + tag + "': rank must be in [1, 255]");
  return spec;
}

inline void ExperimentConfig::validate() const {
  model.validate();
  ofdm.validate();
  const std::size_t max_span = (model.kernel - 1) * (std::size_t{1} << (std::min(model.n_blocks, model.dilation_cycle) - 1));
  if (max_span >= ofdm.frame_length())
    throw std::invalid_argument("config: frame length " + std::to_string(ofdm.frame_length()) +
                                " is too short for the largest dilation span " + std::to_string(max_span));
  if (samples_per_node < 3) throw std::invalid_argument("config: data.samples_per_node must be >= 3");
  for (const auto& p : partition_profiles(regime, samples_per_node))
    if (p.total() < 2)
      throw std::invalid_argument("config: node " + std::to_string(p.node_id) + " gets " + std::to_string(p.total()) +
                                  " samples under the " + to_string(regime) + " regime; need at least 2");
  if (pretrain.samples == 0 || pretrain.batch_size == 0 || pretrain.probe_samples == 0)
    throw std::invalid_argument("config: pretrain sizes must be positive");
  if (adapt.rounds == 0 || adapt.local_epochs == 0)
    throw std::invalid_argument("config: adapt.rounds and adapt.local_epochs must be >= 1");
  if (adapt.batch_size == 0 || adapt.max_epochs == 0)
    throw std::invalid_argument("config: adapt.batch_size and adapt.max_epochs must be >= 1");
  if (adapt.parallel == 0) throw std::invalid_argument("config: adapt.parallel must be >= 1");
  parse_method_tag(adapt.method, adapt.rank, adapt.alpha);
  if (eval.sinr_levels.empty()) throw std::invalid_argument("config: eval.sinr_levels is empty");
  if (eval.frames_per_level == 0 || eval.global_frames_per_level == 0)
    throw std::invalid_argument("config: eval frame counts must be >= 1");
  if (eval.methods.empty()) throw std::invalid_argument("config: eval.methods is empty");
  for (const auto& m : eval.methods) parse_method_tag(m, adapt.rank, adapt.alpha);
  if (out_dir.empty()) throw std::invalid_argument("config: output.dir is empty");
}

/// Overlays an INI file on `base`. Unknown sections or keys are errors.
inline ExperimentConfig load_config(const std::string& path, ExperimentConfig base = {}) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(path, tree);
  } catch (const pt::ini_parser_error& e) {
    throw std::runtime_error("config: " + std::string(e.what()));
  }
  std::set<std::string> known;
  detail::visit_fields(base, [&](const char* sec, const char* key, auto& field) {
    const std::string full = std::string(sec) + "." + key;
    known.insert(full);
    if (const auto v = tree.get_optional<std::string>(pt::ptree::path_type(full, '.')))
      detail::from_text(*v, field, full);
  });
  for (const auto& [sec, body] : tree) {
    if (body.empty()) throw std::invalid_argument("config: '" + sec + "' is not inside a section");
    for (const auto& [key, value] : body)
      if (!known.count(sec + "." + key))
        throw std::invalid_argument("config: unknown key '" + sec + "." + key + "' in " + path);
  }
  base.validate();
  return base;
}

/// Fully-resolved config as INI text, in a fixed key order.
inline std::string config_text(const ExperimentConfig& cfg) {
  auto copy = cfg;
  std::string out;
  std::string current;
  detail::visit_fields(copy, [&](const char* sec, const char* key, auto& field) {
    if (current != sec) {
      out += (current.empty() ? "[" : "\n[") + std::string(sec) + "]\n";
      current = sec;
    }
    out += std::string(key) + " = " + detail::to_text(field) + "\n";
  });
  return out;
}

inline std::string config_hash(const ExperimentConfig& cfg) { return hex64(fnv1a(config_text(cfg))); }

// ---------------------------------------------------------------------------
// Paths and seeds

inline fs::path regime_dir(const ExperimentConfig& c) { return fs::path(c.out_dir) / to_string(c.regime); }
inline fs::path method_dir(const ExperimentConfig& c, const std::string& tag) { return regime_dir(c) / tag; }
inline fs::path eval_dir(const ExperimentConfig& c) { return regime_dir(c) / "eval"; }
inline fs::path backbone_path(const ExperimentConfig& c) { return fs::path(c.out_dir) / "backbone.flrf"; }

enum class SeedStream : std::uint64_t {
  PretrainData = 0x9D,
  PretrainInit = 0x1A,
  PretrainShuffle = 0x5F,
  Partition = 0xDA,
  Adapt = 0xAD,
  Eval = 0xE7,
};

inline std::uint64_t stream_seed(const ExperimentConfig& c, SeedStream s) {
  return derive_seed(c.seed, {static_cast<std::uint64_t>(s)});
}

inline std::vector<NodeData> node_datasets(const ExperimentConfig& c) {
  return partition(c.regime, stream_seed(c, SeedStream::Partition), c.ofdm, c.samples_per_node, c.interference);
}

// ---------------------------------------------------------------------------
// Pretraining

/// Pretraining mixtures: an even CS2like/CS3like split, regenerated on demand
/// from per-index seeds so the stream never has to be held in memory.
class PretrainStream {
 public:
  explicit PretrainStream(const ExperimentConfig& c)
      : cfg_(c), seed_(stream_seed(c, SeedStream::PretrainData)) {
    const auto counts = split_counts(profile(), c.pretrain.samples);
    cs2_count_ = counts[0];
  }

  static InterferenceMix profile() {
    return {{InterferenceKind::CS2like, 1.0}, {InterferenceKind::CS3like, 1.0}};
  }

  std::size_t size() const { return cfg_.pretrain.samples; }
  InterferenceKind kind(std::size_t i) const {
    return i < cs2_count_ ? InterferenceKind::CS2like : InterferenceKind::CS3like;
  }
  /// Identical to element i of make_dataset(profile(), size(), ...).
  MixtureSample sample(std::size_t i) const {
    return make_sample(kind(i), SinrMode::uniform(), cfg_.ofdm, derive_seed(seed_, {i}), cfg_.interference);
  }

 private:
  ExperimentConfig cfg_;
  std::uint64_t seed_;
  std::size_t cs2_count_ = 0;
};

struct PretrainOutcome {
  WaveNetModel<float> model;
  std::vector<double> losses;
  double initial_mse = 0.0;
  double final_mse = 0.0;
  std::size_t emi_samples_seen = 0;
};

inline void write_config_next_to(const fs::path& path, const ExperimentConfig& c) {
  write_text_file(path, config_text(c));
}

inline PretrainOutcome cmd_pretrain(const ExperimentConfig& c, std::ostream* log = nullptr) {
  c.validate();
  fs::create_directories(c.out_dir);
  write_config_next_to(fs::path(c.out_dir) / "pretrain.config.ini", c);
  const PretrainStream stream(c);

  PretrainOutcome out{build<float>(c.model, stream_seed(c, SeedStream::PretrainInit)), {}, 0, 0, 0};
  std::vector<MixtureSample> probe;
  const std::size_t n_probe = std::min(c.pretrain.probe_samples, stream.size());
  for (std::size_t k = 0; k < n_probe; ++k) probe.push_back(stream.sample(k * stream.size() / n_probe));
  out.initial_mse = evaluate_mse(out.model, probe);
  if (log) *log << "pretrain: " << c.pretrain.steps << " steps, initial probe mse " << out.initial_mse << '\n';

  Optimizer opt(out.model, {.lr = c.pretrain.lr});
  std::vector<std::size_t> order(stream.size());
  std::size_t cursor = order.size(), epoch = 0;
  const auto shuffle_seed = stream_seed(c, SeedStream::PretrainShuffle);
  std::vector<MixtureSample> batch;
  for (std::size_t step = 0; step < c.pretrain.steps; ++step) {
    batch.clear();
    while (batch.size() < c.pretrain.batch_size) {
      if (cursor == order.size()) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(derive_seed(shuffle_seed, {epoch++}));
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      batch.push_back(stream.sample(order[cursor++]));
      out.emi_samples_seen += batch.back().kind == InterferenceKind::EMIlike;
    }
    out.losses.push_back(backward_and_step(out.model, batch, opt));
    if (log && (step + 1) % 100 == 0)
      *log << "pretrain: step " << step + 1 << " batch mse " << out.losses.back() << '\n';
  }
  out.final_mse = evaluate_mse(out.model, probe);
  if (log) *log << "pretrain: final probe mse " << out.final_mse << '\n';

  save(out.model, backbone_path(c).string());
  std::string curve = "step,mse\n";
  for (std::size_t i = 0; i < out.losses.size(); ++i) curve += std::to_string(i + 1) + "," + format_real(out.losses[i]) + "\n";
  write_text_file(fs::path(c.out_dir) / "pretrain_loss.csv", curve);
  write_text_file(fs::path(c.out_dir) / "pretrain_summary.csv",
                  "initial_mse,final_mse,steps,emi_samples\n" + format_real(out.initial_mse) + "," +
                      format_real(out.final_mse) + "," + std::to_string(c.pretrain.steps) + "," +
                      std::to_string(out.emi_samples_seen) + "\n");
  return out;
}

inline WaveNetModel<float> load_backbone(const ExperimentConfig& c) {
  const auto path = backbone_path(c);
  if (!fs::exists(path))
    throw std::runtime_error("missing backbone checkpoint '" + path.string() + "' (run pretrain first)");
  return load(path.string(), c.model);
}

// ---------------------------------------------------------------------------
// Adaptation

struct AdaptOutcome {
  MethodSpec spec;
  std::vector<WaveNetModel<float>> node_models;
  CommLedger ledger;
  std::vector<std::vector<EpochRecord>> local_history;
};

inline std::string artifact_name(const MethodSpec& m, std::size_t node_id) {
  return "node" + std::to_string(node_id) + (m.full() ? ".flrf" : ".flad");
}

inline LocalConfig local_config(const ExperimentConfig& c) {
  const auto& a = c.adapt;
  LocalConfig lc;
  lc.max_epochs = a.max_epochs;
  lc.batch_size = a.batch_size;
  lc.lr_adapter = a.lr_adapter;
  lc.lr_full = a.lr_full;
  lc.seed = stream_seed(c, SeedStream::Adapt);
  lc.plateau_schedule = a.plateau_schedule;
  lc.plateau_factor = a.plateau_factor;
  lc.plateau_patience = a.plateau_patience;
  lc.min_delta = a.min_delta;
  lc.early_stop_patience = a.early_stop_patience;
  return lc;
}

inline FederationConfig federation_config(const ExperimentConfig& c) {
  const auto& a = c.adapt;
  return {a.rounds, a.local_epochs, a.batch_size, a.lr_adapter, a.lr_full, stream_seed(c, SeedStream::Adapt), a.parallel};
}

/// Adapts the backbone with `c.adapt.method` on every node and persists the
/// per-node artifacts and logs.
inline AdaptOutcome cmd_adapt(const ExperimentConfig& c, std::ostream* log = nullptr,
                              const std::vector<NodeData>* prebuilt_nodes = nullptr) {
  c.validate();
  const auto spec = parse_method_tag(c.adapt.method, c.adapt.rank, c.adapt.alpha);
  const auto backbone = load_backbone(c);
  std::vector<NodeData> generated;
  if (!prebuilt_nodes) generated = node_datasets(c);
  const auto& nodes = prebuilt_nodes ? *prebuilt_nodes : generated;
  const std::string tag = method_tag(spec);
  const auto dir = method_dir(c, tag);
  fs::create_directories(dir);
  write_config_next_to(dir / "config.ini", c);
  if (log) *log << "adapt: " << tag << " (" << to_string(c.regime) << ")\n";

  AdaptOutcome out{spec, {}, {}, {}};
  if (spec.federated()) {
    auto res = run_federated(federation_config(c), spec, nodes, backbone);
    out.node_models = std::move(res.node_models);
    out.ledger = std::move(res.ledger);
    if (spec.full()) {
      auto global = prepare_model(backbone, spec, 0);
      unpack(res.global, global);
      save(global, (dir / "global.flrf").string());
    } else {
      save_adapter(res.global, (dir / "global.flad").string());
    }
  } else {
    out.node_models.resize(nodes.size());
    out.local_history.resize(nodes.size());
    const auto lc = local_config(c);
    detail::for_each_node(nodes.size(), c.adapt.parallel, [&](std::size_t k) {
      auto res = run_local(lc, spec, nodes[k], backbone);
      out.node_models[k] = std::move(res.model);
      out.local_history[k] = std::move(res.history);
    });
    std::string local_log = "node,epoch,val_mse,lr\n";
    for (std::size_t k = 0; k < nodes.size(); ++k)
      for (const auto& r : out.local_history[k])
        local_log += std::to_string(nodes[k].profile.node_id) + "," + std::to_string(r.epoch) + "," +
                     format_real(r.val_mse) + "," + format_real(r.lr) + "\n";
    write_text_file(dir / "local_log.csv", local_log);
  }

  std::ostringstream round_log;
  round_log << kRoundLogHeader << '\n';
  for (const auto& e : out.ledger.entries)
    round_log << e.round << ',' << e.node << ',' << e.method << ',' << format_real(e.val_mse) << ','
              << e.params_up << ',' << e.params_down << '\n';
  write_text_file(dir / "round_log.csv", round_log.str());

  if (spec.method != Method::Backbone) {
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      const auto path = dir / artifact_name(spec, nodes[k].profile.node_id);
      if (spec.full())
        save(out.node_models[k], path.string());
      else
        save_adapter(pack(out.node_models[k]), path.string());
    }
  }
  if (log) *log << "adapt: wrote " << dir.string() << '\n';
  return out;
}

/// Rebuilds each node's model for `tag` from persisted artifacts; appends any
/// absent file to `missing` instead of throwing.
inline std::vector<WaveNetModel<float>> load_method_models(const ExperimentConfig& c, const WaveNetModel<float>& backbone,
                                                           const std::string& tag, std::vector<std::string>& missing) {
  const auto spec = parse_method_tag(tag, c.adapt.rank, c.adapt.alpha);
  const auto dir = method_dir(c, method_tag(spec));
  std::vector<WaveNetModel<float>> models;
  if (spec.method == Method::Backbone) return std::vector<WaveNetModel<float>>(kNodeCount, backbone);
  for (std::size_t id = 1; id <= kNodeCount; ++id) {
    const auto path = dir / artifact_name(spec, id);
    if (!fs::exists(path)) {
      missing.push_back(path.string());
      continue;
    }
    if (spec.full()) {
      models.push_back(load(path.string(), c.model));
      continue;
    }
    auto model = prepare_model(backbone, spec, 0);
    const auto v = load_adapter(path.string());
    const auto expect = pack(model);
    if (!v.same_layout(expect))
      throw std::runtime_error(path.string() + ": adapter " + v.describe() + " does not match method " +
                               tag + " (" + expect.describe() + ")");
    unpack(v, model);
    models.push_back(std::move(model));
  }
  return models;
}

// ---------------------------------------------------------------------------
// Evaluation

struct BerCell {
  std::size_t node = 0;
  std::string method;
  double sinr_db = 0.0;
  double ber = 0.0;
};

struct KindCell {
  std::size_t node = 0;
  std::string method;
  InterferenceKind kind{};
  double ber = 0.0;
};

struct SummaryRow {
  std::string node;  // "1".."5" or "avg"
  std::string method;
  double avg_ber = 0.0;
  double improvement_pct = 0.0;
  double global_avg_ber = 0.0;
};

struct EvalOutcome {
  std::vector<BerCell> local;
  std::vector<KindCell> global;
  std::vector<SummaryRow> summary;

  const SummaryRow* find(const std::string& node, const std::string& method) const {
    for (const auto& r : summary)
      if (r.node == node && r.method == method) return &r;
    return nullptr;
  }
};

inline constexpr std::string_view kPassthrough = "passthrough";

/// 100 (b - m) / b; zero when the reference BER is zero.
inline double improvement_pct(double backbone_ber, double method_ber) {
  return backbone_ber > 0.0 ? 100.0 * (backbone_ber - method_ber) / backbone_ber : 0.0;
}

/// Local test set of one node: `frames` mixtures per level in the node's
/// balanced-regime mix, whatever the training regime.
inline std::vector<std::vector<MixtureSample>> local_test_set(const ExperimentConfig& c, std::size_t node_id) {
  const auto profile = partition_profiles(Regime::Balanced, 3000)[node_id - 1];
  std::vector<std::vector<MixtureSample>> out;
  for (std::size_t j = 0; j < c.eval.sinr_levels.size(); ++j)
    out.push_back(make_dataset(profile.mix(), c.eval.frames_per_level, SinrMode::level(c.eval.sinr_levels[j]), c.ofdm,
                               derive_seed(stream_seed(c, SeedStream::Eval), {node_id, j}), c.interference));
  return out;
}

/// Shared global test set: per kind, per level.
inline std::vector<std::vector<std::vector<MixtureSample>>> global_test_set(const ExperimentConfig& c) {
  std::vector<std::vector<std::vector<MixtureSample>>> out;
  for (const auto kind : kAllKinds) {
    auto& per_level = out.emplace_back();
    for (std::size_t j = 0; j < c.eval.sinr_levels.size(); ++j)
      per_level.push_back(make_dataset({{kind, 1.0}}, c.eval.global_frames_per_level, SinrMode::level(c.eval.sinr_levels[j]),
                                       c.ofdm, derive_seed(stream_seed(c, SeedStream::Eval), {0x61, static_cast<std::uint64_t>(kind), j}),
                                       c.interference));
  }
  return out;
}

inline double frame_ber(const WaveNetModel<float>* model, const MixtureSample& s, const OfdmConfig& ofdm) {
  const auto est = model ? ofdm_demodulate(separate(*model, s.mixture), ofdm) : ofdm_demodulate(s.mixture, ofdm);
  return ber(s.bits, est);
}

inline double mean_ber(const WaveNetModel<float>* model, const std::vector<MixtureSample>& frames, const OfdmConfig& ofdm) {
  double acc = 0.0;
  for (const auto& s : frames) acc += frame_ber(model, s, ofdm);
  return acc / static_cast<double>(frames.size());
}

/// Runs every configured method over the local and global test sets and
/// writes the three CSVs.
inline EvalOutcome cmd_eval(const ExperimentConfig& c, std::ostream* log = nullptr) {
  c.validate();
  const auto backbone = load_backbone(c);
  std::vector<std::string> tags;
  for (const auto& t : c.eval.methods) tags.push_back(method_tag(parse_method_tag(t, c.adapt.rank, c.adapt.alpha)));
  if (std::find(tags.begin(), tags.end(), "backbone") == tags.end()) tags.insert(tags.begin(), "backbone");
  std::vector<std::string> missing;
  std::vector<std::vector<WaveNetModel<float>>> models;
  for (const auto& t : tags) models.push_back(load_method_models(c, backbone, t, missing));
  if (!missing.empty()) {
    std::string msg = "eval: missing adaptation artifacts (run adapt first):";
    for (const auto& m : missing) msg += "\n  " + m;
    throw std::runtime_error(msg);
  }
  const auto dir = eval_dir(c);
  fs::create_directories(dir);
  write_config_next_to(dir / "config.ini", c);

  const auto global = global_test_set(c);
  const std::size_t n_levels = c.eval.sinr_levels.size();
  const std::size_t n_methods = tags.size() + 1;  // passthrough first
  // [node][method][level] and [node][method][kind]
  std::vector<std::vector<std::vector<double>>> local_ber(kNodeCount), kind_ber(kNodeCount);
  detail::for_each_node(kNodeCount, c.adapt.parallel, [&](std::size_t k) {
    const auto tests = local_test_set(c, k + 1);
    local_ber[k].assign(n_methods, std::vector<double>(n_levels));
    kind_ber[k].assign(n_methods, std::vector<double>(kAllKinds.size()));
    for (std::size_t m = 0; m < n_methods; ++m) {
      const WaveNetModel<float>* model = m == 0 ? nullptr : &models[m - 1][k];
      for (std::size_t j = 0; j < n_levels; ++j) local_ber[k][m][j] = mean_ber(model, tests[j], c.ofdm);
      for (std::size_t q = 0; q < kAllKinds.size(); ++q) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n_levels; ++j) acc += mean_ber(model, global[q][j], c.ofdm);
        kind_ber[k][m][q] = acc / static_cast<double>(n_levels);
      }
    }
    if (log) *log << "eval: node " << k + 1 << " done\n";
  });

  EvalOutcome out;
  std::vector<std::string> names{std::string(kPassthrough)};
  names.insert(names.end(), tags.begin(), tags.end());
  const std::size_t backbone_idx = 1 + static_cast<std::size_t>(std::find(tags.begin(), tags.end(), "backbone") - tags.begin());
  for (std::size_t m = 0; m < n_methods; ++m) {
    double sum_ber = 0.0, sum_imp = 0.0, sum_global = 0.0;
    for (std::size_t k = 0; k < kNodeCount; ++k) {
      for (std::size_t j = 0; j < n_levels; ++j) out.local.push_back({k + 1, names[m], c.eval.sinr_levels[j], local_ber[k][m][j]});
      for (std::size_t q = 0; q < kAllKinds.size(); ++q) out.global.push_back({k + 1, names[m], kAllKinds[q], kind_ber[k][m][q]});
      auto avg = [&](std::size_t mm) {
        double s = 0.0;
        for (double v : local_ber[k][mm]) s += v;
        return s / static_cast<double>(n_levels);
      };
      double g = 0.0;
      for (double v : kind_ber[k][m]) g += v;
      g /= static_cast<double>(kAllKinds.size());
      const double a = avg(m);
      const double imp = improvement_pct(avg(backbone_idx), a);
      out.summary.push_back({std::to_string(k + 1), names[m], a, imp, g});
      sum_ber += a;
      sum_imp += imp;
      sum_global += g;
    }
    const double n = static_cast<double>(kNodeCount);
    out.summary.push_back({"avg", names[m], sum_ber / n, sum_imp / n, sum_global / n});
  }

  std::string local_csv = "node,method,sinr_db,ber\n";
  for (const auto& r : out.local)
    local_csv += std::to_string(r.node) + "," + r.method + "," + format_real(r.sinr_db) + "," + format_real(r.ber) + "\n";
  std::string global_csv = "node,method,kind,ber\n";
  for (const auto& r : out.global)
    global_csv += std::to_string(r.node) + "," + r.method + "," + std::string(to_string(r.kind)) + "," + format_real(r.ber) + "\n";
  std::string summary_csv = "node,method,avg_ber,improvement_pct,global_avg_ber\n";
  for (const auto& r : out.summary)
    summary_csv += r.node + "," + r.method + "," + format_real(r.avg_ber) + "," + format_real(r.improvement_pct) + "," +
                   format_real(r.global_avg_ber) + "\n";
  write_text_file(dir / "ber_local.csv", local_csv);
  write_text_file(dir / "ber_global_by_type.csv", global_csv);
  write_text_file(dir / "summary.csv", summary_csv);
  if (log) *log << "eval: wrote " << dir.string() << '\n';
  return out;
}

// ---------------------------------------------------------------------------
// Report

struct TradeoffRow {
  std::string method;
  std::size_t params_per_round = 0;
  double avg_improvement_pct = 0.0;
  bool dominated = false;
};

/// Flags every row for which another row has no more parameters and no less
/// improvement, with at least one strict.
inline void mark_dominated(std::vector<TradeoffRow>& rows) {
  for (auto& a : rows) {
    a.dominated = false;
    for (const auto& b : rows) {
      if (&a == &b) continue;
      const bool no_worse = b.params_per_round <= a.params_per_round && b.avg_improvement_pct >= a.avg_improvement_pct;
      const bool better = b.params_per_round < a.params_per_round || b.avg_improvement_pct > a.avg_improvement_pct;
      if (no_worse && better) a.dominated = true;
    }
  }
}

using CsvTable = std::vector<std::map<std::string, std::string>>;

inline CsvTable read_csv(const fs::path& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": empty CSV");
  const auto header = split(trim(line), ',');
  CsvTable rows;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto cells = split(trim(line), ',');
    if (cells.size() != header.size()) throw std::runtime_error(path.string() + ": ragged row '" + line + "'");
    auto& row = rows.emplace_back();
    for (std::size_t i = 0; i < cells.size(); ++i) row[header[i]] = cells[i];
  }
  return rows;
}

inline double cell_real(const std::map<std::string, std::string>& row, const std::string& key) {
  double v = 0.0;
  detail::parse_number(row.at(key), v, key);
  return v;
}

struct ReportOutcome {
  std::vector<TradeoffRow> tradeoff;
  /// Node-5 improvement of fed_lora minus l_lora (same rank), when both ran.
  std::optional<double> scarcity_gap;
  std::string markdown;
};

inline ReportOutcome cmd_report(const ExperimentConfig& c, std::ostream* log = nullptr) {
  c.validate();
  std::vector<std::string> tags;
  for (const auto& t : c.eval.methods) tags.push_back(method_tag(parse_method_tag(t, c.adapt.rank, c.adapt.alpha)));
  const auto summary_path = eval_dir(c) / "summary.csv";
  std::vector<std::string> missing;
  if (!fs::exists(summary_path)) missing.push_back(summary_path.string());
  std::vector<std::string> fed_tags;
  for (const auto& t : tags) {
    if (!parse_method_tag(t, c.adapt.rank, c.adapt.alpha).federated()) continue;
    fed_tags.push_back(t);
    if (!fs::exists(method_dir(c, t) / "round_log.csv")) missing.push_back((method_dir(c, t) / "round_log.csv").string());
  }
  if (!missing.empty()) {
    std::string msg = "report: missing inputs:";
    for (const auto& m : missing) msg += "\n  " + m;
    throw std::runtime_error(msg);
  }

  const auto summary = read_csv(summary_path);
  auto lookup = [&](const std::string& node, const std::string& method) -> const std::map<std::string, std::string>* {
    for (const auto& r : summary)
      if (r.at("node") == node && r.at("method") == method) return &r;
    return nullptr;
  };

  ReportOutcome out;
  std::map<std::string, CsvTable> logs;
  for (const auto& t : fed_tags) {
    logs[t] = read_csv(method_dir(c, t) / "round_log.csv");
    const auto* avg = lookup("avg", t);
    if (!avg) throw std::runtime_error("report: " + summary_path.string() + " has no row for method " + t);
    if (logs[t].empty()) throw std::runtime_error("report: round log for " + t + " is empty");
    TradeoffRow row{t, 0, cell_real(*avg, "improvement_pct"), false};
    detail::parse_number(logs[t].front().at("params_up"), row.params_per_round, "params_up");
    out.tradeoff.push_back(row);
  }
  std::sort(out.tradeoff.begin(), out.tradeoff.end(),
            [](const auto& a, const auto& b) { return a.params_per_round < b.params_per_round; });
  mark_dominated(out.tradeoff);

  const std::string rank = std::to_string(c.adapt.rank);
  if (const auto* f = lookup("5", "fed_lora_r" + rank))
    if (const auto* l = lookup("5", "l_lora_r" + rank))
      out.scarcity_gap = cell_real(*f, "improvement_pct") - cell_real(*l, "improvement_pct");

  std::ostringstream md;
  md << "# Run report (" << to_string(c.regime) << ")\n\n";
  md << "- seed: " << c.seed << "\n- config hash: " << config_hash(c) << "\n- output: " << c.out_dir << "\n\n";
  md << "## Average BER over the SINR sweep (local test sets)\n\n| method |";
  for (std::size_t k = 1; k <= kNodeCount; ++k) md << " node " << k << " |";
  md << " avg | avg improvement % |\n|---|";
  for (std::size_t k = 0; k <= kNodeCount + 1; ++k) md << "---|";
  md << "\n";
  std::vector<std::string> row_methods{std::string(kPassthrough)};
  for (const auto& r : summary)
    if (std::find(row_methods.begin(), row_methods.end(), r.at("method")) == row_methods.end()) row_methods.push_back(r.at("method"));
  for (const auto& m : row_methods) {
    md << "| " << m << " |";
    for (std::size_t k = 1; k <= kNodeCount; ++k) {
      const auto* r = lookup(std::to_string(k), m);
      md << " " << (r ? r->at("avg_ber") : "-") << " |";
    }
    const auto* a = lookup("avg", m);
    md << " " << (a ? a->at("avg_ber") : "-") << " | " << (a ? a->at("improvement_pct") : "-") << " |\n";
  }

  md << "\n## Communication vs. improvement\n\n| method | params/round/node | avg improvement % | Pareto-dominated |\n|---|---|---|---|\n";
  std::string tradeoff_csv = "method,params_per_round,avg_improvement_pct,dominated\n";
  for (const auto& r : out.tradeoff) {
    md << "| " << r.method << " | " << r.params_per_round << " | " << format_real(r.avg_improvement_pct) << " | "
       << (r.dominated ? "yes" : "no") << " |\n";
    tradeoff_csv += r.method + "," + std::to_string(r.params_per_round) + "," + format_real(r.avg_improvement_pct) + "," +
                    (r.dominated ? "1" : "0") + "\n";
  }

  for (const auto& t : fed_tags) {
    md << "\n## Validation MSE per round: " << t << "\n\n| round |";
    for (std::size_t k = 1; k <= kNodeCount; ++k) md << " node " << k << " |";
    md << "\n|---|";
    for (std::size_t k = 0; k < kNodeCount; ++k) md << "---|";
    md << "\n";
    std::map<std::size_t, std::map<std::size_t, std::string>> grid;
    for (const auto& r : logs[t]) {
      std::size_t round = 0, node = 0;
      detail::parse_number(r.at("round"), round, "round");
      detail::parse_number(r.at("node"), node, "node");
      grid[round][node] = r.at("val_mse");
    }
    for (const auto& [round, cols] : grid) {
      md << "| " << round << " |";
      for (std::size_t k = 1; k <= kNodeCount; ++k) md << " " << (cols.count(k) ? cols.at(k) : "-") << " |";
      md << "\n";
    }
  }

  md << "\n## Node 5: federated minus local LoRA improvement\n\n";
  if (out.scarcity_gap)
    md << "fed_lora_r" << rank << " - l_lora_r" << rank << " = " << format_real(*out.scarcity_gap) << " percentage points ("
       << (*out.scarcity_gap >= 0.0 ? "federation helps" : "local is better") << ")\n";
  else
    md << "not available (needs fed_lora_r" << rank << " and l_lora_r" << rank << ")\n";

  out.markdown = md.str();
  write_text_file(regime_dir(c) / "report.md", out.markdown);
  write_text_file(regime_dir(c) / "tradeoff.csv", tradeoff_csv);
  if (log) *log << "report: wrote " << (regime_dir(c) / "report.md").string() << '\n';
  return out;
}

// ---------------------------------------------------------------------------
// Dataset export

/// Writes the pretraining stream and every node's train/val split as RFMX files.
inline void cmd_data(const ExperimentConfig& c, std::ostream* log = nullptr) {
  c.validate();
  const auto dir = fs::path(c.out_dir) / "data";
  fs::create_directories(dir);
  write_config_next_to(dir / "config.ini", c);
  const PretrainStream stream(c);
  ByteWriter w;
  for (std::size_t i = 0; i < stream.size(); ++i) append_mixture_record(w, stream.sample(i));
  write_file_bytes((dir / "pretrain.rfmx").string(), w.bytes());
  for (const auto& node : node_datasets(c)) {
    const std::string base = to_string(c.regime) + "_node" + std::to_string(node.profile.node_id);
    write_mixture_file((dir / (base + "_train.rfmx")).string(), node.train);
    write_mixture_file((dir / (base + "_val.rfmx")).string(), node.val);
  }
  if (log) *log << "data: wrote " << dir.string() << '\n';
}

}  // namespace fedrf
