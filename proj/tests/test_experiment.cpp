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

#include <gtest/gtest.h>

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>

#include "fedrf/experiment.hpp"
#include "tree_compare.hpp"

namespace fedrf {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("fedrf_exp_" + std::to_string(::getpid())) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

/// Default model on one-symbol frames (T = 80) and a handful of samples.
ExperimentConfig tiny_config(const fs::path& dir) {
  ExperimentConfig c;
  c.ofdm.n_symbols = 1;
  c.samples_per_node = 6;
  c.pretrain = {3, 8, 4, 5e-4, 4};
  c.adapt.rounds = 1;
  c.adapt.local_epochs = 1;
  c.adapt.max_epochs = 1;
  c.adapt.batch_size = 4;
  c.eval.sinr_levels = {-10.0, 10.0};
  c.eval.frames_per_level = 1;
  c.eval.global_frames_per_level = 1;
  c.seed = 5;
  c.out_dir = dir.string();
  return c;
}

struct Pipeline {
  ExperimentConfig cfg;
  WaveNetModel<float> backbone;
  std::map<std::string, AdaptOutcome> adapted;
  EvalOutcome eval;
  ReportOutcome report;
};

Pipeline run_pipeline(const ExperimentConfig& cfg) {
  Pipeline p{cfg, cmd_pretrain(cfg).model, {}, {}, {}};
  const auto nodes = node_datasets(cfg);
  for (const auto& m : cfg.eval.methods) {
    auto c = cfg;
    c.adapt.method = m;
    p.adapted.emplace(m, cmd_adapt(c, nullptr, &nodes));
  }
  p.eval = cmd_eval(cfg);
  p.report = cmd_report(cfg);
  return p;
}

const Pipeline& shared_pipeline() {
  static const Pipeline p = run_pipeline(tiny_config(scratch("shared")));
  return p;
}

fs::path write_ini(const fs::path& dir, const std::string& text) {
  const auto path = dir / "cfg.ini";
  std::ofstream(path) << text;
  return path;
}

// ---------------------------------------------------------------------------
// Configuration

TEST(Config, DefaultsRoundTripThroughIni) {
  const auto dir = scratch("cfg_roundtrip");
  const ExperimentConfig def;
  const auto path = write_ini(dir, config_text(def));
  const auto loaded = load_config(path.string());
  EXPECT_EQ(config_text(loaded), config_text(def));
  EXPECT_EQ(def.ofdm.frame_length(), 4080u);
  EXPECT_EQ(def.samples_per_node, 200u);
  EXPECT_EQ(def.pretrain.steps, 5000u);
  EXPECT_EQ(def.eval.frames_per_level, 30u);
  EXPECT_EQ(def.eval.sinr_levels.size(), 11u);
}

TEST(Config, FileOverlaysPresetAndCliWinsLast) {
  const auto dir = scratch("cfg_overlay");
  const auto path = write_ini(dir, "[seeds]\nseed = 9\n[adapt]\nrank = 8\nalpha = 2.5\n");
  auto c = load_config(path.string(), ExperimentConfig::full_scale());
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.adapt.rank, 8u);
  EXPECT_EQ(c.adapt.alpha, 2.5);
  EXPECT_EQ(c.ofdm.frame_length(), 40960u);
  EXPECT_EQ(c.samples_per_node, 3000u);
  EXPECT_EQ(c.pretrain.steps, 151200u);
  EXPECT_EQ(c.model.channels, 48u);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  const auto dir = scratch("cfg_bad");
  EXPECT_THROW(load_config(write_ini(dir, "[model]\nchanels = 4\n").string()), std::invalid_argument);
  EXPECT_THROW(load_config(write_ini(dir, "[modle]\nchannels = 4\n").string()), std::invalid_argument);
  EXPECT_THROW(load_config(write_ini(dir, "[model]\nchannels = four\n").string()), std::invalid_argument);
  EXPECT_THROW(load_config(write_ini(dir, "[model]\nchannels = -4\n").string()), std::invalid_argument);
  EXPECT_THROW(load_config(write_ini(dir, "[adapt]\nplateau_schedule = maybe\n").string()), std::invalid_argument);
  EXPECT_THROW(load_config(write_ini(dir, "[adapt]\nmethod = fed_sgd\n").string()), std::invalid_argument);
  EXPECT_THROW(load_config(write_ini(dir, "[data]\nregime = skewed\n").string()), std::invalid_argument);
  EXPECT_THROW(load_config(write_ini(dir, "[eval]\nsinr_levels = 1,x\n").string()), std::invalid_argument);
  EXPECT_THROW(load_config((dir / "absent.ini").string()), std::runtime_error);
}

TEST(Config, RejectsFramesShorterThanTheDilationSpan) {
  const auto dir = scratch("cfg_span");
  // 16-sample frames against a largest span of 2 * 16.
  EXPECT_THROW(load_config(write_ini(dir, "[data]\nfft_size = 8\ncp_len = 0\nactive_subcarriers = 4\nn_symbols = 2\n").string()),
               std::invalid_argument);
}

TEST(Config, HashIsStableAndSensitive) {
  ExperimentConfig a, b;
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 16u);
  b.adapt.lr_adapter = 1.0000001e-3;
  EXPECT_NE(config_hash(a), config_hash(b));
  b = a;
  b.eval.methods.pop_back();
  EXPECT_NE(config_hash(a), config_hash(b));
}

TEST(Config, RealsRoundTripExactly) {
  for (const double v : {1e-3, 5e-4, 0.1, 1.0 / 3.0, -30.0, 6.02214076e23, 0.0}) {
    double back = 0.0;
    detail::parse_number(format_real(v), back, "v");
    EXPECT_EQ(back, v) << format_real(v);
  }
  EXPECT_EQ(format_real(0.001), "0.001");
}

TEST(Config, MethodTags) {
  EXPECT_EQ(parse_method_tag("fed_lora_r8", 4, 0).rank, 8u);
  EXPECT_EQ(parse_method_tag("l_lora", 2, 0).rank, 2u);
  EXPECT_EQ(method_tag(parse_method_tag("l_lora", 2, 0)), "l_lora_r2");
  EXPECT_EQ(parse_method_tag("fedavg", 4, 0).method, Method::FedAvg);
  EXPECT_THROW(parse_method_tag("fedavg_r4", 4, 0), std::invalid_argument);
  EXPECT_THROW(parse_method_tag("fed_lora_r0", 4, 0), std::invalid_argument);
  EXPECT_THROW(parse_method_tag("fed_lora_r300", 4, 0), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Small pure helpers

TEST(Report, ParetoDominance) {
  std::vector<TradeoffRow> rows{{"a", 10, 1.0}, {"b", 20, 0.5}, {"c", 20, 3.0}, {"d", 30, 3.0}, {"e", 10, 1.0}};
  mark_dominated(rows);
  EXPECT_FALSE(rows[0].dominated);
  EXPECT_TRUE(rows[1].dominated);
  EXPECT_FALSE(rows[2].dominated);
  EXPECT_TRUE(rows[3].dominated);
  EXPECT_FALSE(rows[4].dominated);  // ties with a
}

TEST(Eval, ImprovementPercent) {
  EXPECT_DOUBLE_EQ(improvement_pct(0.2, 0.15), 25.0);
  EXPECT_DOUBLE_EQ(improvement_pct(0.2, 0.3), -50.0);
  EXPECT_EQ(improvement_pct(0.0, 0.0), 0.0);
  EXPECT_EQ(improvement_pct(0.0, 0.1), 0.0);
}

TEST(Csv, RaggedRowsRejected) {
  const auto dir = scratch("csv");
  write_text_file(dir / "a.csv", "x,y\n1,2\n3\n");
  EXPECT_THROW(read_csv(dir / "a.csv"), std::runtime_error);
  write_text_file(dir / "b.csv", "x,y\n1,2\n\n3,4\n");
  EXPECT_EQ(read_csv(dir / "b.csv").size(), 2u);
}

TEST(Pretrain, StreamMatchesMaterialisedDataset) {
  auto c = tiny_config(scratch("stream"));
  c.pretrain.samples = 7;
  const PretrainStream s(c);
  const auto data = make_dataset(PretrainStream::profile(), 7, SinrMode::uniform(), c.ofdm,
                                 stream_seed(c, SeedStream::PretrainData), c.interference);
  ASSERT_EQ(s.size(), data.size());
  std::size_t emi = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto x = s.sample(i);
    EXPECT_EQ(x.kind, data[i].kind);
    EXPECT_EQ(x.mixture, data[i].mixture);
    EXPECT_EQ(x.bits, data[i].bits);
    emi += x.kind == InterferenceKind::EMIlike;
  }
  EXPECT_EQ(emi, 0u);
}

TEST(Pretrain, LossDropsOnLongerRun) {
  auto c = tiny_config(scratch("pretrain"));
  c.model = {3, 8, 3, 5};
  c.ofdm.n_symbols = 4;
  c.pretrain = {150, 64, 8, 2e-3, 16};
  const auto out = cmd_pretrain(c);
  EXPECT_LT(out.final_mse, out.initial_mse);
  EXPECT_EQ(out.losses.size(), 150u);
  EXPECT_EQ(out.emi_samples_seen, 0u);
  const auto curve = read_csv(fs::path(c.out_dir) / "pretrain_loss.csv");
  EXPECT_EQ(curve.size(), 150u);
  const auto summary = read_csv(fs::path(c.out_dir) / "pretrain_summary.csv");
  ASSERT_EQ(summary.size(), 1u);
  EXPECT_EQ(cell_real(summary[0], "final_mse"), out.final_mse);
}

// ---------------------------------------------------------------------------
// End-to-end on the tiny pipeline

TEST(Pipeline, AdapterArtifactsHaveTheExchangedSize) {
  const auto& p = shared_pipeline();
  const std::map<std::string, std::size_t> expect{
      {"fed_lora_r2", 7200}, {"fed_lora_r4", 14400}, {"fed_lora_r8", 28800}, {"l_lora_r4", 14400}, {"l_film", 1440}, {"fed_film", 1440}};
  for (const auto& [tag, n] : expect) {
    for (std::size_t k = 1; k <= kNodeCount; ++k) {
      const auto path = method_dir(p.cfg, tag) / ("node" + std::to_string(k) + ".flad");
      ASSERT_TRUE(fs::exists(path)) << path;
      EXPECT_EQ(fs::file_size(path), kAdapterHeaderBytes + 4 * n) << path;
      EXPECT_EQ(load_adapter(path.string()).values.size(), n);
    }
  }
  for (const std::string tag : {"fed_lora_r2", "fed_lora_r4", "fed_lora_r8", "fed_film"})
    EXPECT_TRUE(fs::exists(method_dir(p.cfg, tag) / "global.flad")) << tag;
  for (const std::string tag : {"fedavg", "full_ft"})
    for (std::size_t k = 1; k <= kNodeCount; ++k)
      EXPECT_EQ(load(((method_dir(p.cfg, tag) / ("node" + std::to_string(k) + ".flrf")).string())).param_count(), 281954u);
}

TEST(Pipeline, BackboneMethodWritesNoArtifactsAndNoTraffic) {
  const auto& p = shared_pipeline();
  const auto dir = method_dir(p.cfg, "backbone");
  for (const auto& f : testing::list_files(dir)) EXPECT_EQ(f.find("node"), std::string::npos) << f;
  EXPECT_TRUE(read_csv(dir / "round_log.csv").empty());
  EXPECT_EQ(p.adapted.at("backbone").ledger.total_bytes(), 0u);
  for (const auto& tag : {"l_film", "l_lora_r4", "full_ft"}) {
    EXPECT_EQ(p.adapted.at(tag).ledger.total_bytes(), 0u) << tag;
    EXPECT_TRUE(read_csv(method_dir(p.cfg, tag) / "round_log.csv").empty()) << tag;
  }
}

TEST(Pipeline, RoundLogCarriesPerRoundParameterCounts) {
  const auto& p = shared_pipeline();
  const std::map<std::string, std::size_t> expect{
      {"fedavg", 281954}, {"fed_film", 1440}, {"fed_lora_r2", 7200}, {"fed_lora_r4", 14400}, {"fed_lora_r8", 28800}};
  for (const auto& [tag, n] : expect) {
    const auto rows = read_csv(method_dir(p.cfg, tag) / "round_log.csv");
    ASSERT_EQ(rows.size(), p.cfg.adapt.rounds * kNodeCount) << tag;
    for (const auto& r : rows) {
      EXPECT_EQ(r.at("params_up"), std::to_string(n));
      EXPECT_EQ(r.at("params_down"), std::to_string(n));
      EXPECT_EQ(r.at("method"), tag);
    }
  }
}

TEST(Pipeline, AdapterMethodsLeaveTheBackboneUntouched) {
  const auto& p = shared_pipeline();
  for (const auto& [tag, out] : p.adapted) {
    if (out.spec.full()) continue;
    for (const auto& m : out.node_models) {
      const auto got = m.backbone_parameters();
      const auto ref = p.backbone.backbone_parameters();
      ASSERT_EQ(got.size(), ref.size());
      for (std::size_t i = 0; i < got.size(); ++i) EXPECT_EQ(got[i]->values, ref[i]->values) << tag << " " << ref[i]->name;
    }
  }
}

TEST(Pipeline, EvalTablesAreComplete) {
  const auto& p = shared_pipeline();
  const auto dir = eval_dir(p.cfg);
  const std::size_t methods = p.cfg.eval.methods.size() + 1;
  const auto local = read_csv(dir / "ber_local.csv");
  EXPECT_EQ(local.size(), kNodeCount * methods * p.cfg.eval.sinr_levels.size());
  const auto global = read_csv(dir / "ber_global_by_type.csv");
  EXPECT_EQ(global.size(), kNodeCount * methods * 3);
  const auto summary = read_csv(dir / "summary.csv");
  EXPECT_EQ(summary.size(), (kNodeCount + 1) * methods);
  std::set<std::string> seen;
  for (const auto& r : local) {
    seen.insert(r.at("method"));
    const double b = cell_real(r, "ber");
    EXPECT_GE(b, 0.0);
    EXPECT_LE(b, 1.0);
  }
  EXPECT_TRUE(seen.count("passthrough"));
  for (const auto& r : summary)
    if (r.at("method") == "backbone") EXPECT_EQ(cell_real(r, "improvement_pct"), 0.0);
  for (const auto& m : p.cfg.eval.methods) {
    double sum = 0.0;
    for (std::size_t k = 1; k <= kNodeCount; ++k) sum += p.eval.find(std::to_string(k), m)->avg_ber;
    EXPECT_NEAR(p.eval.find("avg", m)->avg_ber, sum / kNodeCount, 1e-15) << m;
  }
  // The global test set is shared, so a method that does not depend on the
  // node scores the same everywhere.
  for (const auto& name : {"passthrough", "backbone"})
    for (std::size_t k = 2; k <= kNodeCount; ++k)
      EXPECT_EQ(p.eval.find(std::to_string(k), name)->global_avg_ber, p.eval.find("1", name)->global_avg_ber);
}

TEST(Pipeline, ReportTradeoffCoordinatesAndDominance) {
  const auto& p = shared_pipeline();
  std::vector<std::size_t> xs;
  for (const auto& r : p.report.tradeoff) xs.push_back(r.params_per_round);
  EXPECT_EQ(xs, (std::vector<std::size_t>{1440, 7200, 14400, 28800, 281954}));
  for (const auto& a : p.report.tradeoff) {
    bool dominated = false;
    for (const auto& b : p.report.tradeoff)
      dominated |= b.params_per_round <= a.params_per_round && b.avg_improvement_pct >= a.avg_improvement_pct &&
                   (b.params_per_round < a.params_per_round || b.avg_improvement_pct > a.avg_improvement_pct);
    EXPECT_EQ(a.dominated, dominated) << a.method;
  }
  ASSERT_TRUE(p.report.scarcity_gap.has_value());
  EXPECT_DOUBLE_EQ(*p.report.scarcity_gap,
                   p.eval.find("5", "fed_lora_r4")->improvement_pct - p.eval.find("5", "l_lora_r4")->improvement_pct);
  const auto md = read_text_file(regime_dir(p.cfg) / "report.md");
  EXPECT_NE(md.find("seed: 5"), std::string::npos);
  EXPECT_NE(md.find(config_hash(p.cfg)), std::string::npos);
  EXPECT_NE(md.find("Validation MSE per round: fed_lora_r4"), std::string::npos);
  EXPECT_EQ(read_csv(regime_dir(p.cfg) / "tradeoff.csv").size(), 5u);
}

TEST(Pipeline, ResolvedConfigSitsNextToEveryOutput) {
  const auto& p = shared_pipeline();
  EXPECT_EQ(read_text_file(fs::path(p.cfg.out_dir) / "pretrain.config.ini"), config_text(p.cfg));
  EXPECT_EQ(read_text_file(eval_dir(p.cfg) / "config.ini"), config_text(p.cfg));
  for (const auto& m : p.cfg.eval.methods) {
    auto c = p.cfg;
    c.adapt.method = m;
    EXPECT_EQ(read_text_file(method_dir(p.cfg, m) / "config.ini"), config_text(c)) << m;
  }
}

TEST(Pipeline, RerunIsByteIdentical) {
  const auto base = scratch("rerun");
  auto c = tiny_config(base / "run");
  c.model = {4, 6, 3, 5};
  c.regime = Regime::Imbalanced;
  c.samples_per_node = 30;
  run_pipeline(c);
  fs::rename(base / "run", base / "first");
  run_pipeline(c);
  EXPECT_TRUE(testing::tree_differences(base / "first", base / "run").empty());
  EXPECT_GT(testing::list_files(base / "run").size(), 50u);
}

TEST(Pipeline, ParallelNodesMatchSequential) {
  const auto base = scratch("parallel");
  auto c = tiny_config(base / "run");
  c.model = {4, 6, 3, 5};
  c.eval.methods = {"backbone", "fed_lora_r4", "l_film"};
  run_pipeline(c);
  fs::rename(base / "run", base / "seq");
  c.adapt.parallel = 3;
  run_pipeline(c);
  std::vector<std::string> diff;
  for (const auto& f : testing::tree_differences(base / "seq", base / "run"))
    if (f.find("config") == std::string::npos && f.find("report.md") == std::string::npos) diff.push_back(f);
  EXPECT_TRUE(diff.empty()) << (diff.empty() ? "" : diff.front());
}

// ---------------------------------------------------------------------------
// Error paths

TEST(Errors, AdaptWithoutBackbone) {
  const auto c = tiny_config(scratch("no_backbone"));
  try {
    cmd_adapt(c);
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("backbone.flrf"), std::string::npos);
  }
}

TEST(Errors, EvalListsEveryMissingArtifact) {
  auto c = tiny_config(scratch("missing"));
  c.model = {2, 4, 3, 5};
  c.eval.methods = {"backbone", "fed_lora_r4", "fedavg"};
  cmd_pretrain(c);
  auto a = c;
  a.adapt.method = "fed_lora_r4";
  cmd_adapt(a);
  fs::remove(method_dir(c, "fed_lora_r4") / "node2.flad");
  try {
    cmd_eval(c);
    FAIL();
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("fed_lora_r4/node2.flad"), std::string::npos);
    for (int k = 1; k <= 5; ++k) EXPECT_NE(msg.find("fedavg/node" + std::to_string(k) + ".flrf"), std::string::npos);
    EXPECT_EQ(msg.find("fed_lora_r4/node1.flad"), std::string::npos);
  }
  EXPECT_FALSE(fs::exists(eval_dir(c) / "summary.csv"));
  try {
    cmd_report(c);
    FAIL();
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("summary.csv"), std::string::npos);
    EXPECT_NE(msg.find("fedavg/round_log.csv"), std::string::npos);
    EXPECT_EQ(msg.find("fed_lora_r4/round_log.csv"), std::string::npos);
  }
}

TEST(Errors, EvalRejectsAdapterOfTheWrongMethod) {
  auto c = tiny_config(scratch("mismatch"));
  c.model = {2, 4, 3, 5};
  c.eval.methods = {"backbone", "fed_lora_r4"};
  cmd_pretrain(c);
  for (const std::string m : {"fed_lora_r2", "fed_lora_r4"}) {
    auto a = c;
    a.adapt.method = m;
    cmd_adapt(a);
  }
  fs::copy_file(method_dir(c, "fed_lora_r2") / "node3.flad", method_dir(c, "fed_lora_r4") / "node3.flad",
                fs::copy_options::overwrite_existing);
  try {
    cmd_eval(c);
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("does not match"), std::string::npos);
  }
  // A FiLM vector where LoRA is expected.
  auto f = c;
  f.adapt.method = "l_film";
  cmd_adapt(f);
  fs::copy_file(method_dir(c, "l_film") / "node3.flad", method_dir(c, "fed_lora_r4") / "node3.flad",
                fs::copy_options::overwrite_existing);
  EXPECT_THROW(cmd_eval(c), std::runtime_error);
}

TEST(Errors, BackboneOfAnotherShapeIsRejected) {
  auto c = tiny_config(scratch("shape"));
  c.model = {2, 4, 3, 5};
  cmd_pretrain(c);
  c.model.channels = 6;
  EXPECT_THROW(cmd_adapt(c), std::runtime_error);
}

TEST(Data, ExportWritesReadableMixtures) {
  auto c = tiny_config(scratch("data"));
  c.pretrain.samples = 5;
  cmd_data(c);
  const auto dir = fs::path(c.out_dir) / "data";
  EXPECT_EQ(read_mixture_file((dir / "pretrain.rfmx").string()).size(), 5u);
  std::size_t total = 0;
  for (std::size_t k = 1; k <= kNodeCount; ++k)
    for (const std::string part : {"_train", "_val"})
      total += read_mixture_file((dir / ("balanced_node" + std::to_string(k) + part + ".rfmx")).string()).size();
  EXPECT_EQ(total, kNodeCount * c.samples_per_node);
}

}  // namespace
}  // namespace fedrf
