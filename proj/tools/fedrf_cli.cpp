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

// fedrf: pretrain / adapt / eval / report / data.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "fedrf/experiment.hpp"

namespace {

struct Overrides {
  std::string config;
  std::optional<std::string> method;
  std::optional<std::size_t> rank;
  std::optional<std::string> regime;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> parallel;
  bool full_scale = false;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "INI file overlaid on the preset")->check(CLI::ExistingFile);
  cmd->add_option("--method", o.method, "method tag, e.g. fed_lora_r4 (adapt also accepts 'all')");
  cmd->add_option("--rank", o.rank, "LoRA rank")->check(CLI::Range(1, 255));
  cmd->add_option("--regime", o.regime, "balanced | imbalanced");
  cmd->add_option("--seed", o.seed, "master seed");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--parallel", o.parallel, "concurrent node workers")->check(CLI::PositiveNumber);
  cmd->add_flag("--full-scale", o.full_scale, "full-scale sizes instead of the desk preset");
}

/// preset < config file < flags
fedrf::ExperimentConfig resolve(const Overrides& o, bool method_is_filter) {
  auto cfg = o.full_scale ? fedrf::ExperimentConfig::full_scale() : fedrf::ExperimentConfig{};
  if (!o.config.empty()) cfg = fedrf::load_config(o.config, cfg);
  if (o.rank) cfg.adapt.rank = *o.rank;
  if (o.regime) cfg.regime = fedrf::parse_regime(*o.regime);
  if (o.seed) cfg.seed = *o.seed;
  if (o.out) cfg.out_dir = *o.out;
  if (o.parallel) cfg.adapt.parallel = *o.parallel;
  if (o.method && *o.method != "all") {
    if (method_is_filter)
      cfg.eval.methods = {"backbone", *o.method};
    else
      cfg.adapt.method = *o.method;
  }
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated adapter fine-tuning of a WaveNet RF source separator"};
  app.require_subcommand(1);
  Overrides o;
  auto* pretrain = app.add_subcommand("pretrain", "train the backbone on CS2like+CS3like mixtures");
  auto* adapt = app.add_subcommand("adapt", "adapt the backbone on the five nodes");
  auto* eval = app.add_subcommand("eval", "BER of every method on local and global test sets");
  auto* report = app.add_subcommand("report", "tables, trade-off frontier and convergence from eval output");
  auto* data = app.add_subcommand("data", "export the generated datasets as RFMX files");
  for (auto* cmd : {pretrain, adapt, eval, report, data}) add_common(cmd, o);
  CLI11_PARSE(app, argc, argv);

  try {
    if (pretrain->parsed()) {
      fedrf::cmd_pretrain(resolve(o, false), &std::cerr);
    } else if (adapt->parsed()) {
      auto cfg = resolve(o, false);
      if (o.method && *o.method == "all") {
        const auto nodes = fedrf::node_datasets(cfg);
        for (const auto& m : cfg.eval.methods) {
          cfg.adapt.method = m;
          fedrf::cmd_adapt(cfg, &std::cerr, &nodes);
        }
      } else {
        fedrf::cmd_adapt(cfg, &std::cerr);
      }
    } else if (eval->parsed()) {
      fedrf::cmd_eval(resolve(o, true), &std::cerr);
    } else if (report->parsed()) {
      const auto r = fedrf::cmd_report(resolve(o, true), &std::cerr);
      std::cout << r.markdown;
    } else if (data->parsed()) {
      fedrf::cmd_data(resolve(o, false), &std::cerr);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
