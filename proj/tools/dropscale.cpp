/* Copyright 2026 The dropscale Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License. */
// dropscale command-line tool.
//
//   dropscale train          --config run.conf [--seed N] [--out DIR]
//   dropscale optimize-scale --config run.conf --model DIR/model.txt
//   dropscale eval           --config run.conf --model M [--scale S] --methods uniform,mc_arithmetic
//   dropscale experiment     --config run.conf
//   dropscale oracle-check   [--width 10] [--trials 20]
//
// Exit status: 0 ok, 1 unexpected, 2 config, 3 data, 4 contract, 5 numeric, 6 io.

#include <exception>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dropscale/errors.hpp"
#include "dropscale/harness.hpp"
#include "dropscale/serialize.hpp"

namespace {

using namespace dropscale;

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> overrides;
  std::size_t split = 0;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config, "key = value run configuration");
  cmd->add_option("--seed", o.seed, "base seed (overrides the config)");
  cmd->add_option("--out", o.out, "output directory (overrides the config)");
  cmd->add_option("--set", o.overrides, "extra key=value setting; repeatable");
}

RunConfig resolve_config(const CommonOptions& o) {
  RunConfig cfg = o.config.empty() ? RunConfig{} : load_config(o.config);
  for (const auto& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1), std::filesystem::current_path());
  }
  if (o.seed) cfg.seed = *o.seed;
  if (!o.out.empty()) cfg.out = o.out;
  cfg.validate();
  return cfg;
}

std::vector<InferenceMode> parse_methods(const std::string& list) {
  std::vector<InferenceMode> out;
  std::stringstream ss(list);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) out.push_back(parse_inference_mode(item));
  }
  if (out.empty()) throw ConfigError("--methods: no methods given");
  return out;
}

int exit_code(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::config: return 2;
    case ErrorCategory::data: return 3;
    case ErrorCategory::contract: return 4;
    case ErrorCategory::numeric: return 5;
    case ErrorCategory::io: return 6;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dropout inference: weight scaling, Monte Carlo and learned scale vectors"};
  app.require_subcommand(1);

  CommonOptions train_o, scale_o, eval_o, exp_o, oracle_o;
  std::string model_path, scale_model_path, scale_path, methods = "uniform,mc_arithmetic";
  std::optional<std::size_t> mc_samples;
  std::size_t oracle_width = 10, oracle_trials = 20;
  bool quiet = false;

  auto* train_cmd = app.add_subcommand("train", "train a network on one split");
  add_common(train_cmd, train_o);
  train_cmd->add_option("--split", train_o.split, "split index (seed + index)");

  auto* scale_cmd = app.add_subcommand("optimize-scale", "fit a non-uniform scale vector");
  add_common(scale_cmd, scale_o);
  scale_cmd->add_option("--model", scale_model_path, "model file")->required();
  scale_cmd->add_option("--split", scale_o.split, "split index the model was trained on");

  auto* eval_cmd = app.add_subcommand("eval", "error rates per inference method");
  add_common(eval_cmd, eval_o);
  eval_cmd->add_option("--model", model_path, "model file")->required();
  eval_cmd->add_option("--scale", scale_path, "scale file, needed for non_uniform");
  eval_cmd->add_option("--methods", methods, "comma-separated inference methods");
  eval_cmd->add_option("--mc-samples", mc_samples, "Monte Carlo sample count");
  eval_cmd->add_option("--split", eval_o.split, "split index for the validation part");

  auto* exp_cmd = app.add_subcommand("experiment", "repeat split/train/optimize/eval");
  add_common(exp_cmd, exp_o);
  exp_cmd->add_option("--mc-samples", mc_samples, "Monte Carlo sample count");
  exp_cmd->add_flag("--quiet", quiet, "no progress lines");

  auto* oracle_cmd = app.add_subcommand("oracle-check", "approximation gaps vs enumeration");
  add_common(oracle_cmd, oracle_o);
  oracle_cmd->add_option("--width", oracle_width, "gated units (at most 22)");
  oracle_cmd->add_option("--trials", oracle_trials, "random instances per family");
  oracle_cmd->add_option("--mc-samples", mc_samples, "Monte Carlo sample count");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed()) {
      const RunConfig cfg = resolve_config(train_o);
      const LoadedData data = load_data(cfg);
      const ModelFile model = cmd_train(cfg, data, train_o.split, cfg.out);
      std::cout << "model: " << (cfg.out / "model.txt").string() << "\n"
                << "best epoch: " << model.checkpoint.epoch << "\n"
                << "val error (uniform scaling): " << 100.0 * model.checkpoint.val_error
                << "%\n";
    } else if (scale_cmd->parsed()) {
      const RunConfig cfg = resolve_config(scale_o);
      const LoadedData data = load_data(cfg);
      const ModelFile model = load_model(scale_model_path);
      const ScaleOptResult r = cmd_optimize_scale(cfg, data, model, scale_o.split, cfg.out);
      std::cout << "scale: " << (cfg.out / "scale.txt").string() << "\n"
                << "selected epoch: " << r.selected_epoch << "\n"
                << "val error: uniform " << 100.0 * r.uniform_val_error << "%, non-uniform "
                << 100.0 * r.val_error << "%\n";
    } else if (eval_cmd->parsed()) {
      RunConfig cfg = resolve_config(eval_o);
      if (mc_samples) cfg.mc_samples = *mc_samples;
      cfg.validate();
      const LoadedData data = load_data(cfg);
      const ModelFile model = load_model(model_path);
      std::optional<ScaleFile> scale;
      if (!scale_path.empty()) {
        scale = load_scale(scale_path, model.gate, model.gate.width(model.checkpoint.params.spec));
      }
      const auto rows = cmd_eval(cfg, data, model, scale ? &scale->scale : nullptr,
                                 parse_methods(methods), eval_o.split);
      write_text_file(cfg.out / "eval.csv", eval_csv(rows));
      std::cout << eval_table(rows);
    } else if (exp_cmd->parsed()) {
      RunConfig cfg = resolve_config(exp_o);
      if (mc_samples) cfg.mc_samples = *mc_samples;
      const ExperimentReport report = cmd_experiment(cfg, quiet ? nullptr : &std::cerr);
      std::cout << report_text(report);
      for (const auto& s : report.splits) {
        if (!s.complete) return 1;
      }
    } else if (oracle_cmd->parsed()) {
      RunConfig cfg = resolve_config(oracle_o);
      if (mc_samples) cfg.mc_samples = *mc_samples;
      std::cout << oracle_check_csv(cmd_oracle_check(cfg, oracle_width, oracle_trials));
    }
  } catch (const Error& e) {
    std::cerr << "dropscale: " << to_string(e.category()) << " error: " << e.what() << "\n";
    return exit_code(e.category());
  } catch (const std::exception& e) {
    std::cerr << "dropscale: error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
