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
#pragma once

/*
 Experiment runner behind the command-line tool.

 Configuration is flat `key = value` text, one setting per line, `#` starts a
 comment. Unknown keys are errors. Relative paths are resolved against the
 directory of the config file. `render_config` prints every setting,
 defaults included, in a fixed order; that text is embedded in each report
 and parses back to the same configuration.
*/

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "dropscale/data.hpp"
#include "dropscale/inference.hpp"
#include "dropscale/network.hpp"
#include "dropscale/scaleopt.hpp"
#include "dropscale/serialize.hpp"
#include "dropscale/trainer.hpp"

namespace dropscale {

enum class DatasetKind { synth, idx, csv };

struct RunConfig {
  DatasetKind dataset = DatasetKind::synth;
  std::filesystem::path train_images, train_labels, test_images, test_labels;
  std::filesystem::path train_csv, test_csv;
  std::size_t subset = 10000;    // leading training-file examples used; 0 = all
  std::size_t test_subset = 0;   // 0 = all
  std::size_t classes = 10;
  std::size_t synth_dim = 20;
  std::size_t synth_per_class = 100;
  std::size_t synth_test_per_class = 50;
  double synth_spread = 0.15;

  std::vector<std::size_t> hidden{256};
  double keep_prob = 0.5;
  DropoutConvention convention = DropoutConvention::classical;

  TrainConfig train;
  std::size_t mc_samples = 128;
  double scale_lambda = kDefaultPenaltyWeight;
  ScaleOptConfig scaleopt;

  std::size_t repeat = 8;
  std::uint64_t seed = 0;
  double val_fraction = 0.2;
  std::filesystem::path out = "out";

  // Apply one `key = value` setting. `base` resolves relative paths.
  void set(std::string_view key, std::string_view value,
           const std::filesystem::path& base = {});
  void validate() const;
};

RunConfig parse_config(std::string_view text, const std::string& source = "<config>",
                       const std::filesystem::path& base = {});
RunConfig load_config(const std::filesystem::path& path);
std::string render_config(const RunConfig& cfg);

struct LoadedData {
  Dataset pool;  // split into train/validation
  Dataset test;
};

LoadedData load_data(const RunConfig& cfg);
NetworkSpec network_spec(const RunConfig& cfg, std::size_t input_dim);
DropoutGate network_gate(const RunConfig& cfg, const NetworkSpec& spec);

// Split seed, training seed, MC seed and scale-optimization seed of repeat i.
std::uint64_t split_seed(const RunConfig& cfg, std::size_t repeat_index);

struct MethodErrors {
  InferenceMode method;
  double val_error = 0.0;   // fraction
  double test_error = 0.0;
};

/// Train on split `repeat_index` and write model.txt and train_log.csv into `dir`.
ModelFile cmd_train(const RunConfig& cfg, const LoadedData& data, std::size_t repeat_index,
                    const std::filesystem::path& dir);

/// Fit s* for `model` on split `repeat_index`; writes scale.txt,
/// scale_trace.csv and scale_histogram.csv into `dir`.
ScaleOptResult cmd_optimize_scale(const RunConfig& cfg, const LoadedData& data,
                                  const ModelFile& model, std::size_t repeat_index,
                                  const std::filesystem::path& dir);

/// Error rates of `methods` on the validation part of split `repeat_index`
/// and on the test set. `scale` is required for non_uniform.
std::vector<MethodErrors> cmd_eval(const RunConfig& cfg, const LoadedData& data,
                                   const ModelFile& model, const Vector* scale,
                                   const std::vector<InferenceMode>& methods,
                                   std::size_t repeat_index);

std::string eval_csv(const std::vector<MethodErrors>& rows);
std::string eval_table(const std::vector<MethodErrors>& rows);

struct SplitRecord {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  bool complete = false;
  std::string failure;  // category: message, when incomplete
  std::size_t train_epoch = 0;
  std::size_t scale_epoch = 0;
  std::vector<MethodErrors> errors;  // uniform, mc_arithmetic, non_uniform
};

struct Aggregate {
  InferenceMode method;
  std::size_t n = 0;
  double val_mean = 0.0, val_sd = 0.0, test_mean = 0.0, test_sd = 0.0;  // percent
};

struct ExperimentReport {
  std::string config_text;
  std::vector<SplitRecord> splits;
  std::vector<Aggregate> aggregates;
};

/// Methods compared in every split, in report order.
const std::vector<InferenceMode>& experiment_methods();

/// Mean and sample standard deviation (n − 1) over complete splits, in percent.
std::vector<Aggregate> aggregate(const std::vector<SplitRecord>& splits);

/*
 Runs repeat × (split, train, optimize scale, evaluate) and writes into
 cfg.out: config.resolved, per_split.csv, aggregate.csv, report.txt and one
 directory per split with model, scale, logs and histogram. A failing split
 is recorded and the others still run.
*/
ExperimentReport cmd_experiment(const RunConfig& cfg, std::ostream* progress = nullptr);

std::string per_split_csv(const ExperimentReport& report);
std::string aggregate_csv(const ExperimentReport& report);
std::string report_text(const ExperimentReport& report);

/*
 Approximation gaps on seeded random networks small enough to enumerate:
 each row is one (instance family, method) pair with the largest absolute
 deviation from the exact prediction over `trials` instances.
*/
struct OracleCheckRow {
  std::string instance;
  std::string method;
  std::size_t width = 0;
  double max_deviation = 0.0;
};

std::vector<OracleCheckRow> cmd_oracle_check(const RunConfig& cfg, std::size_t width,
                                             std::size_t trials);
std::string oracle_check_csv(const std::vector<OracleCheckRow>& rows);

}  // namespace dropscale
