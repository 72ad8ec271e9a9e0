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
#include "dropscale/harness.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <functional>
#include <ostream>
#include <sstream>

#include "dropscale/constraints.hpp"
#include "dropscale/errors.hpp"
#include "dropscale/oracle.hpp"

namespace dropscale {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::string key_error(std::string_view key, std::string_view value, std::string_view expected) {
  return std::string(key) + ": bad value '" + std::string(value) + "' (expected " +
         std::string(expected) + ")";
}

std::uint64_t parse_u64(std::string_view key, std::string_view value) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc{} || ptr != value.data() + value.size()) {
    throw ConfigError(key_error(key, value, "a non-negative integer"));
  }
  return v;
}

std::size_t parse_size(std::string_view key, std::string_view value) {
  return static_cast<std::size_t>(parse_u64(key, value));
}

double parse_double(std::string_view key, std::string_view value) {
  const std::string text(value);
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (text.empty() || end != text.c_str() + text.size() || !std::isfinite(v)) {
    throw ConfigError(key_error(key, value, "a finite number"));
  }
  return v;
}

std::vector<std::size_t> parse_widths(std::string_view key, std::string_view value) {
  std::vector<std::size_t> out;
  if (value.empty() || value == "none") return out;
  std::size_t start = 0;
  while (start <= value.size()) {
    const auto comma = value.find(',', start);
    const auto item = trim(value.substr(start, comma == std::string_view::npos
                                                   ? std::string_view::npos
                                                   : comma - start));
    const std::size_t w = parse_size(key, item);
    if (w == 0) throw ConfigError(key_error(key, value, "positive layer widths"));
    out.push_back(w);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::filesystem::path resolve(const std::filesystem::path& base, std::string_view value) {
  std::filesystem::path p{std::string(value)};
  if (value.empty() || p.is_absolute() || base.empty()) return p;
  return (base / p).lexically_normal();
}

// Shortest text that reads back to the same double.
std::string fmt_double(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string widths_text(const std::vector<std::size_t>& widths) {
  if (widths.empty()) return "none";
  std::string out;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    if (i != 0) out += ',';
    out += std::to_string(widths[i]);
  }
  return out;
}

std::string_view dataset_name(DatasetKind k) {
  switch (k) {
    case DatasetKind::synth: return "synth";
    case DatasetKind::idx: return "idx";
    case DatasetKind::csv: return "csv";
  }
  return "?";
}

using Setter = std::function<void(RunConfig&, std::string_view, const std::filesystem::path&)>;
using Getter = std::function<std::string(const RunConfig&)>;

struct KeyEntry {
  std::string_view key;
  Setter set;
  Getter get;
};

#define SIZE_KEY(name, field)                                                          \
  KeyEntry{name, [](RunConfig& c, std::string_view v, const auto&) {                   \
             c.field = parse_size(name, v);                                            \
           },                                                                          \
           [](const RunConfig& c) { return std::to_string(c.field); }}
#define DOUBLE_KEY(name, field)                                                        \
  KeyEntry{name, [](RunConfig& c, std::string_view v, const auto&) {                   \
             c.field = parse_double(name, v);                                          \
           },                                                                          \
           [](const RunConfig& c) { return fmt_double(c.field); }}
#define PATH_KEY(name, field)                                                          \
  KeyEntry{name, [](RunConfig& c, std::string_view v, const std::filesystem::path& b) { \
             c.field = resolve(b, v);                                                  \
           },                                                                          \
           [](const RunConfig& c) { return c.field.string(); }}

const std::vector<KeyEntry>& key_table() {
  static const std::vector<KeyEntry> table = {
      KeyEntry{"dataset",
               [](RunConfig& c, std::string_view v, const auto&) {
                 if (v == "synth") c.dataset = DatasetKind::synth;
                 else if (v == "idx") c.dataset = DatasetKind::idx;
                 else if (v == "csv") c.dataset = DatasetKind::csv;
                 else throw ConfigError(key_error("dataset", v, "synth, idx or csv"));
               },
               [](const RunConfig& c) { return std::string(dataset_name(c.dataset)); }},
      PATH_KEY("train_images", train_images),
      PATH_KEY("train_labels", train_labels),
      PATH_KEY("test_images", test_images),
      PATH_KEY("test_labels", test_labels),
      PATH_KEY("train_csv", train_csv),
      PATH_KEY("test_csv", test_csv),
      SIZE_KEY("subset", subset),
      SIZE_KEY("test_subset", test_subset),
      SIZE_KEY("classes", classes),
      SIZE_KEY("synth_dim", synth_dim),
      SIZE_KEY("synth_per_class", synth_per_class),
      SIZE_KEY("synth_test_per_class", synth_test_per_class),
      DOUBLE_KEY("synth_spread", synth_spread),
      KeyEntry{"hidden",
               [](RunConfig& c, std::string_view v, const auto&) {
                 c.hidden = parse_widths("hidden", v);
               },
               [](const RunConfig& c) { return widths_text(c.hidden); }},
      DOUBLE_KEY("keep_prob", keep_prob),
      KeyEntry{"convention",
               [](RunConfig& c, std::string_view v, const auto&) {
                 c.convention = parse_convention(v);
               },
               [](const RunConfig& c) { return std::string(to_string(c.convention)); }},
      KeyEntry{"optimizer",
               [](RunConfig& c, std::string_view v, const auto&) {
                 c.train.optimizer = parse_optimizer(v);
               },
               [](const RunConfig& c) { return std::string(to_string(c.train.optimizer)); }},
      DOUBLE_KEY("learning_rate", train.learning_rate),
      DOUBLE_KEY("momentum", train.momentum),
      DOUBLE_KEY("adam_beta1", train.adam_beta1),
      DOUBLE_KEY("adam_beta2", train.adam_beta2),
      DOUBLE_KEY("adam_eps", train.adam_eps),
      SIZE_KEY("batch_size", train.batch_size),
      SIZE_KEY("max_epochs", train.max_epochs),
      SIZE_KEY("patience", train.early_stop_patience),
      SIZE_KEY("mc_samples", mc_samples),
      DOUBLE_KEY("scale_lambda", scale_lambda),
      DOUBLE_KEY("scale_lr", scaleopt.adam.learning_rate),
      DOUBLE_KEY("scale_beta1", scaleopt.adam.beta1),
      DOUBLE_KEY("scale_beta2", scaleopt.adam.beta2),
      DOUBLE_KEY("scale_eps", scaleopt.adam.epsilon),
      SIZE_KEY("scale_epochs", scaleopt.max_iterations),
      SIZE_KEY("scale_batch_size", scaleopt.batch_size),
      KeyEntry{"scale_fit_on",
               [](RunConfig& c, std::string_view v, const auto&) {
                 if (v == "train") c.scaleopt.fit_on_validation = false;
                 else if (v == "validation") c.scaleopt.fit_on_validation = true;
                 else throw ConfigError(key_error("scale_fit_on", v, "train or validation"));
               },
               [](const RunConfig& c) {
                 return std::string(c.scaleopt.fit_on_validation ? "validation" : "train");
               }},
      SIZE_KEY("repeat", repeat),
      KeyEntry{"seed",
               [](RunConfig& c, std::string_view v, const auto&) { c.seed = parse_u64("seed", v); },
               [](const RunConfig& c) { return std::to_string(c.seed); }},
      DOUBLE_KEY("val_fraction", val_fraction),
      PATH_KEY("out", out),
  };
  return table;
}

#undef SIZE_KEY
#undef DOUBLE_KEY
#undef PATH_KEY

void require_file(std::string_view key, const std::filesystem::path& p) {
  if (p.empty()) throw ConfigError(std::string(key) + ": required for this dataset kind");
  if (!std::filesystem::exists(p)) {
    throw ConfigError(std::string(key) + ": no such file: " + p.string());
  }
}

std::string percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", 100.0 * fraction);
  return buf;
}

std::string fixed(double v, int digits) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::pair<Dataset, Dataset> split_for(const RunConfig& cfg, const LoadedData& data,
                                      std::size_t repeat_index) {
  return split(data.pool, SplitSpec{cfg.val_fraction, split_seed(cfg, repeat_index)});
}

std::string trace_csv(const std::vector<TraceRecord>& trace) {
  std::string out = "epoch,objective,penalty,val_error\n";
  for (const auto& r : trace) {
    char line[128];
    std::snprintf(line, sizeof line, "%zu,%.10g,%.10g,%.10g\n", r.epoch, r.objective, r.penalty,
                  r.val_error);
    out += line;
  }
  return out;
}

std::string histogram_csv(const Vector& s, const ConstraintSet& cs) {
  constexpr std::size_t kBins = 20;
  const auto counts = scale_histogram(s, cs, kBins);
  std::string out = "bin,lower,upper,count\n";
  for (std::size_t b = 0; b < kBins; ++b) {
    const double lo = cs.upper_bound * static_cast<double>(b) / kBins;
    const double hi = cs.upper_bound * static_cast<double>(b + 1) / kBins;
    char line[96];
    std::snprintf(line, sizeof line, "%zu,%.6g,%.6g,%zu\n", b, lo, hi, counts[b]);
    out += line;
  }
  return out;
}

}  // namespace

void RunConfig::set(std::string_view key, std::string_view value,
                    const std::filesystem::path& base) {
  for (const auto& entry : key_table()) {
    if (entry.key == key) {
      entry.set(*this, trim(value), base);
      return;
    }
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

void RunConfig::validate() const {
  if (!(keep_prob > 0.0 && keep_prob <= 1.0)) throw ConfigError("keep_prob: must be in (0, 1]");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw ConfigError("val_fraction: must be in (0, 1)");
  }
  if (classes < 2) throw ConfigError("classes: need at least 2");
  if (mc_samples == 0) throw ConfigError("mc_samples: must be at least 1");
  if (repeat == 0) throw ConfigError("repeat: must be at least 1");
  if (!(scale_lambda > 0.0)) throw ConfigError("scale_lambda: must be positive");
  if (dataset == DatasetKind::synth &&
      (synth_dim == 0 || synth_per_class == 0 || synth_test_per_class == 0)) {
    throw ConfigError("synth_*: sizes must be positive");
  }
  train.validate();
  scaleopt.validate();
}

RunConfig parse_config(std::string_view text, const std::string& source,
                       const std::filesystem::path& base) {
  RunConfig cfg;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line =
        text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = source + ":" + std::to_string(line_no) + ": ";
    if (eq == std::string_view::npos) throw ConfigError(where + "expected key = value");
    try {
      cfg.set(trim(line.substr(0, eq)), line.substr(eq + 1), base);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const IoError&) {
    throw ConfigError("cannot read config file " + path.string());
  }
  return parse_config(text, path.string(), path.parent_path());
}

std::string render_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& entry : key_table()) {
    out += std::string(entry.key) + " = " + entry.get(cfg) + "\n";
  }
  return out;
}

LoadedData load_data(const RunConfig& cfg) {
  LoadedData data;
  switch (cfg.dataset) {
    case DatasetKind::synth: {
      data.pool = synth_gaussians(cfg.classes, cfg.synth_dim, cfg.synth_per_class,
                                  cfg.synth_spread, cfg.seed);
      data.test = synth_gaussians(cfg.classes, cfg.synth_dim, cfg.synth_test_per_class,
                                  cfg.synth_spread, cfg.seed, mix64(cfg.seed ^ 0x7465737453ULL));
      break;
    }
    case DatasetKind::idx:
      require_file("train_images", cfg.train_images);
      require_file("train_labels", cfg.train_labels);
      require_file("test_images", cfg.test_images);
      require_file("test_labels", cfg.test_labels);
      data.pool = read_idx(cfg.train_images, cfg.train_labels, cfg.subset, cfg.classes);
      data.test = read_idx(cfg.test_images, cfg.test_labels, cfg.test_subset, cfg.classes);
      break;
    case DatasetKind::csv:
      require_file("train_csv", cfg.train_csv);
      require_file("test_csv", cfg.test_csv);
      data.pool = read_delimited(cfg.train_csv, cfg.classes).head(cfg.subset);
      data.test = read_delimited(cfg.test_csv, cfg.classes).head(cfg.test_subset);
      break;
  }
  if (data.pool.feature_dim() != data.test.feature_dim()) {
    throw DataError(DataErrorKind::malformed, "training and test features differ in length");
  }
  return data;
}

NetworkSpec network_spec(const RunConfig& cfg, std::size_t input_dim) {
  std::vector<std::size_t> widths{input_dim};
  widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
  widths.push_back(cfg.classes);
  return mlp_spec(widths);
}

DropoutGate network_gate(const RunConfig& cfg, const NetworkSpec& spec) {
  return output_gate(spec, cfg.keep_prob, cfg.convention);
}

std::uint64_t split_seed(const RunConfig& cfg, std::size_t repeat_index) {
  return cfg.seed + repeat_index;
}

ModelFile cmd_train(const RunConfig& cfg, const LoadedData& data, std::size_t repeat_index,
                    const std::filesystem::path& dir) {
  const auto [train_set, val_set] = split_for(cfg, data, repeat_index);
  const NetworkSpec spec = network_spec(cfg, data.pool.feature_dim());
  const DropoutGate gate = network_gate(cfg, spec);
  TrainConfig tc = cfg.train;
  tc.seed = split_seed(cfg, repeat_index);
  std::ostringstream log;
  ModelFile model{train(spec, gate, train_set, val_set, tc, &log), gate};
  write_text_file(dir / "train_log.csv", log.str());
  save_model(dir / "model.txt", model);
  return model;
}

ScaleOptResult cmd_optimize_scale(const RunConfig& cfg, const LoadedData& data,
                                  const ModelFile& model, std::size_t repeat_index,
                                  const std::filesystem::path& dir) {
  const auto [train_set, val_set] = split_for(cfg, data, repeat_index);
  const ConstraintSet cs = ConstraintSet::for_gate(model.gate);
  ScaleOptConfig ocfg = cfg.scaleopt;
  ocfg.seed = split_seed(cfg, repeat_index);
  ScaleOptResult result;
  try {
    result = optimize_scale(model.checkpoint.params, model.gate, cs,
                            PenaltyConfig{cfg.scale_lambda, {}}, ocfg, train_set, val_set);
  } catch (const ScaleOptDivergence& e) {
    write_text_file(dir / "scale_trace.csv", trace_csv(e.trace()));
    throw;
  }
  write_text_file(dir / "scale_trace.csv", trace_csv(result.trace));
  write_text_file(dir / "scale_histogram.csv", histogram_csv(result.scale, cs));
  save_scale(dir / "scale.txt", ScaleFile{cs, result.scale, result.selected_epoch,
                                          result.val_error});
  return result;
}

std::vector<MethodErrors> cmd_eval(const RunConfig& cfg, const LoadedData& data,
                                   const ModelFile& model, const Vector* scale,
                                   const std::vector<InferenceMode>& methods,
                                   std::size_t repeat_index) {
  const auto& params = model.checkpoint.params;
  const std::size_t width = model.gate.width(params.spec);
  InferenceOptions opts;
  opts.mc_samples = cfg.mc_samples;
  opts.mc_seed = split_seed(cfg, repeat_index);
  for (auto m : methods) {
    if (m == InferenceMode::non_uniform && scale == nullptr) {
      throw ConfigError("non_uniform: no scale vector given (run optimize-scale first)");
    }
    if ((m == InferenceMode::exact_arithmetic || m == InferenceMode::exact_geometric) &&
        width > kMaxOracleWidth) {
      throw ConfigError(std::string(to_string(m)) + ": gate has " + std::to_string(width) +
                        " units, enumeration supports at most " +
                        std::to_string(kMaxOracleWidth));
    }
  }
  if (scale != nullptr) opts.scale = *scale;

  const auto [train_set, val_set] = split_for(cfg, data, repeat_index);
  const auto val_z = gate_inputs(params, model.gate, val_set);
  const auto test_z = gate_inputs(params, model.gate, data.test);
  std::vector<MethodErrors> rows;
  for (auto m : methods) {
    rows.push_back({m, error_rate(params, model.gate, val_z, val_set.labels, m, opts),
                    error_rate(params, model.gate, test_z, data.test.labels, m, opts)});
  }
  return rows;
}

std::string eval_csv(const std::vector<MethodErrors>& rows) {
  std::string out = "method,val_error,test_error\n";
  for (const auto& r : rows) {
    out += std::string(to_string(r.method)) + "," + percent(r.val_error) + "," +
           percent(r.test_error) + "\n";
  }
  return out;
}

std::string eval_table(const std::vector<MethodErrors>& rows) {
  std::string out;
  char line[128];
  std::snprintf(line, sizeof line, "%-18s %12s %12s\n", "method", "val err %", "test err %");
  out += line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-18s %12.2f %12.2f\n",
                  std::string(to_string(r.method)).c_str(), 100.0 * r.val_error,
                  100.0 * r.test_error);
    out += line;
  }
  return out;
}

const std::vector<InferenceMode>& experiment_methods() {
  static const std::vector<InferenceMode> methods{
      InferenceMode::uniform_scaling, InferenceMode::mc_arithmetic, InferenceMode::non_uniform};
  return methods;
}

std::vector<Aggregate> aggregate(const std::vector<SplitRecord>& splits) {
  std::vector<Aggregate> out;
  const auto& methods = experiment_methods();
  for (std::size_t m = 0; m < methods.size(); ++m) {
    std::vector<double> val, test;
    for (const auto& s : splits) {
      if (!s.complete) continue;
      val.push_back(100.0 * s.errors[m].val_error);
      test.push_back(100.0 * s.errors[m].test_error);
    }
    Aggregate a{methods[m]};
    a.n = val.size();
    if (a.n > 0) {
      a.val_mean = mean(val);
      a.test_mean = mean(test);
    }
    if (a.n > 1) {
      auto sd = [](const std::vector<double>& xs, double mu) {
        CompensatedSum acc;
        for (double x : xs) acc.add((x - mu) * (x - mu));
        return std::sqrt(acc.value() / static_cast<double>(xs.size() - 1));
      };
      a.val_sd = sd(val, a.val_mean);
      a.test_sd = sd(test, a.test_mean);
    }
    out.push_back(a);
  }
  return out;
}

ExperimentReport cmd_experiment(const RunConfig& cfg, std::ostream* progress) {
  cfg.validate();
  ExperimentReport report;
  report.config_text = render_config(cfg);
  std::filesystem::create_directories(cfg.out);
  write_text_file(cfg.out / "config.resolved", report.config_text);

  const LoadedData data = load_data(cfg);
  for (std::size_t i = 0; i < cfg.repeat; ++i) {
    SplitRecord rec;
    rec.index = i;
    rec.seed = split_seed(cfg, i);
    const auto dir = cfg.out / ("split_" + std::to_string(i));
    try {
      if (progress) *progress << "split " << i + 1 << "/" << cfg.repeat << ": train" << std::endl;
      const ModelFile model = cmd_train(cfg, data, i, dir);
      rec.train_epoch = model.checkpoint.epoch;
      if (progress) *progress << "split " << i + 1 << "/" << cfg.repeat << ": scale" << std::endl;
      const ScaleOptResult fit = cmd_optimize_scale(cfg, data, model, i, dir);
      rec.scale_epoch = fit.selected_epoch;
      if (progress) *progress << "split " << i + 1 << "/" << cfg.repeat << ": eval" << std::endl;
      rec.errors = cmd_eval(cfg, data, model, &fit.scale, experiment_methods(), i);
      write_text_file(dir / "eval.csv", eval_csv(rec.errors));
      rec.complete = true;
    } catch (const Error& e) {
      rec.failure = std::string(to_string(e.category())) + ": " + e.what();
      if (progress) *progress << "split " << i + 1 << " failed: " << rec.failure << std::endl;
    }
    report.splits.push_back(std::move(rec));
  }
  report.aggregates = aggregate(report.splits);
  write_text_file(cfg.out / "per_split.csv", per_split_csv(report));
  write_text_file(cfg.out / "aggregate.csv", aggregate_csv(report));
  write_text_file(cfg.out / "report.txt", report_text(report));
  return report;
}

std::string per_split_csv(const ExperimentReport& report) {
  std::string out = "split,split_seed,status,train_epoch,scale_epoch";
  for (auto m : experiment_methods()) {
    const std::string name(to_string(m));
    out += "," + name + "_val," + name + "_test";
  }
  out += "\n";
  for (const auto& s : report.splits) {
    out += std::to_string(s.index) + "," + std::to_string(s.seed) + "," +
           (s.complete ? "complete" : "failed") + ",";
    if (!s.complete) {
      out += ",";
      for (std::size_t m = 0; m < experiment_methods().size(); ++m) out += ",,";
      out += "\n";
      continue;
    }
    out += std::to_string(s.train_epoch) + "," + std::to_string(s.scale_epoch);
    for (const auto& e : s.errors) out += "," + percent(e.val_error) + "," + percent(e.test_error);
    out += "\n";
  }
  return out;
}

std::string aggregate_csv(const ExperimentReport& report) {
  std::string out = "method,val_err_mean,val_err_sd,test_err_mean,test_err_sd,n,note\n";
  for (const auto& a : report.aggregates) {
    std::string note;
    if (a.n == 1) note = "n=1";
    if (a.n < report.splits.size()) {
      if (!note.empty()) note += ";";
      note += "incomplete";
    }
    out += std::string(to_string(a.method)) + "," + fixed(a.val_mean, 4) + "," +
           fixed(a.val_sd, 4) + "," + fixed(a.test_mean, 4) + "," + fixed(a.test_sd, 4) + "," +
           std::to_string(a.n) + "," + note + "\n";
  }
  return out;
}

std::string report_text(const ExperimentReport& report) {
  std::string out = "Error rates in percent, mean ± sample sd over complete splits\n\n";
  char line[160];
  std::snprintf(line, sizeof line, "%-14s %-18s %-18s %s\n", "method", "validation", "test", "n");
  out += line;
  for (const auto& a : report.aggregates) {
    const std::string val = fixed(a.val_mean, 2) + " ± " + fixed(a.val_sd, 2);
    const std::string test = fixed(a.test_mean, 2) + " ± " + fixed(a.test_sd, 2);
    // "±" is two bytes in UTF-8; pad by hand so columns line up.
    std::snprintf(line, sizeof line, "%-14s %-19s %-19s %zu%s\n",
                  std::string(to_string(a.method)).c_str(), val.c_str(), test.c_str(), a.n,
                  a.n == 1 ? " (n=1)" : "");
    out += line;
  }
  out += "\nSplits\n";
  for (const auto& s : report.splits) {
    out += "  split " + std::to_string(s.index) + " seed " + std::to_string(s.seed) + ": ";
    if (!s.complete) {
      out += "INCOMPLETE (" + s.failure + ")\n";
      continue;
    }
    const bool selection_ok = s.errors[2].val_error <= s.errors[0].val_error;
    out += "train epoch " + std::to_string(s.train_epoch) + ", scale epoch " +
           std::to_string(s.scale_epoch) +
           (selection_ok ? ", non-uniform val <= uniform val\n"
                         : ", SELECTION INVARIANT VIOLATED\n");
  }
  out += "\nResolved configuration\n";
  std::istringstream cfg(report.config_text);
  for (std::string l; std::getline(cfg, l);) out += "  " + l + "\n";
  return out;
}

std::vector<OracleCheckRow> cmd_oracle_check(const RunConfig& cfg, std::size_t width,
                                             std::size_t trials) {
  if (width == 0 || width > kMaxOracleWidth) {
    throw ConfigError("oracle width must be in [1, " + std::to_string(kMaxOracleWidth) + "]");
  }
  if (trials == 0) throw ConfigError("oracle trials must be at least 1");
  const double p = cfg.keep_prob;
  const std::size_t in = 6, out = 4;

  // Random parameters for `spec` from the "oracle" stream of trial t.
  auto random_params = [&](const NetworkSpec& spec, std::uint64_t t) {
    NetworkParams params = zero_params(spec);
    RngStream rng(cfg.seed, derive_stream_id("oracle", t));
    for (auto& layer : params.layers) {
      for (double& w : layer.weights.flat()) w = rng.normal() * 0.5;
      for (double& b : layer.bias) b = rng.normal() * 0.1;
    }
    return params;
  };
  auto random_input = [&](std::size_t dim, std::uint64_t t) {
    RngStream rng(cfg.seed, derive_stream_id("oracle-input", t));
    Vector x(dim);
    for (double& v : x) v = rng.uniform();
    return x;
  };

  struct Family {
    std::string name;
    NetworkSpec spec;
    std::size_t gate_position;
    std::vector<std::pair<InferenceMode, bool>> methods;  // (method, vs geometric oracle)
  };
  const std::vector<Family> families = {
      {"linear", {{in, width, Activation::linear}, {width, out, Activation::linear}}, 1,
       {{InferenceMode::uniform_scaling, false}, {InferenceMode::mc_arithmetic, false}}},
      {"softmax_head", {{in, width, Activation::relu}, {width, out, Activation::softmax}}, 1,
       {{InferenceMode::uniform_scaling, true},
        {InferenceMode::uniform_scaling, false},
        {InferenceMode::mc_arithmetic, false},
        {InferenceMode::mc_geometric, true}}},
      {"relu_head",
       {{in, width, Activation::relu}, {width, 12, Activation::relu}, {12, out,
                                                                        Activation::softmax}},
       1,
       {{InferenceMode::uniform_scaling, false},
        {InferenceMode::mc_arithmetic, false},
        {InferenceMode::mc_geometric, true}}},
  };

  std::vector<OracleCheckRow> rows;
  for (const auto& fam : families) {
    const DropoutGate gate{fam.gate_position, p, cfg.convention};
    std::vector<double> worst(fam.methods.size(), 0.0);
    for (std::size_t t = 0; t < trials; ++t) {
      const NetworkParams params = random_params(fam.spec, t);
      const Vector z = gate_input(params, gate, random_input(in, t));
      const Vector arith = exact_arithmetic_from_gate(params, gate, z);
      const Vector geo = exact_geometric_from_gate(params, gate, z);
      InferenceOptions opts;
      opts.mc_samples = cfg.mc_samples;
      opts.mc_seed = cfg.seed + t;
      for (std::size_t m = 0; m < fam.methods.size(); ++m) {
        const auto [mode, geometric] = fam.methods[m];
        const Vector approx = predict_from_gate(params, gate, mode, opts, z);
        worst[m] = std::max(worst[m], max_abs_diff(approx, geometric ? geo : arith));
      }
    }
    for (std::size_t m = 0; m < fam.methods.size(); ++m) {
      const auto [mode, geometric] = fam.methods[m];
      rows.push_back({fam.name, std::string(to_string(mode)) +
                                    (geometric ? " vs exact_geometric" : " vs exact_arithmetic"),
                      width, worst[m]});
    }
  }
  return rows;
}

std::string oracle_check_csv(const std::vector<OracleCheckRow>& rows) {
  std::string out = "instance,comparison,width,max_abs_deviation\n";
  char buf[32];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.6e", r.max_deviation);
    out += r.instance + "," + r.method + "," + std::to_string(r.width) + "," + buf + "\n";
  }
  return out;
}

}  // namespace dropscale
