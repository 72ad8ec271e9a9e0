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
#include "dropscale/inference.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dropscale/errors.hpp"
#include "dropscale/oracle.hpp"

namespace dropscale {

namespace {

constexpr double kScaleTolerance = 1e-6;

std::size_t checked_width(const NetworkParams& params, const DropoutGate& gate,
                          const Vector& z) {
  const std::size_t width = gate.width(params.spec);
  if (z.size() != width) {
    throw ContractError("inference: gate input length " + std::to_string(z.size()) +
                        " does not match gated width " + std::to_string(width));
  }
  return width;
}

}  // namespace

Vector mc_mask(std::uint64_t seed, std::uint64_t sample, std::size_t width, double keep_prob) {
  RngStream rng(seed, derive_stream_id("mc", sample));
  return bernoulli_mask(rng, width, keep_prob);
}

Vector mask_from_index(std::uint64_t index, std::size_t width) {
  if (width < 64 && (index >> width) != 0) {
    throw ContractError("mask_from_index: index has bits beyond the gated width");
  }
  Vector mask(width);
  for (std::size_t j = 0; j < width && j < 64; ++j) mask[j] = (index >> j) & 1U ? 1.0 : 0.0;
  return mask;
}

Vector combine_submodels(const NetworkParams& params, const DropoutGate& gate,
                         const Vector& z, std::uint64_t count,
                         const std::function<Vector(std::uint64_t)>& multiplier_of,
                         const std::function<double(std::uint64_t)>& weight_of,
                         MeanKind kind) {
  if (count == 0) throw ContractError("combine_submodels: no submodels");
  const std::size_t classes = params.output_dim();
  std::vector<CompensatedSum> acc(classes);
  for (std::uint64_t k = 0; k < count; ++k) {
    const double w = weight_of(k);
    if (w == 0.0) continue;
    const Vector out = head_output(params, gate, multiplier_of(k), z);
    for (std::size_t c = 0; c < classes; ++c) {
      const double term =
          kind == MeanKind::arithmetic ? out[c] : std::max(std::log(out[c]), kLogProbFloor);
      acc[c].add(w * term);
    }
  }
  Vector result(classes);
  for (std::size_t c = 0; c < classes; ++c) result[c] = acc[c].value();
  if (kind == MeanKind::geometric) {
    const double top = *std::max_element(result.begin(), result.end());
    double total = 0.0;
    for (double& v : result) {
      v = std::exp(v - top);
      total += v;
    }
    for (double& v : result) v /= total;
  }
  return result;
}

void check_scale_vector(const DropoutGate& gate, const Vector& s, std::size_t width) {
  if (s.size() != width) {
    throw ContractError("scale vector length " + std::to_string(s.size()) +
                        " does not match gated width " + std::to_string(width));
  }
  const ConstraintSet cs = ConstraintSet::for_gate(gate);
  const double violation = cs.box_violation(s);
  if (violation > kScaleTolerance) {
    throw ContractError("scale vector leaves [0, " + std::to_string(cs.upper_bound) +
                        "] by " + std::to_string(violation));
  }
}

Vector weight_scaled_from_gate(const NetworkParams& params, const DropoutGate& gate,
                               const Vector& z) {
  const std::size_t width = checked_width(params, gate, z);
  if (gate.convention == DropoutConvention::inverted) return head_output(params, gate, {}, z);
  return head_output(params, gate, Vector(width, gate.keep_prob), z);
}

Vector mc_from_gate(const NetworkParams& params, const DropoutGate& gate, const Vector& z,
                    const McConfig& cfg) {
  const std::size_t width = checked_width(params, gate, z);
  if (cfg.samples == 0) throw ContractError("predict_mc: need at least one sample");
  if (cfg.enumerate && width < 64 && cfg.samples > (std::uint64_t{1} << width)) {
    throw ContractError("predict_mc: enumeration asks for more samples than masks");
  }
  const double inv_n = 1.0 / static_cast<double>(cfg.samples);
  auto multiplier_of = [&](std::uint64_t k) {
    Vector mask = cfg.enumerate ? mask_from_index(k, width)
                                : mc_mask(cfg.seed, k, width, gate.keep_prob);
    return gate_multiplier(gate, MaskedMode{std::move(mask)}, width);
  };
  return combine_submodels(params, gate, z, cfg.samples, multiplier_of,
                           [inv_n](std::uint64_t) { return inv_n; }, cfg.mean_kind);
}

Vector scaled_from_gate(const NetworkParams& params, const DropoutGate& gate,
                        const Vector& s, const Vector& z) {
  const std::size_t width = checked_width(params, gate, z);
  check_scale_vector(gate, s, width);
  return head_output(params, gate, s, z);
}

Vector predict_weight_scaled(const NetworkParams& params, const DropoutGate& gate,
                             const Vector& x) {
  return weight_scaled_from_gate(params, gate, gate_input(params, gate, x));
}

Vector predict_mc(const NetworkParams& params, const DropoutGate& gate, const Vector& x,
                  const McConfig& cfg) {
  return mc_from_gate(params, gate, gate_input(params, gate, x), cfg);
}

Vector predict_scaled(const NetworkParams& params, const DropoutGate& gate, const Vector& s,
                      const Vector& x) {
  return scaled_from_gate(params, gate, s, gate_input(params, gate, x));
}

std::string_view to_string(InferenceMode mode) {
  switch (mode) {
    case InferenceMode::exact_arithmetic: return "exact_arithmetic";
    case InferenceMode::exact_geometric: return "exact_geometric";
    case InferenceMode::uniform_scaling: return "uniform";
    case InferenceMode::mc_arithmetic: return "mc_arithmetic";
    case InferenceMode::mc_geometric: return "mc_geometric";
    case InferenceMode::non_uniform: return "non_uniform";
  }
  return "unknown";
}

InferenceMode parse_inference_mode(std::string_view name) {
  for (auto mode : {InferenceMode::exact_arithmetic, InferenceMode::exact_geometric,
                    InferenceMode::uniform_scaling, InferenceMode::mc_arithmetic,
                    InferenceMode::mc_geometric, InferenceMode::non_uniform}) {
    if (name == to_string(mode)) return mode;
  }
  throw ConfigError("unknown inference method '" + std::string(name) +
                    "' (expected uniform, mc_arithmetic, mc_geometric, non_uniform, "
                    "exact_arithmetic or exact_geometric)");
}

Vector predict_from_gate(const NetworkParams& params, const DropoutGate& gate,
                         InferenceMode mode, const InferenceOptions& opts, const Vector& z) {
  switch (mode) {
    case InferenceMode::exact_arithmetic:
      return exact_arithmetic_from_gate(params, gate, z);
    case InferenceMode::exact_geometric:
      return exact_geometric_from_gate(params, gate, z);
    case InferenceMode::uniform_scaling:
      return weight_scaled_from_gate(params, gate, z);
    case InferenceMode::mc_arithmetic:
      return mc_from_gate(params, gate, z,
                          {opts.mc_samples, opts.mc_seed, MeanKind::arithmetic, false});
    case InferenceMode::mc_geometric:
      return mc_from_gate(params, gate, z,
                          {opts.mc_samples, opts.mc_seed, MeanKind::geometric, false});
    case InferenceMode::non_uniform:
      if (opts.scale.empty()) {
        throw ContractError("non-uniform inference needs a scale vector");
      }
      return scaled_from_gate(params, gate, opts.scale, z);
  }
  throw ContractError("predict: unknown inference mode");
}

Vector predict(const NetworkParams& params, const DropoutGate& gate, InferenceMode mode,
               const InferenceOptions& opts, const Vector& x) {
  return predict_from_gate(params, gate, mode, opts, gate_input(params, gate, x));
}

std::vector<Vector> gate_inputs(const NetworkParams& params, const DropoutGate& gate,
                                const Dataset& ds) {
  std::vector<Vector> out;
  out.reserve(ds.size());
  for (const auto& x : ds.features) out.push_back(gate_input(params, gate, x));
  return out;
}

double error_rate(const NetworkParams& params, const DropoutGate& gate,
                  std::span<const Vector> inputs, std::span<const std::size_t> labels,
                  InferenceMode mode, const InferenceOptions& opts) {
  if (inputs.size() != labels.size()) {
    throw ContractError("error_rate: inputs and labels differ in length");
  }
  if (inputs.empty()) throw ContractError("error_rate: empty dataset");
  if (mode == InferenceMode::non_uniform) {
    check_scale_vector(gate, opts.scale, gate.width(params.spec));
  }
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (argmax(predict_from_gate(params, gate, mode, opts, inputs[i])) != labels[i]) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(inputs.size());
}

double error_rate(const NetworkParams& params, const DropoutGate& gate, const Dataset& ds,
                  InferenceMode mode, const InferenceOptions& opts) {
  const auto inputs = gate_inputs(params, gate, ds);
  return error_rate(params, gate, inputs, ds.labels, mode, opts);
}

}  // namespace dropscale
