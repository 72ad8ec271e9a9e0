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
#include "dropscale/scaleopt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "dropscale/inference.hpp"

namespace dropscale {

namespace {

constexpr double kRepairTolerance = 1e-9;
constexpr std::size_t kRepairIterations = 100;

bool finite(double v) { return std::isfinite(v); }

}  // namespace

Vector reparametrize(const Vector& e, const ConstraintSet& cs) {
  if (e.empty()) throw ContractError("reparametrize: empty vector");
  const double centre = mean(e.span());
  Vector s(e.size());
  for (std::size_t k = 0; k < e.size(); ++k) s[k] = (e[k] - centre) + cs.mean_target;
  return s;
}

void PenaltyConfig::validate(std::size_t width) const {
  if (!(lambda > 0.0) || !finite(lambda)) throw ConfigError("penalty: lambda must be positive");
  if (!per_unit.empty()) {
    if (per_unit.size() != width) {
      throw ConfigError("penalty: " + std::to_string(per_unit.size()) +
                        " per-unit weights for " + std::to_string(width) + " units");
    }
    for (double l : per_unit) {
      if (!(l > 0.0) || !finite(l)) throw ConfigError("penalty: per-unit weights must be positive");
    }
  }
}

double penalty(const Vector& s, const ConstraintSet& cs, const PenaltyConfig& pcfg) {
  pcfg.validate(s.size());
  CompensatedSum acc;
  for (std::size_t k = 0; k < s.size(); ++k) {
    const double violation = std::max(0.0, s[k] - cs.upper_bound) - std::min(0.0, s[k]);
    if (violation != 0.0) acc.add(pcfg.weight(k) * violation);
  }
  return acc.value();
}

double penalty(const Vector& s, const ConstraintSet& cs, double lambda) {
  return penalty(s, cs, PenaltyConfig{lambda, {}});
}

Vector penalty_subgradient(const Vector& s, const ConstraintSet& cs, const PenaltyConfig& pcfg) {
  Vector g(s.size());
  for (std::size_t k = 0; k < s.size(); ++k) {
    if (s[k] > cs.upper_bound) {
      g[k] = pcfg.weight(k);
    } else if (s[k] < 0.0) {
      g[k] = -pcfg.weight(k);
    }
  }
  return g;
}

Vector chain_through_reparametrization(const Vector& grad_s) {
  const double centre = mean(grad_s.span());
  Vector g(grad_s.size());
  for (std::size_t k = 0; k < g.size(); ++k) g[k] = grad_s[k] - centre;
  return g;
}

std::vector<GateExample> gate_examples(const NetworkParams& params, const DropoutGate& gate,
                                       const Dataset& ds) {
  std::vector<GateExample> out;
  out.reserve(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out.push_back({gate_input(params, gate, ds.features[i]), ds.labels[i]});
  }
  return out;
}

namespace {

// Mean cross-entropy of the scaled head over `indices` of `examples`, with
// its gradient w.r.t. s written to grad_s.
double scaled_batch_loss(const NetworkParams& params, const DropoutGate& gate,
                         std::span<const GateExample> examples, const Vector& s,
                         std::span<const std::size_t> indices, Vector& grad_s) {
  if (indices.empty()) throw ContractError("scale objective: empty batch");
  grad_s = Vector(s.size());
  const ForwardMode mode = ScaledMode{s};
  CompensatedSum loss;
  for (std::size_t i : indices) {
    const GateExample& ex = examples[i];
    const ForwardResult fr = forward_from_gate(params, gate, mode, ex.z);
    loss.add(cross_entropy(fr.output, ex.label));
    const Vector g = backprop_scale(params, fr.cache, ex.label);
    for (std::size_t k = 0; k < g.size(); ++k) grad_s[k] += g[k];
  }
  const double inv = 1.0 / static_cast<double>(indices.size());
  for (double& v : grad_s) v *= inv;
  return loss.value() * inv;
}

}  // namespace

ObjectiveValue objective_and_gradient(const Vector& e, const ConstraintSet& cs,
                                      const PenaltyConfig& pcfg, const NetworkParams& params,
                                      const DropoutGate& gate,
                                      std::span<const GateExample> batch) {
  if (batch.empty()) throw ContractError("objective_and_gradient: empty batch");
  ObjectiveValue out;
  out.s = reparametrize(e, cs);
  std::vector<std::size_t> indices(batch.size());
  std::iota(indices.begin(), indices.end(), 0);
  Vector grad_s;
  out.loss = scaled_batch_loss(params, gate, batch, out.s, indices, grad_s);
  out.penalty = penalty(out.s, cs, pcfg);
  out.total = out.loss + out.penalty;
  const Vector sub = penalty_subgradient(out.s, cs, pcfg);
  for (std::size_t k = 0; k < grad_s.size(); ++k) grad_s[k] += sub[k];
  out.grad_e = chain_through_reparametrization(grad_s);
  return out;
}

Vector feasibility_repair(const Vector& s, const ConstraintSet& cs) {
  cs.validate();
  if (s.empty()) throw ContractError("feasibility_repair: empty vector");
  const double n = static_cast<double>(s.size());
  if (std::abs(mean(s.span()) - cs.mean_target) > kRepairTolerance) {
    throw ContractError("feasibility_repair: mean " + std::to_string(mean(s.span())) +
                        " is off the target " + std::to_string(cs.mean_target));
  }
  if (cs.box_violation(s) <= kRepairTolerance) return s;

  Vector out = s;
  const std::size_t max_iterations = std::max(kRepairIterations, 2 * s.size());
  for (std::size_t it = 0; it < max_iterations; ++it) {
    for (double& v : out) v = std::clamp(v, 0.0, cs.upper_bound);
    const double deficit = cs.mean_target - mean(out.span());
    if (std::abs(deficit) <= kRepairTolerance * 1e-3) return out;

    // Only entries that can move in the needed direction take the shift.
    std::size_t movable = 0;
    for (double v : out) movable += deficit > 0.0 ? v < cs.upper_bound : v > 0.0;
    if (movable == 0) break;
    const double shift = deficit * n / static_cast<double>(movable);
    for (double& v : out) {
      if (deficit > 0.0 ? v < cs.upper_bound : v > 0.0) v += shift;
    }
    if (cs.box_violation(out) <= kRepairTolerance &&
        std::abs(mean(out.span()) - cs.mean_target) <= kRepairTolerance) {
      return out;
    }
  }
  throw NumericError("feasibility_repair: no feasible point found (mean target " +
                     std::to_string(cs.mean_target) + ", upper bound " +
                     std::to_string(cs.upper_bound) + ")");
}

void ScaleOptConfig::validate() const {
  if (batch_size == 0) throw ConfigError("scale optimization: batch_size must be at least 1");
  if (!(adam.learning_rate > 0.0)) {
    throw ConfigError("scale optimization: learning rate must be positive");
  }
}

ScaleOptResult optimize_scale(const ScaleProblem& problem, const ConstraintSet& cs,
                              const PenaltyConfig& pcfg, const ScaleOptConfig& ocfg) {
  cs.validate();
  pcfg.validate(problem.width);
  ocfg.validate();
  if (problem.width == 0) throw ContractError("optimize_scale: zero-width gate");
  if (problem.fit_size == 0) throw ContractError("optimize_scale: empty fitting set");

  ScaleOptResult result;
  Vector e(problem.width);
  Adam adam(problem.width, ocfg.adam);
  std::vector<std::size_t> all(problem.fit_size);
  std::iota(all.begin(), all.end(), 0);
  Vector grad_s;

  auto record_epoch = [&](std::size_t epoch) {
    const Vector s = reparametrize(e, cs);
    TraceRecord rec;
    rec.epoch = epoch;
    rec.penalty = penalty(s, cs, pcfg);
    rec.objective = problem.batch_loss(s, all, grad_s) + rec.penalty;
    if (!finite(rec.objective)) {
      result.trace.push_back(rec);
      throw ScaleOptDivergence(
          "scale optimization: non-finite objective at epoch " + std::to_string(epoch),
          result.trace);
    }
    Vector repaired = feasibility_repair(s, cs);
    rec.val_error = problem.selection_error(repaired);
    result.trace.push_back(rec);
    if (epoch == 0 || rec.val_error < result.val_error) {
      result.scale = std::move(repaired);
      result.selected_epoch = epoch;
      result.val_error = rec.val_error;
    }
  };

  record_epoch(0);
  result.uniform_val_error = result.val_error;

  std::vector<std::size_t> order = all;
  for (std::size_t epoch = 1; epoch <= ocfg.max_iterations; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    RngStream rng(ocfg.seed, derive_stream_id("scale-shuffle", epoch));
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t start = 0; start < order.size(); start += ocfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + ocfg.batch_size);
      const std::span<const std::size_t> batch(order.data() + start, stop - start);
      const Vector s = reparametrize(e, cs);
      const double loss = problem.batch_loss(s, batch, grad_s);
      if (!finite(loss) || !all_finite(grad_s.span())) {
        throw ScaleOptDivergence(
            "scale optimization: non-finite batch objective in epoch " + std::to_string(epoch),
            result.trace);
      }
      const Vector sub = penalty_subgradient(s, cs, pcfg);
      for (std::size_t k = 0; k < grad_s.size(); ++k) grad_s[k] += sub[k];
      const Vector grad_e = chain_through_reparametrization(grad_s);
      adam.step(e.span(), grad_e.span());
    }
    record_epoch(epoch);
  }
  return result;
}

ScaleOptResult optimize_scale(const NetworkParams& params, const DropoutGate& gate,
                              const ConstraintSet& cs, const PenaltyConfig& pcfg,
                              const ScaleOptConfig& ocfg, const Dataset& train_set,
                              const Dataset& val_set) {
  const std::size_t width = gate.width(params.spec);
  if (params.spec.back().activation != Activation::softmax) {
    throw ContractError("optimize_scale: the output layer must be softmax");
  }
  const auto fit = gate_examples(params, gate, ocfg.fit_on_validation ? val_set : train_set);
  const auto val = gate_examples(params, gate, val_set);
  if (val.empty()) throw ContractError("optimize_scale: empty validation set");

  ScaleProblem problem;
  problem.width = width;
  problem.fit_size = fit.size();
  problem.batch_loss = [&](const Vector& s, std::span<const std::size_t> idx, Vector& grad) {
    return scaled_batch_loss(params, gate, fit, s, idx, grad);
  };
  problem.selection_error = [&](const Vector& s) {
    std::size_t wrong = 0;
    for (const auto& ex : val) {
      if (argmax(head_output(params, gate, s, ex.z)) != ex.label) ++wrong;
    }
    return static_cast<double>(wrong) / static_cast<double>(val.size());
  };
  return optimize_scale(problem, cs, pcfg, ocfg);
}

std::vector<std::size_t> scale_histogram(const Vector& s, const ConstraintSet& cs,
                                         std::size_t bins) {
  if (bins == 0) throw ContractError("scale_histogram: need at least one bin");
  std::vector<std::size_t> counts(bins, 0);
  for (double v : s) {
    const double pos = v / cs.upper_bound * static_cast<double>(bins);
    const auto bin = static_cast<std::ptrdiff_t>(std::floor(pos));
    counts[static_cast<std::size_t>(
        std::clamp<std::ptrdiff_t>(bin, 0, static_cast<std::ptrdiff_t>(bins) - 1))]++;
  }
  return counts;
}

}  // namespace dropscale
