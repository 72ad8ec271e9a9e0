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
 Non-uniform weight scaling.

 Instead of multiplying the gate input by the keep probability p, inference
 multiplies it by a per-unit vector s with

   mean(s) = m,   0 <= s_k <= u          (see ConstraintSet)

 The mean constraint is built into the parametrization: s is computed from a
 free vector e as

   s = e - mean(e) + m

 and the box is enforced softly with a hinge penalty

   Σ_k λ_k (max(0, s_k - u) - min(0, s_k))

 added to the mean cross-entropy of the frozen network on training data. The
 minimization runs mini-batch Adam over e starting from e = 0, which is
 exactly uniform weight scaling, and keeps whichever epoch's s gives the
 lowest validation error (epoch 0 included).
*/

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "dropscale/constraints.hpp"
#include "dropscale/data.hpp"
#include "dropscale/errors.hpp"
#include "dropscale/network.hpp"
#include "dropscale/optim.hpp"

namespace dropscale {

inline constexpr double kDefaultPenaltyWeight = 10000.0;

/// s = e − mean(e) + m. Exact to a few ulps of max|e|.
Vector reparametrize(const Vector& e, const ConstraintSet& cs);

struct PenaltyConfig {
  double lambda = kDefaultPenaltyWeight;
  // Optional per-unit weights λ_k; when empty every unit uses `lambda`.
  std::vector<double> per_unit;

  double weight(std::size_t k) const { return per_unit.empty() ? lambda : per_unit[k]; }
  void validate(std::size_t width) const;
};

double penalty(const Vector& s, const ConstraintSet& cs, const PenaltyConfig& pcfg);
double penalty(const Vector& s, const ConstraintSet& cs, double lambda);

/// +λ_k above the upper bound, −λ_k below zero, 0 at or inside the bounds.
Vector penalty_subgradient(const Vector& s, const ConstraintSet& cs, const PenaltyConfig& pcfg);

/// Projects a ∂/∂s gradient onto ∂/∂e: g_k − mean(g).
Vector chain_through_reparametrization(const Vector& grad_s);

/// Gate input z and label of one example; the part of the network below the
/// gate is frozen during scale optimization, so z is computed once.
struct GateExample {
  Vector z;
  std::size_t label = 0;
};

std::vector<GateExample> gate_examples(const NetworkParams& params, const DropoutGate& gate,
                                       const Dataset& ds);

struct ObjectiveValue {
  double loss = 0.0;     // mean cross-entropy over the batch
  double penalty = 0.0;  // hinge penalty of s
  double total = 0.0;
  Vector grad_e;         // ∂total/∂e, sums to zero
  Vector s;              // reparametrized point the value was taken at
};

/*
 Loss and gradient at e. The forward pass uses s as given, even outside the
 box: the penalty is what pulls it back. Throws ContractError on an empty
 batch.
*/
ObjectiveValue objective_and_gradient(const Vector& e, const ConstraintSet& cs,
                                      const PenaltyConfig& pcfg, const NetworkParams& params,
                                      const DropoutGate& gate,
                                      std::span<const GateExample> batch);

/*
 Clip to [0, u], then shift the entries strictly inside the box so the mean
 returns to m; repeat until the box violation is at most 1e-9. A feasible s
 is returned unchanged. Requires |mean(s) − m| <= 1e-9.
*/
Vector feasibility_repair(const Vector& s, const ConstraintSet& cs);

struct ScaleOptConfig {
  AdamSettings adam{0.001, 0.9, 0.999, 1e-8};
  std::size_t max_iterations = 50;  // epochs over the fitting set
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  // Fit e on the validation set as well as selecting on it. Off by default:
  // it makes the reported validation error optimistic.
  bool fit_on_validation = false;

  void validate() const;
};

struct TraceRecord {
  std::size_t epoch = 0;
  double objective = 0.0;  // full fitting-set loss + penalty at end of epoch
  double penalty = 0.0;
  double val_error = 0.0;  // of the repaired s
};

struct ScaleOptResult {
  Vector scale;  // repaired, feasible
  std::size_t selected_epoch = 0;
  double val_error = 0.0;
  double uniform_val_error = 0.0;  // epoch 0
  std::vector<TraceRecord> trace;
};

/*
 Optimizer-agnostic view of a scale problem, so the same loop drives both
 the network objective and small analytic surrogates in tests.

 `batch_loss(s, indices, grad_s)` returns the mean data loss over `indices`
 (into the fitting set) and writes its ∂/∂s. `selection_error(s)` scores a
 feasible s; lower is better.
*/
struct ScaleProblem {
  std::size_t width = 0;
  std::size_t fit_size = 0;
  std::function<double(const Vector& s, std::span<const std::size_t> indices, Vector& grad_s)>
      batch_loss;
  std::function<double(const Vector& s)> selection_error;
};

class ScaleOptDivergence : public NumericError {
 public:
  ScaleOptDivergence(const std::string& what, std::vector<TraceRecord> trace)
      : NumericError(what), trace_(std::move(trace)) {}
  const std::vector<TraceRecord>& trace() const noexcept { return trace_; }

 private:
  std::vector<TraceRecord> trace_;
};

ScaleOptResult optimize_scale(const ScaleProblem& problem, const ConstraintSet& cs,
                              const PenaltyConfig& pcfg, const ScaleOptConfig& ocfg);

ScaleOptResult optimize_scale(const NetworkParams& params, const DropoutGate& gate,
                              const ConstraintSet& cs, const PenaltyConfig& pcfg,
                              const ScaleOptConfig& ocfg, const Dataset& train_set,
                              const Dataset& val_set);

/// Counts of s entries in `bins` equal-width bins over [0, u]; u itself
/// falls in the last bin.
std::vector<std::size_t> scale_histogram(const Vector& s, const ConstraintSet& cs,
                                         std::size_t bins = 20);

}  // namespace dropscale
