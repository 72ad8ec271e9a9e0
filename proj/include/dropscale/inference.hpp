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
 Approximations of the dropout prediction E_d[F(x, d)]:

   weight scaling      gate input multiplied by p (classical) or left as is
                       (inverted, the 1/p was applied during training)
   Monte Carlo         N sampled masks, averaged arithmetically over the
                       probabilities or geometrically in log space
   non-uniform scale   gate input multiplied by a per-unit vector s

 All of them go through the head only: the gate input z is computed once
 per example.
*/

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "dropscale/constraints.hpp"
#include "dropscale/data.hpp"
#include "dropscale/network.hpp"

namespace dropscale {

enum class MeanKind { arithmetic, geometric };

/// Log-probabilities are clamped here before geometric averaging.
inline constexpr double kLogProbFloor = -690.0;

struct McConfig {
  std::size_t samples = 128;
  std::uint64_t seed = 0;
  MeanKind mean_kind = MeanKind::arithmetic;
  // Sample k uses the mask whose bit j is bit j of k instead of a random
  // draw; with samples = 2^n every mask appears exactly once.
  bool enumerate = false;
};

/// Mask for Monte Carlo sample k: stream derive_stream_id("mc", k) of `seed`.
Vector mc_mask(std::uint64_t seed, std::uint64_t sample, std::size_t width, double keep_prob);

/// {0,1} mask whose unit j is bit j of `index`.
Vector mask_from_index(std::uint64_t index, std::size_t width);

/*
 Weighted combination of `count` submodel outputs, each a head evaluation
 with gate multiplier `multiplier_of(k)` and weight `weight_of(k)`.
 Arithmetic: Σ w_k F_k. Geometric: renormalize(exp(Σ w_k max(log F_k, floor))).
 Terms with zero weight are skipped. Reduction runs in index order with
 compensated sums, so enumeration oracle and Monte Carlo share one path.
*/
Vector combine_submodels(const NetworkParams& params, const DropoutGate& gate,
                         const Vector& z, std::uint64_t count,
                         const std::function<Vector(std::uint64_t)>& multiplier_of,
                         const std::function<double(std::uint64_t)>& weight_of,
                         MeanKind kind);

Vector predict_weight_scaled(const NetworkParams& params, const DropoutGate& gate,
                             const Vector& x);
Vector predict_mc(const NetworkParams& params, const DropoutGate& gate, const Vector& x,
                  const McConfig& cfg);
/// Rejects s outside the gate's constraint box by more than 1e-6.
Vector predict_scaled(const NetworkParams& params, const DropoutGate& gate, const Vector& s,
                      const Vector& x);

// Head-only variants taking the gate input z.
Vector weight_scaled_from_gate(const NetworkParams& params, const DropoutGate& gate,
                               const Vector& z);
Vector mc_from_gate(const NetworkParams& params, const DropoutGate& gate, const Vector& z,
                    const McConfig& cfg);
Vector scaled_from_gate(const NetworkParams& params, const DropoutGate& gate,
                        const Vector& s, const Vector& z);

/// Throws ContractError when s has the wrong length or leaves the box.
void check_scale_vector(const DropoutGate& gate, const Vector& s, std::size_t width);

enum class InferenceMode {
  exact_arithmetic,
  exact_geometric,
  uniform_scaling,
  mc_arithmetic,
  mc_geometric,
  non_uniform,
};

std::string_view to_string(InferenceMode mode);
/// Parses the names produced by to_string; throws ConfigError otherwise.
InferenceMode parse_inference_mode(std::string_view name);

struct InferenceOptions {
  std::size_t mc_samples = 128;
  std::uint64_t mc_seed = 0;
  Vector scale;  // required for non_uniform
};

Vector predict_from_gate(const NetworkParams& params, const DropoutGate& gate,
                         InferenceMode mode, const InferenceOptions& opts, const Vector& z);
Vector predict(const NetworkParams& params, const DropoutGate& gate, InferenceMode mode,
               const InferenceOptions& opts, const Vector& x);

/// Gate inputs of every example (the frozen part of the network).
std::vector<Vector> gate_inputs(const NetworkParams& params, const DropoutGate& gate,
                                const Dataset& ds);

/// Fraction of examples whose argmax prediction differs from the label.
double error_rate(const NetworkParams& params, const DropoutGate& gate,
                  std::span<const Vector> gate_inputs, std::span<const std::size_t> labels,
                  InferenceMode mode, const InferenceOptions& opts);
double error_rate(const NetworkParams& params, const DropoutGate& gate, const Dataset& ds,
                  InferenceMode mode, const InferenceOptions& opts);

}  // namespace dropscale
