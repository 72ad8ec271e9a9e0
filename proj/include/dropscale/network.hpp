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
 Feedforward network with a single dropout gate.

 The gate sits on the INPUT of layer `position`: that layer computes
 f(W (g ⊙ z) + b) where z is the output of the layer below and g is the gate
 multiplier chosen by the forward mode:

   Plain   g = 1
   Masked  g = d            (classical)   or d / p   (inverted)
   Scaled  g = s            (no extra factor under either convention)

 Everything below the gate does not depend on g, so inference code evaluates
 `gate_input` once per example and re-runs only the head
 (`forward_from_gate`) per mask or scale vector.
*/

#include <cstddef>
#include <string_view>
#include <variant>
#include <vector>

#include "dropscale/tensor.hpp"

namespace dropscale {

enum class Activation { relu, linear, softmax };

struct LayerSpec {
  std::size_t input_dim = 0;
  std::size_t output_dim = 0;
  Activation activation = Activation::relu;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

using NetworkSpec = std::vector<LayerSpec>;

/// Throws ContractError unless the layers chain and softmax is final-only.
void validate_spec(const NetworkSpec& spec);

/// MLP spec: `widths` = {in, h1, ..., classes}; ReLU hidden, softmax output.
NetworkSpec mlp_spec(const std::vector<std::size_t>& widths);

struct Layer {
  Matrix weights;  // output_dim × input_dim
  Vector bias;

  friend bool operator==(const Layer&, const Layer&) = default;
};

struct NetworkParams {
  NetworkSpec spec;
  std::vector<Layer> layers;

  std::size_t input_dim() const { return spec.front().input_dim; }
  std::size_t output_dim() const { return spec.back().output_dim; }

  friend bool operator==(const NetworkParams&, const NetworkParams&) = default;
};

/// Zero-initialized parameters for `spec`.
NetworkParams zero_params(const NetworkSpec& spec);

enum class DropoutConvention {
  classical,  // train with d, infer with p·W
  inverted,   // train with d/p, infer with W
};

struct DropoutGate {
  std::size_t position = 0;  // layer whose input is gated
  double keep_prob = 0.5;
  DropoutConvention convention = DropoutConvention::classical;

  /// Gated width for `spec`, after validating position and keep_prob.
  std::size_t width(const NetworkSpec& spec) const;

  friend bool operator==(const DropoutGate&, const DropoutGate&) = default;
};

std::string_view to_string(Activation a);
Activation parse_activation(std::string_view name);
std::string_view to_string(DropoutConvention c);
DropoutConvention parse_convention(std::string_view name);

/// Gate before the output layer, the placement used throughout.
DropoutGate output_gate(const NetworkSpec& spec, double keep_prob,
                        DropoutConvention convention = DropoutConvention::classical);

struct PlainMode {};
struct MaskedMode {
  Vector mask;  // entries in {0, 1}
};
struct ScaledMode {
  Vector scale;
};
using ForwardMode = std::variant<PlainMode, MaskedMode, ScaledMode>;

enum class ModeKind { plain, masked, scaled };

/// Activation record for reverse mode. Covers layers [first_layer, L).
struct ForwardCache {
  std::size_t first_layer = 0;
  std::size_t gate_position = 0;
  ModeKind mode = ModeKind::plain;
  Vector gate_input;       // z at the gate, before gating
  Vector gate_multiplier;  // g; empty for Plain
  std::vector<Vector> inputs;  // per layer, after gating
  std::vector<Vector> pre_activations;
  Vector output;
};

struct ForwardResult {
  Vector output;  // probabilities for a softmax head, raw values otherwise
  ForwardCache cache;
};

ForwardResult forward(const NetworkParams& params, const DropoutGate& gate,
                      const ForwardMode& mode, const Vector& x);

/// Output of the layer below the gate (z), i.e. the ungated gate input.
Vector gate_input(const NetworkParams& params, const DropoutGate& gate, const Vector& x);

/// Runs layers [gate.position, L) from a precomputed gate input z.
ForwardResult forward_from_gate(const NetworkParams& params, const DropoutGate& gate,
                                const ForwardMode& mode, const Vector& z);

/// Same as forward_from_gate(...).output without building a cache.
Vector head_output(const NetworkParams& params, const DropoutGate& gate,
                   const Vector& gate_multiplier, const Vector& z);

/// Gate multiplier g for `mode`; empty for Plain. Validates lengths and masks.
Vector gate_multiplier(const DropoutGate& gate, const ForwardMode& mode, std::size_t width);

struct Gradients {
  std::vector<Matrix> weights;
  std::vector<Vector> bias;
};

Gradients zero_gradients(const NetworkParams& params);

/*
 Reverse-mode gradients of cross-entropy on a softmax head. The gate
 multiplier is a constant in the chain rule. Requires a cache produced by
 `forward` (all layers present).
*/
Gradients backprop_params(const NetworkParams& params, const ForwardCache& cache,
                          std::size_t label);
/// Adds the gradient into `acc` scaled by `weight`; avoids reallocations in
/// mini-batch loops.
void accumulate_param_gradients(const NetworkParams& params, const ForwardCache& cache,
                                std::size_t label, double weight, Gradients& acc);
/// Gradient for an arbitrary loss given ∂loss/∂output.
Gradients backprop_params(const NetworkParams& params, const ForwardCache& cache,
                          const Vector& output_grad);

/// ∂loss/∂s_k = z_k·(Wᵀδ)_k. Needs a Scaled-mode cache.
Vector backprop_scale(const NetworkParams& params, const ForwardCache& cache,
                      std::size_t label);
Vector backprop_scale(const NetworkParams& params, const ForwardCache& cache,
                      const Vector& output_grad);

}  // namespace dropscale
