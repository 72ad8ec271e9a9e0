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
#include "dropscale/network.hpp"

#include <string>

#include "dropscale/errors.hpp"

namespace dropscale {

namespace {

void apply_activation(Activation act, Vector& v) {
  switch (act) {
    case Activation::relu:
      for (double& x : v) x = x > 0.0 ? x : 0.0;
      break;
    case Activation::linear:
      break;
    case Activation::softmax:
      v = softmax(v);
      break;
  }
}

Vector affine(const Layer& layer, const Vector& input) {
  Vector out = matvec(layer.weights, input);
  for (std::size_t r = 0; r < out.size(); ++r) out[r] += layer.bias[r];
  return out;
}

void check_params(const NetworkParams& params) {
  if (params.layers.size() != params.spec.size()) {
    throw ContractError("network: parameter/spec layer count mismatch");
  }
}

// δ at the final pre-activation, given ∂loss/∂output.
Vector output_delta(const NetworkParams& params, const ForwardCache& cache,
                    const Vector& output_grad) {
  const LayerSpec& last = params.spec.back();
  if (output_grad.size() != last.output_dim) {
    throw ContractError("backprop: output gradient has length " +
                        std::to_string(output_grad.size()) + ", expected " +
                        std::to_string(last.output_dim));
  }
  Vector delta = output_grad;
  switch (last.activation) {
    case Activation::softmax: {
      const double proj = dot(output_grad.span(), cache.output.span());
      for (std::size_t k = 0; k < delta.size(); ++k) {
        delta[k] = cache.output[k] * (output_grad[k] - proj);
      }
      break;
    }
    case Activation::relu: {
      const Vector& pre = cache.pre_activations.back();
      for (std::size_t k = 0; k < delta.size(); ++k) {
        if (!(pre[k] > 0.0)) delta[k] = 0.0;
      }
      break;
    }
    case Activation::linear:
      break;
  }
  return delta;
}

Vector softmax_ce_delta(const NetworkParams& params, const ForwardCache& cache,
                        std::size_t label) {
  if (params.spec.back().activation != Activation::softmax) {
    throw ContractError("backprop: cross-entropy needs a softmax output layer");
  }
  if (label >= cache.output.size()) {
    throw ContractError("backprop: label " + std::to_string(label) +
                        " out of range for " + std::to_string(cache.output.size()) +
                        " classes");
  }
  Vector delta = cache.output;
  delta[label] -= 1.0;
  return delta;
}

void check_cache(const NetworkParams& params, const ForwardCache& cache) {
  check_params(params);
  const std::size_t layers = params.layers.size();
  if (cache.first_layer >= layers ||
      cache.inputs.size() != layers - cache.first_layer ||
      cache.pre_activations.size() != cache.inputs.size() ||
      cache.output.size() != params.output_dim()) {
    throw ContractError("backprop: cache does not match these parameters");
  }
  for (std::size_t i = cache.first_layer; i < layers; ++i) {
    const std::size_t local = i - cache.first_layer;
    if (cache.inputs[local].size() != params.spec[i].input_dim ||
        cache.pre_activations[local].size() != params.spec[i].output_dim) {
      throw ContractError("backprop: stale cache (layer " + std::to_string(i) +
                          " dimensions differ)");
    }
  }
}

// Walks δ down from the output to `stop_layer`, accumulating parameter
// gradients when `acc` is given. With `want_upstream`, returns Wᵀδ at
// `stop_layer`'s input, before any gate multiplier is applied.
Vector run_backward(const NetworkParams& params, const ForwardCache& cache,
                    Vector delta, std::size_t stop_layer, double weight,
                    Gradients* acc, bool want_upstream) {
  const std::size_t layers = params.layers.size();
  for (std::size_t i = layers; i-- > stop_layer;) {
    const std::size_t local = i - cache.first_layer;
    const Vector& input = cache.inputs[local];
    if (acc != nullptr) {
      Matrix& dw = acc->weights[i];
      Vector& db = acc->bias[i];
      for (std::size_t r = 0; r < delta.size(); ++r) {
        const double dr = delta[r] * weight;
        db[r] += dr;
        if (dr == 0.0) continue;
        auto row = dw.row(r);
        for (std::size_t c = 0; c < input.size(); ++c) row[c] += dr * input[c];
      }
    }
    if (i == stop_layer) {
      return want_upstream ? matvec_transposed(params.layers[i].weights, delta) : Vector{};
    }
    Vector upstream = matvec_transposed(params.layers[i].weights, delta);
    if (i == cache.gate_position && !cache.gate_multiplier.empty()) {
      upstream = hadamard(upstream, cache.gate_multiplier);
    }
    const LayerSpec& below = params.spec[i - 1];
    const Vector& pre = cache.pre_activations[local - 1];
    if (below.activation == Activation::relu) {
      for (std::size_t k = 0; k < upstream.size(); ++k) {
        if (!(pre[k] > 0.0)) upstream[k] = 0.0;
      }
    }
    delta = std::move(upstream);
  }
  return {};
}

Vector scale_gradient(const NetworkParams& params, const ForwardCache& cache,
                      Vector delta) {
  check_cache(params, cache);
  if (cache.mode != ModeKind::scaled) {
    throw ContractError("backprop_scale: cache was not produced in Scaled mode");
  }
  const Vector upstream =
      run_backward(params, cache, std::move(delta), cache.gate_position, 1.0, nullptr, true);
  return hadamard(cache.gate_input, upstream);
}

}  // namespace

void validate_spec(const NetworkSpec& spec) {
  if (spec.empty()) throw ContractError("network: empty layer list");
  for (std::size_t i = 0; i < spec.size(); ++i) {
    if (spec[i].input_dim == 0 || spec[i].output_dim == 0) {
      throw ContractError("network: layer " + std::to_string(i) + " has a zero dimension");
    }
    if (i + 1 < spec.size() && spec[i].output_dim != spec[i + 1].input_dim) {
      throw ContractError("network: layer " + std::to_string(i) + " output " +
                          std::to_string(spec[i].output_dim) +
                          " does not chain into layer input " +
                          std::to_string(spec[i + 1].input_dim));
    }
    if (spec[i].activation == Activation::softmax && i + 1 != spec.size()) {
      throw ContractError("network: softmax is only allowed on the final layer");
    }
  }
}

NetworkSpec mlp_spec(const std::vector<std::size_t>& widths) {
  if (widths.size() < 2) throw ContractError("mlp_spec: need at least input and output widths");
  NetworkSpec spec;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const bool last = i + 2 == widths.size();
    spec.push_back({widths[i], widths[i + 1], last ? Activation::softmax : Activation::relu});
  }
  validate_spec(spec);
  return spec;
}

NetworkParams zero_params(const NetworkSpec& spec) {
  validate_spec(spec);
  NetworkParams params{spec, {}};
  for (const auto& l : spec) {
    params.layers.push_back({Matrix(l.output_dim, l.input_dim), Vector(l.output_dim)});
  }
  return params;
}

std::size_t DropoutGate::width(const NetworkSpec& spec) const {
  if (position >= spec.size()) {
    throw ContractError("dropout gate: position " + std::to_string(position) +
                        " beyond " + std::to_string(spec.size()) + " layers");
  }
  if (!(keep_prob > 0.0 && keep_prob <= 1.0)) {
    throw ContractError("dropout gate: keep probability must be in (0, 1], got " +
                        std::to_string(keep_prob));
  }
  return spec[position].input_dim;
}

DropoutGate output_gate(const NetworkSpec& spec, double keep_prob,
                        DropoutConvention convention) {
  DropoutGate gate{spec.size() - 1, keep_prob, convention};
  gate.width(spec);
  return gate;
}

Vector gate_multiplier(const DropoutGate& gate, const ForwardMode& mode, std::size_t width) {
  if (std::holds_alternative<PlainMode>(mode)) return {};
  if (const auto* masked = std::get_if<MaskedMode>(&mode)) {
    if (masked->mask.size() != width) {
      throw ContractError("forward: mask length " + std::to_string(masked->mask.size()) +
                          " does not match gated width " + std::to_string(width));
    }
    const double factor =
        gate.convention == DropoutConvention::inverted ? 1.0 / gate.keep_prob : 1.0;
    Vector g(width);
    for (std::size_t k = 0; k < width; ++k) {
      const double d = masked->mask[k];
      if (d != 0.0 && d != 1.0) {
        throw ContractError("forward: mask entry " + std::to_string(k) + " is " +
                            std::to_string(d) + ", expected 0 or 1");
      }
      g[k] = d * factor;
    }
    return g;
  }
  const auto& s = std::get<ScaledMode>(mode).scale;
  if (s.size() != width) {
    throw ContractError("forward: scale vector length " + std::to_string(s.size()) +
                        " does not match gated width " + std::to_string(width));
  }
  return s;
}

Vector gate_input(const NetworkParams& params, const DropoutGate& gate, const Vector& x) {
  check_params(params);
  gate.width(params.spec);
  if (x.size() != params.input_dim()) {
    throw ContractError("forward: input length " + std::to_string(x.size()) +
                        " does not match network input " +
                        std::to_string(params.input_dim()));
  }
  Vector z = x;
  for (std::size_t i = 0; i < gate.position; ++i) {
    z = affine(params.layers[i], z);
    apply_activation(params.spec[i].activation, z);
  }
  return z;
}

Vector head_output(const NetworkParams& params, const DropoutGate& gate,
                   const Vector& multiplier, const Vector& z) {
  Vector v = multiplier.empty() ? z : hadamard(z, multiplier);
  for (std::size_t i = gate.position; i < params.layers.size(); ++i) {
    v = affine(params.layers[i], v);
    apply_activation(params.spec[i].activation, v);
  }
  return v;
}

namespace {

ModeKind kind_of(const ForwardMode& mode) {
  if (std::holds_alternative<PlainMode>(mode)) return ModeKind::plain;
  if (std::holds_alternative<MaskedMode>(mode)) return ModeKind::masked;
  return ModeKind::scaled;
}

ForwardResult run_forward(const NetworkParams& params, const DropoutGate& gate,
                          const ForwardMode& mode, const Vector& input,
                          std::size_t first_layer) {
  const std::size_t width = gate.width(params.spec);
  ForwardCache cache;
  cache.first_layer = first_layer;
  cache.gate_position = gate.position;
  cache.mode = kind_of(mode);
  cache.gate_multiplier = gate_multiplier(gate, mode, width);

  Vector v = input;
  for (std::size_t i = first_layer; i < params.layers.size(); ++i) {
    if (i == gate.position) {
      cache.gate_input = v;
      if (!cache.gate_multiplier.empty()) v = hadamard(v, cache.gate_multiplier);
    }
    Vector pre = affine(params.layers[i], v);
    cache.inputs.push_back(std::move(v));
    v = pre;
    apply_activation(params.spec[i].activation, v);
    cache.pre_activations.push_back(std::move(pre));
  }
  cache.output = v;
  return {std::move(v), std::move(cache)};
}

}  // namespace

ForwardResult forward(const NetworkParams& params, const DropoutGate& gate,
                      const ForwardMode& mode, const Vector& x) {
  check_params(params);
  if (x.size() != params.input_dim()) {
    throw ContractError("forward: input length " + std::to_string(x.size()) +
                        " does not match network input " +
                        std::to_string(params.input_dim()));
  }
  return run_forward(params, gate, mode, x, 0);
}

ForwardResult forward_from_gate(const NetworkParams& params, const DropoutGate& gate,
                                const ForwardMode& mode, const Vector& z) {
  check_params(params);
  const std::size_t width = gate.width(params.spec);
  if (z.size() != width) {
    throw ContractError("forward_from_gate: gate input length " + std::to_string(z.size()) +
                        " does not match gated width " + std::to_string(width));
  }
  return run_forward(params, gate, mode, z, gate.position);
}

Gradients zero_gradients(const NetworkParams& params) {
  Gradients g;
  for (const auto& layer : params.layers) {
    g.weights.emplace_back(layer.weights.rows(), layer.weights.cols());
    g.bias.emplace_back(layer.bias.size());
  }
  return g;
}

void accumulate_param_gradients(const NetworkParams& params, const ForwardCache& cache,
                                std::size_t label, double weight, Gradients& acc) {
  check_cache(params, cache);
  if (cache.first_layer != 0) {
    throw ContractError("backprop_params: cache covers only the head; use forward()");
  }
  run_backward(params, cache, softmax_ce_delta(params, cache, label), 0, weight, &acc, false);
}

Gradients backprop_params(const NetworkParams& params, const ForwardCache& cache,
                          std::size_t label) {
  Gradients g = zero_gradients(params);
  accumulate_param_gradients(params, cache, label, 1.0, g);
  return g;
}

Gradients backprop_params(const NetworkParams& params, const ForwardCache& cache,
                          const Vector& output_grad) {
  check_cache(params, cache);
  if (cache.first_layer != 0) {
    throw ContractError("backprop_params: cache covers only the head; use forward()");
  }
  Gradients g = zero_gradients(params);
  run_backward(params, cache, output_delta(params, cache, output_grad), 0, 1.0, &g, false);
  return g;
}

Vector backprop_scale(const NetworkParams& params, const ForwardCache& cache,
                      std::size_t label) {
  check_cache(params, cache);
  return scale_gradient(params, cache, softmax_ce_delta(params, cache, label));
}

Vector backprop_scale(const NetworkParams& params, const ForwardCache& cache,
                      const Vector& output_grad) {
  check_cache(params, cache);
  return scale_gradient(params, cache, output_delta(params, cache, output_grad));
}

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::linear: return "linear";
    case Activation::softmax: return "softmax";
  }
  return "?";
}

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::relu;
  if (name == "linear") return Activation::linear;
  if (name == "softmax") return Activation::softmax;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

std::string_view to_string(DropoutConvention c) {
  return c == DropoutConvention::classical ? "classical" : "inverted";
}

DropoutConvention parse_convention(std::string_view name) {
  if (name == "classical") return DropoutConvention::classical;
  if (name == "inverted") return DropoutConvention::inverted;
  throw ConfigError("unknown dropout convention '" + std::string(name) +
                    "' (expected classical or inverted)");
}

}  // namespace dropscale
