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
#include "dropscale/oracle.hpp"

#include <bit>
#include <cmath>
#include <string>

#include "dropscale/errors.hpp"

namespace dropscale {

namespace {

// The oracle accepts p = 0, which DropoutGate::width rejects.
std::size_t oracle_width(const NetworkParams& params, const DropoutGate& gate) {
  if (gate.position >= params.spec.size()) {
    throw ContractError("oracle: gate position beyond the network");
  }
  if (!(gate.keep_prob >= 0.0 && gate.keep_prob <= 1.0)) {
    throw ContractError("oracle: keep probability outside [0, 1]");
  }
  const std::size_t width = params.spec[gate.position].input_dim;
  if (width > kMaxOracleWidth) {
    throw ContractError("oracle: gated width " + std::to_string(width) +
                        " exceeds the enumeration cap of " +
                        std::to_string(kMaxOracleWidth) + " units; use Monte Carlo bounds");
  }
  return width;
}

Vector enumerate(const NetworkParams& params, const DropoutGate& gate, const Vector& z,
                 MeanKind kind) {
  const std::size_t width = oracle_width(params, gate);
  if (z.size() != width) {
    throw ContractError("oracle: gate input length does not match gated width");
  }
  const double p = gate.keep_prob;
  const double factor = gate.convention == DropoutConvention::inverted && p > 0.0 ? 1.0 / p : 1.0;
  auto multiplier_of = [&](std::uint64_t index) {
    Vector g = mask_from_index(index, width);
    for (double& v : g) v *= factor;
    return g;
  };
  auto weight_of = [&](std::uint64_t index) {
    return mask_weight(static_cast<std::size_t>(std::popcount(index)), width, p);
  };
  return combine_submodels(params, gate, z, std::uint64_t{1} << width, multiplier_of,
                           weight_of, kind);
}

}  // namespace

double mask_weight(std::size_t ones, std::size_t width, double keep_prob) {
  if (ones > width) throw ContractError("mask_weight: more ones than units");
  return std::pow(keep_prob, static_cast<double>(ones)) *
         std::pow(1.0 - keep_prob, static_cast<double>(width - ones));
}

double mask_weight(const Vector& mask, double keep_prob) {
  std::size_t ones = 0;
  for (double d : mask) {
    if (d != 0.0 && d != 1.0) throw ContractError("mask_weight: entries must be 0 or 1");
    ones += d == 1.0;
  }
  return mask_weight(ones, mask.size(), keep_prob);
}

double total_mask_weight(std::size_t width, double keep_prob) {
  if (width > kMaxOracleWidth) throw ContractError("total_mask_weight: width above cap");
  CompensatedSum acc;
  const std::uint64_t count = std::uint64_t{1} << width;
  for (std::uint64_t index = 0; index < count; ++index) {
    acc.add(mask_weight(static_cast<std::size_t>(std::popcount(index)), width, keep_prob));
  }
  return acc.value();
}

Vector exact_arithmetic_from_gate(const NetworkParams& params, const DropoutGate& gate,
                                  const Vector& z) {
  return enumerate(params, gate, z, MeanKind::arithmetic);
}

Vector exact_geometric_from_gate(const NetworkParams& params, const DropoutGate& gate,
                                 const Vector& z) {
  return enumerate(params, gate, z, MeanKind::geometric);
}

Vector exact_arithmetic(const NetworkParams& params, const DropoutGate& gate, const Vector& x) {
  oracle_width(params, gate);
  // gate_input validates p > 0; the layers below the gate do not use it.
  DropoutGate probe = gate;
  probe.keep_prob = 1.0;
  return exact_arithmetic_from_gate(params, gate, gate_input(params, probe, x));
}

Vector exact_geometric(const NetworkParams& params, const DropoutGate& gate, const Vector& x) {
  oracle_width(params, gate);
  DropoutGate probe = gate;
  probe.keep_prob = 1.0;
  return exact_geometric_from_gate(params, gate, gate_input(params, probe, x));
}

Vector approximation_gap(const NetworkParams& params, const DropoutGate& gate,
                         const Vector& x, InferenceMode method, const InferenceOptions& opts) {
  const Vector z = gate_input(params, gate, x);
  const Vector exact = exact_arithmetic_from_gate(params, gate, z);
  const Vector approx = predict_from_gate(params, gate, method, opts, z);
  Vector gap(exact.size());
  for (std::size_t c = 0; c < gap.size(); ++c) gap[c] = std::abs(approx[c] - exact[c]);
  return gap;
}

}  // namespace dropscale
