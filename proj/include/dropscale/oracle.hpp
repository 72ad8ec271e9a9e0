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
 Exact dropout prediction by enumerating all 2^n masks of the gate.

   exact_arithmetic  Σ_d Pr(d)·F(x, d)
   exact_geometric   renormalize(exp(Σ_d Pr(d)·log F(x, d)))

 with Pr(d) = p^|d| (1-p)^(n-|d|). Every approximation in inference.hpp is
 checked against these.
*/

#include <cstddef>
#include <cstdint>

#include "dropscale/inference.hpp"
#include "dropscale/network.hpp"

namespace dropscale {

inline constexpr std::size_t kMaxOracleWidth = 22;

/// p^ones·(1-p)^(width-ones).
double mask_weight(std::size_t ones, std::size_t width, double keep_prob);
double mask_weight(const Vector& mask, double keep_prob);
/// Σ over all 2^width masks, compensated. Throws past kMaxOracleWidth.
double total_mask_weight(std::size_t width, double keep_prob);

/// p here may be 0 (drop everything), unlike a training gate.
Vector exact_arithmetic(const NetworkParams& params, const DropoutGate& gate, const Vector& x);
Vector exact_geometric(const NetworkParams& params, const DropoutGate& gate, const Vector& x);

Vector exact_arithmetic_from_gate(const NetworkParams& params, const DropoutGate& gate,
                                  const Vector& z);
Vector exact_geometric_from_gate(const NetworkParams& params, const DropoutGate& gate,
                                 const Vector& z);

/// |method(x) − exact_arithmetic(x)| per class.
Vector approximation_gap(const NetworkParams& params, const DropoutGate& gate,
                         const Vector& x, InferenceMode method, const InferenceOptions& opts);

}  // namespace dropscale
