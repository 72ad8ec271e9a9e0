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

#include "dropscale/network.hpp"
#include "dropscale/tensor.hpp"

namespace dropscale {

/*
 Feasible set for a per-unit inference scale vector s:

   mean(s) = mean_target,  0 <= s_k <= upper_bound

 Classical dropout uses (p, 1); inverted dropout uses (1, 1/p), which for
 p = 0.5 is mean 1 with entries in [0, 2].
*/
struct ConstraintSet {
  double mean_target = 0.5;
  double upper_bound = 1.0;

  static ConstraintSet for_gate(const DropoutGate& gate);

  /// Throws ContractError unless 0 < mean_target <= upper_bound.
  void validate() const;
  /// Largest distance of any entry outside [0, upper_bound]; 0 when inside.
  double box_violation(const Vector& s) const;
  bool feasible(const Vector& s, double tol) const;

  friend bool operator==(const ConstraintSet&, const ConstraintSet&) = default;
};

/// The uniform point of the set, mean_target·1: plain weight scaling.
Vector uniform_scale(const ConstraintSet& cs, std::size_t width);

}  // namespace dropscale
