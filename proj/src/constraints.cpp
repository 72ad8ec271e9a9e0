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
#include "dropscale/constraints.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "dropscale/errors.hpp"

namespace dropscale {

ConstraintSet ConstraintSet::for_gate(const DropoutGate& gate) {
  if (!(gate.keep_prob > 0.0 && gate.keep_prob <= 1.0)) {
    throw ContractError("constraint set: keep probability must be in (0, 1]");
  }
  if (gate.convention == DropoutConvention::classical) return {gate.keep_prob, 1.0};
  return {1.0, 1.0 / gate.keep_prob};
}

void ConstraintSet::validate() const {
  if (!(mean_target > 0.0 && mean_target <= upper_bound && std::isfinite(upper_bound))) {
    throw ContractError("constraint set: need 0 < mean target <= upper bound, got mean " +
                        std::to_string(mean_target) + " bound " +
                        std::to_string(upper_bound));
  }
}

double ConstraintSet::box_violation(const Vector& s) const {
  double worst = 0.0;
  for (double v : s) {
    if (!std::isfinite(v)) return std::numeric_limits<double>::infinity();
    worst = std::max({worst, v - upper_bound, -v});
  }
  return worst;
}

bool ConstraintSet::feasible(const Vector& s, double tol) const {
  return box_violation(s) <= tol;
}

Vector uniform_scale(const ConstraintSet& cs, std::size_t width) {
  return Vector(width, cs.mean_target);
}

}  // namespace dropscale
