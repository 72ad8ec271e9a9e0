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
#include "dropscale/optim.hpp"

#include <cmath>

#include "dropscale/errors.hpp"

namespace dropscale {

Adam::Adam(std::size_t size, AdamSettings settings)
    : settings_(settings), m_(size, 0.0), v_(size, 0.0) {
  if (!(settings.learning_rate > 0.0) || !(settings.beta1 >= 0.0 && settings.beta1 < 1.0) ||
      !(settings.beta2 >= 0.0 && settings.beta2 < 1.0) || !(settings.epsilon > 0.0)) {
    throw ContractError("Adam: invalid settings");
  }
}

void Adam::step(std::span<double> params, std::span<const double> grad) {
  if (params.size() != m_.size() || grad.size() != m_.size()) {
    throw ContractError("Adam: parameter block size changed");
  }
  ++t_;
  beta1_pow_ *= settings_.beta1;
  beta2_pow_ *= settings_.beta2;
  const double c1 = 1.0 - beta1_pow_;
  const double c2 = 1.0 - beta2_pow_;
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = settings_.beta1 * m_[i] + (1.0 - settings_.beta1) * grad[i];
    v_[i] = settings_.beta2 * v_[i] + (1.0 - settings_.beta2) * grad[i] * grad[i];
    const double m_hat = m_[i] / c1;
    const double v_hat = v_[i] / c2;
    params[i] -= settings_.learning_rate * m_hat / (std::sqrt(v_hat) + settings_.epsilon);
  }
}

MomentumSgd::MomentumSgd(std::size_t size, double learning_rate, double momentum)
    : learning_rate_(learning_rate), momentum_(momentum), velocity_(size, 0.0) {
  if (!(learning_rate > 0.0) || !(momentum >= 0.0 && momentum < 1.0)) {
    throw ContractError("MomentumSgd: need learning_rate > 0 and 0 <= momentum < 1");
  }
}

void MomentumSgd::step(std::span<double> params, std::span<const double> grad) {
  if (params.size() != velocity_.size() || grad.size() != velocity_.size()) {
    throw ContractError("MomentumSgd: parameter block size changed");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    velocity_[i] = momentum_ * velocity_[i] + grad[i];
    params[i] -= learning_rate_ * velocity_[i];
  }
}

}  // namespace dropscale
