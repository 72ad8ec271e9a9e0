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

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace dropscale {

struct AdamSettings {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction over one flat parameter block.
class Adam {
 public:
  Adam(std::size_t size, AdamSettings settings);

  void step(std::span<double> params, std::span<const double> grad);
  std::uint64_t steps() const noexcept { return t_; }

 private:
  AdamSettings settings_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::uint64_t t_ = 0;
  double beta1_pow_ = 1.0;
  double beta2_pow_ = 1.0;
};

/// Heavy-ball SGD: velocity = momentum·velocity + grad; param -= lr·velocity.
class MomentumSgd {
 public:
  MomentumSgd(std::size_t size, double learning_rate, double momentum);

  void step(std::span<double> params, std::span<const double> grad);

 private:
  double learning_rate_;
  double momentum_;
  std::vector<double> velocity_;
};

}  // namespace dropscale
