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
#include <ostream>
#include <string_view>

#include "dropscale/data.hpp"
#include "dropscale/network.hpp"

namespace dropscale {

enum class OptimizerKind { sgd_momentum, adam };

std::string_view to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(std::string_view name);

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::sgd_momentum;
  double learning_rate = 0.01;
  double momentum = 0.9;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 64;
  std::size_t early_stop_patience = 8;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Checkpoint {
  NetworkParams params;
  std::size_t epoch = 0;  // 0 is the initialization
  double val_error = 1.0;
};

/// Uniform weights in ±sqrt(6 / fan_in), zero biases. The "init" stream of
/// `seed` fills layers in order, rows then columns.
NetworkParams init_params(const NetworkSpec& spec, std::uint64_t seed);

/// Half-width of the init_params weight distribution for a layer.
double init_limit(std::size_t fan_in);

/*
 Mini-batch training with one fresh Bernoulli mask per example per
 presentation. Gradients are averaged over the batch. Validation error is
 measured with uniform weight scaling after initialization (epoch 0) and
 after every epoch; the best checkpoint wins, earlier on ties. Training
 stops after `early_stop_patience` epochs without strict improvement
 (0 disables early stopping).

 Streams of `cfg.seed`: "init", ("shuffle", epoch), ("mask", epoch). With
 keep_prob = 1 no masks are drawn at all.

 `log`, if given, receives "epoch,train_loss,val_error" CSV lines (with a
 header). Non-finite loss throws NumericError.
*/
Checkpoint train(const NetworkSpec& spec, const DropoutGate& gate, const Dataset& train_set,
                 const Dataset& val_set, const TrainConfig& cfg, std::ostream* log = nullptr);

/// Mean cross-entropy under uniform weight scaling.
double mean_loss(const NetworkParams& params, const DropoutGate& gate, const Dataset& ds);

}  // namespace dropscale
