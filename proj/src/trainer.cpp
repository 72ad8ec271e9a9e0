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
#include "dropscale/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <memory>
#include <numeric>
#include <string>
#include <variant>

#include "dropscale/errors.hpp"
#include "dropscale/inference.hpp"
#include "dropscale/optim.hpp"

namespace dropscale {

namespace {

// One optimizer per parameter block (each weight matrix and bias vector).
class BlockOptimizer {
 public:
  BlockOptimizer(const NetworkParams& params, const TrainConfig& cfg) {
    for (const auto& layer : params.layers) {
      add_block(layer.weights.flat().size(), cfg);
      add_block(layer.bias.size(), cfg);
    }
  }

  void step(NetworkParams& params, const Gradients& grads) {
    std::size_t b = 0;
    for (std::size_t i = 0; i < params.layers.size(); ++i) {
      step_block(b++, params.layers[i].weights.flat(), grads.weights[i].flat());
      step_block(b++, params.layers[i].bias.span(), grads.bias[i].span());
    }
  }

 private:
  void add_block(std::size_t size, const TrainConfig& cfg) {
    if (cfg.optimizer == OptimizerKind::adam) {
      blocks_.emplace_back(
          Adam(size, {cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps}));
    } else {
      blocks_.emplace_back(MomentumSgd(size, cfg.learning_rate, cfg.momentum));
    }
  }

  void step_block(std::size_t b, std::span<double> params, std::span<const double> grad) {
    std::visit([&](auto& opt) { opt.step(params, grad); }, blocks_[b]);
  }

  std::vector<std::variant<Adam, MomentumSgd>> blocks_;
};

void clear(Gradients& g) {
  for (auto& w : g.weights) std::fill(w.flat().begin(), w.flat().end(), 0.0);
  for (auto& b : g.bias) std::fill(b.begin(), b.end(), 0.0);
}

double validation_error(const NetworkParams& params, const DropoutGate& gate,
                        const Dataset& val) {
  return error_rate(params, gate, val, InferenceMode::uniform_scaling, {});
}

void log_epoch(std::ostream* log, std::size_t epoch, double loss, double val_error) {
  if (log == nullptr) return;
  char line[96];
  std::snprintf(line, sizeof line, "%zu,%.10g,%.10g\n", epoch, loss, val_error);
  *log << line;
}

}  // namespace

std::string_view to_string(OptimizerKind kind) {
  return kind == OptimizerKind::adam ? "adam" : "sgd_momentum";
}

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "adam") return OptimizerKind::adam;
  if (name == "sgd_momentum" || name == "sgd") return OptimizerKind::sgd_momentum;
  throw ConfigError("unknown optimizer '" + std::string(name) +
                    "' (expected sgd_momentum or adam)");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train: momentum must be in [0, 1)");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ConfigError("train: Adam betas must be in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("train: adam_eps must be positive");
  if (batch_size == 0) throw ConfigError("train: batch_size must be at least 1");
}

double init_limit(std::size_t fan_in) { return std::sqrt(6.0 / static_cast<double>(fan_in)); }

NetworkParams init_params(const NetworkSpec& spec, std::uint64_t seed) {
  NetworkParams params = zero_params(spec);
  RngStream rng(seed, derive_stream_id("init"));
  for (auto& layer : params.layers) {
    const double limit = init_limit(layer.weights.cols());
    for (double& w : layer.weights.flat()) w = (2.0 * rng.uniform() - 1.0) * limit;
  }
  return params;
}

double mean_loss(const NetworkParams& params, const DropoutGate& gate, const Dataset& ds) {
  if (ds.empty()) throw ContractError("mean_loss: empty dataset");
  CompensatedSum acc;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    acc.add(cross_entropy(predict_weight_scaled(params, gate, ds.features[i]), ds.labels[i]));
  }
  return acc.value() / static_cast<double>(ds.size());
}

Checkpoint train(const NetworkSpec& spec, const DropoutGate& gate, const Dataset& train_set,
                 const Dataset& val_set, const TrainConfig& cfg, std::ostream* log) {
  cfg.validate();
  validate_spec(spec);
  if (spec.back().activation != Activation::softmax) {
    throw ContractError("train: the output layer must be softmax");
  }
  if (train_set.empty()) throw DataError(DataErrorKind::too_small, "train: empty training set");
  if (val_set.empty()) throw DataError(DataErrorKind::too_small, "train: empty validation set");
  train_set.validate();
  val_set.validate();
  if (train_set.feature_dim() != spec.front().input_dim ||
      val_set.feature_dim() != spec.front().input_dim) {
    throw ContractError("train: feature dimension does not match the network input");
  }
  if (train_set.class_count > spec.back().output_dim ||
      val_set.class_count > spec.back().output_dim) {
    throw ContractError("train: more classes than network outputs");
  }
  const std::size_t width = gate.width(spec);
  const bool sample_masks = gate.keep_prob < 1.0;

  NetworkParams params = init_params(spec, cfg.seed);
  Checkpoint best{params, 0, validation_error(params, gate, val_set)};
  if (log != nullptr) *log << "epoch,train_loss,val_error\n";
  log_epoch(log, 0, mean_loss(params, gate, train_set), best.val_error);

  BlockOptimizer optimizer(params, cfg);
  Gradients grads = zero_gradients(params);
  std::vector<std::size_t> order(train_set.size());
  std::size_t stale_epochs = 0;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    RngStream shuffle_rng(cfg.seed, derive_stream_id("shuffle", epoch));
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    RngStream mask_rng(cfg.seed, derive_stream_id("mask", epoch));

    CompensatedSum epoch_loss;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      const double weight = 1.0 / static_cast<double>(stop - start);
      clear(grads);
      for (std::size_t j = start; j < stop; ++j) {
        const std::size_t i = order[j];
        const ForwardMode mode =
            sample_masks ? ForwardMode{MaskedMode{bernoulli_mask(mask_rng, width, gate.keep_prob)}}
                         : ForwardMode{PlainMode{}};
        const ForwardResult fr = forward(params, gate, mode, train_set.features[i]);
        const double loss = cross_entropy(fr.output, train_set.labels[i]);
        if (!std::isfinite(loss)) {
          throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) +
                             ", example " + std::to_string(i) +
                             "; lower the learning rate");
        }
        epoch_loss.add(loss);
        accumulate_param_gradients(params, fr.cache, train_set.labels[i], weight, grads);
      }
      optimizer.step(params, grads);
    }

    const double train_loss = epoch_loss.value() / static_cast<double>(order.size());
    const double val_error = validation_error(params, gate, val_set);
    log_epoch(log, epoch, train_loss, val_error);
    if (!std::isfinite(train_loss)) {
      throw NumericError("train: diverged at epoch " + std::to_string(epoch));
    }
    if (val_error < best.val_error) {
      best = {params, epoch, val_error};
      stale_epochs = 0;
    } else if (++stale_epochs >= cfg.early_stop_patience && cfg.early_stop_patience > 0) {
      break;
    }
  }
  return best;
}

}  // namespace dropscale
