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
#include <cmath>
#include <random>

#include "doctest.h"
#include "dropscale/errors.hpp"
#include "dropscale/inference.hpp"
#include "dropscale/network.hpp"
#include "reference.hpp"

using namespace dropscale;
using testsupport::central_difference;
using testsupport::random_params;
using testsupport::random_vector;

namespace {

double vec_rel_error(const Vector& g, const std::vector<double>& fd) {
  double diff = 0.0, scale = 1e-8;
  for (std::size_t i = 0; i < fd.size(); ++i) {
    diff = std::max(diff, std::abs(g[i] - fd[i]));
    scale = std::max({scale, std::abs(fd[i]), std::abs(g[i])});
  }
  return diff / scale;
}

// Smallest |pre-activation| over the hidden ReLU layers; FD is unreliable
// within a step of a kink.
double kink_distance(const ForwardCache& cache, const NetworkParams& params) {
  double d = 1e300;
  for (std::size_t i = 0; i < cache.pre_activations.size(); ++i) {
    if (params.spec[cache.first_layer + i].activation != Activation::relu) continue;
    for (double v : cache.pre_activations[i]) d = std::min(d, std::abs(v));
  }
  return d;
}

}  // namespace

TEST_CASE("spec validation") {
  CHECK_NOTHROW(validate_spec(mlp_spec({4, 3, 2})));
  CHECK_THROWS_AS(validate_spec({{4, 3, Activation::relu}, {2, 2, Activation::softmax}}),
                  ContractError);
  CHECK_THROWS_AS(validate_spec({{4, 3, Activation::softmax}, {3, 2, Activation::softmax}}),
                  ContractError);
  CHECK_THROWS_AS(validate_spec({}), ContractError);
  const auto spec = mlp_spec({4, 3, 2});
  CHECK(spec[0].activation == Activation::relu);
  CHECK(spec[1].activation == Activation::softmax);
}

TEST_CASE("gate validation") {
  const auto spec = mlp_spec({4, 3, 2});
  CHECK(output_gate(spec, 0.5).position == 1);
  CHECK(output_gate(spec, 0.5).width(spec) == 3);
  CHECK_THROWS_AS((DropoutGate{1, 0.0}.width(spec)), ContractError);
  CHECK_THROWS_AS((DropoutGate{1, 1.5}.width(spec)), ContractError);
  CHECK_THROWS_AS((DropoutGate{2, 0.5}.width(spec)), ContractError);
  CHECK(DropoutGate{0, 1.0}.width(spec) == 4);
}

TEST_CASE("all-ones mask equals plain forward bit for bit") {
  const auto spec = mlp_spec({5, 7, 3});
  const auto params = random_params(spec, 1);
  const auto gate = output_gate(spec, 0.5);
  const Vector x(random_vector(5, 2, 0, 1));
  const auto plain = forward(params, gate, PlainMode{}, x).output;
  const auto masked = forward(params, gate, MaskedMode{Vector(7, 1.0)}, x).output;
  CHECK(plain == masked);
  CHECK(std::abs(sum(plain.span()) - 1.0) <= 1e-12);
  for (double v : plain) CHECK(v >= 0.0);
}

TEST_CASE("scaled by p equals weight scaling") {
  const auto spec = mlp_spec({5, 7, 3});
  const auto params = random_params(spec, 3);
  const auto gate = output_gate(spec, 0.3);
  const Vector x(random_vector(5, 4, 0, 1));
  const auto scaled = forward(params, gate, ScaledMode{Vector(7, 0.3)}, x).output;
  CHECK(max_abs_diff(scaled, predict_weight_scaled(params, gate, x)) <= 1e-15);
}

TEST_CASE("linear head hand example") {
  NetworkParams params{{{2, 1, Activation::linear}}, {Layer{Matrix{{1, 1}}, Vector{0}}}};
  const DropoutGate gate{0, 0.5, DropoutConvention::classical};
  const Vector x{2, 4};
  CHECK(forward(params, gate, MaskedMode{Vector{1, 0}}, x).output == Vector{2});
  CHECK(forward(params, gate, MaskedMode{Vector{0, 1}}, x).output == Vector{4});
  // Inverted convention scales kept units by 1/p.
  const DropoutGate inv{0, 0.5, DropoutConvention::inverted};
  CHECK(forward(params, inv, MaskedMode{Vector{1, 0}}, x).output == Vector{4});
  // Scaled mode applies s with no extra factor under either convention.
  CHECK(forward(params, inv, ScaledMode{Vector{0.5, 0.5}}, x).output == Vector{3});
}

TEST_CASE("forward rejects bad modes and inputs") {
  const auto spec = mlp_spec({3, 4, 2});
  const auto params = random_params(spec, 5);
  const auto gate = output_gate(spec, 0.5);
  const Vector x{0.1, 0.2, 0.3};
  CHECK_THROWS_AS(forward(params, gate, MaskedMode{Vector{1, 0, 1}}, x), ContractError);
  CHECK_THROWS_AS(forward(params, gate, MaskedMode{Vector{1, 0, 0.5, 1}}, x), ContractError);
  CHECK_THROWS_AS(forward(params, gate, ScaledMode{Vector{1, 1}}, x), ContractError);
  CHECK_THROWS_AS(forward(params, gate, PlainMode{}, Vector{1, 2}), ContractError);
}

TEST_CASE("gate_input and forward_from_gate compose to forward") {
  const auto spec = mlp_spec({6, 5, 4, 3});
  const auto params = random_params(spec, 8);
  for (std::size_t pos = 0; pos < 3; ++pos) {
    const DropoutGate gate{pos, 0.5};
    const Vector x(random_vector(6, 9, 0, 1));
    const std::size_t w = gate.width(spec);
    const ForwardMode mode = ScaledMode{Vector(random_vector(w, 10, 0, 1))};
    const auto whole = forward(params, gate, mode, x).output;
    const auto split = forward_from_gate(params, gate, mode, gate_input(params, gate, x)).output;
    CHECK(whole == split);
  }
}

TEST_CASE("naive reference agrees with forward") {
  const auto spec = mlp_spec({6, 9, 4});
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto params = random_params(spec, seed);
    const auto gate = output_gate(spec, 0.5);
    const auto x = random_vector(6, seed + 100, 0, 1);
    const auto s = random_vector(9, seed + 200, 0, 1);
    const auto ours = forward(params, gate, ScaledMode{Vector(s)}, Vector(x)).output;
    const auto ref = testsupport::naive_forward(params, 1, s, x);
    CHECK(max_abs_diff(ours, Vector(ref)) <= 1e-14);
  }
}

TEST_CASE("backprop_params: one-hot output gives zero gradient") {
  NetworkParams params = zero_params(mlp_spec({3, 4, 2}));
  params.layers[1].bias = Vector{1000, 0};
  for (double& w : params.layers[0].weights.flat()) w = 0.3;
  const auto gate = output_gate(params.spec, 0.5);
  const auto fr = forward(params, gate, PlainMode{}, Vector{0.1, 0.2, 0.3});
  const auto g = backprop_params(params, fr.cache, 0);
  for (const auto& w : g.weights) CHECK(max_abs(w.flat()) <= 1e-12);
  for (const auto& b : g.bias) CHECK(max_abs(b.span()) <= 1e-12);
}

TEST_CASE("backprop_params: dropped unit has zero incoming column gradient") {
  const auto spec = mlp_spec({4, 5, 3});
  const auto params = random_params(spec, 21);
  const auto gate = output_gate(spec, 0.5);
  const Vector mask{1, 0, 1, 1, 0};
  const auto fr = forward(params, gate, MaskedMode{mask}, Vector(random_vector(4, 22, 0, 1)));
  const auto g = backprop_params(params, fr.cache, 2);
  for (std::size_t r = 0; r < 3; ++r) {
    CHECK(g.weights[1](r, 1) == 0.0);
    CHECK(g.weights[1](r, 4) == 0.0);
  }
  // Nothing flows back into the hidden units that were dropped.
  for (std::size_t c = 0; c < 4; ++c) {
    CHECK(g.weights[0](1, c) == 0.0);
    CHECK(g.weights[0](4, c) == 0.0);
  }
}

TEST_CASE("backprop_params matches central differences on 4-2-2 networks") {
  const auto spec = mlp_spec({4, 2, 2});
  std::size_t checked = 0;
  for (std::uint64_t seed = 0; checked < 100 && seed < 400; ++seed) {
    const auto params = random_params(spec, seed, 1.0);
    const double p = 0.5;
    const DropoutConvention conv =
        seed % 2 ? DropoutConvention::inverted : DropoutConvention::classical;
    const DropoutGate gate{1, p, conv};
    const Vector x(random_vector(4, seed + 1000, -1, 1));
    const Vector mask = seed % 3 == 0 ? Vector{1, 1} : Vector{1, 0};
    const std::size_t label = seed % 2;
    const auto fr = forward(params, gate, MaskedMode{mask}, x);
    if (kink_distance(fr.cache, params) < 1e-4) continue;
    const auto g = backprop_params(params, fr.cache, label);
    for (std::size_t l = 0; l < 2; ++l) {
      std::vector<double> flat(params.layers[l].weights.flat().begin(),
                               params.layers[l].weights.flat().end());
      auto loss_w = [&](const std::vector<double>& w) {
        NetworkParams q = params;
        std::copy(w.begin(), w.end(), q.layers[l].weights.flat().begin());
        return cross_entropy(forward(q, gate, MaskedMode{mask}, x).output, label);
      };
      const auto fd = central_difference(loss_w, flat);
      CHECK(vec_rel_error(Vector(std::vector<double>(g.weights[l].flat().begin(),
                                                     g.weights[l].flat().end())),
                          fd) <= 1e-5);
      auto loss_b = [&](const std::vector<double>& b) {
        NetworkParams q = params;
        q.layers[l].bias = Vector(b);
        return cross_entropy(forward(q, gate, MaskedMode{mask}, x).output, label);
      };
      CHECK(vec_rel_error(g.bias[l], central_difference(loss_b, params.layers[l].bias.values())) <=
            1e-5);
    }
    ++checked;
  }
  CHECK(checked == 100);
}

TEST_CASE("backprop_params with an arbitrary output gradient") {
  // Linear 3 -> 2 network, loss = sum of outputs: dL/dW = 1 xᵀ, dL/db = 1.
  NetworkParams params = random_params({{3, 2, Activation::linear}}, 4);
  const DropoutGate gate{0, 1.0};
  const Vector x{1, 2, 3};
  const auto fr = forward(params, gate, PlainMode{}, x);
  const auto g = backprop_params(params, fr.cache, Vector{1, 1});
  CHECK(g.weights[0] == Matrix{{1, 2, 3}, {1, 2, 3}});
  CHECK(g.bias[0] == Vector{1, 1});
}

TEST_CASE("backprop_scale: hand chain rule and zero input") {
  NetworkParams params{{{1, 1, Activation::linear}}, {Layer{Matrix{{2.5}}, Vector{0.7}}}};
  const DropoutGate gate{0, 0.5};
  const auto fr = forward(params, gate, ScaledMode{Vector{0.4}}, Vector{3.0});
  CHECK(backprop_scale(params, fr.cache, Vector{1.0}) == Vector{2.5 * 3.0});

  const auto spec = mlp_spec({4, 6, 3});
  const auto rp = random_params(spec, 31);
  const auto og = output_gate(spec, 0.5);
  const auto zr = forward_from_gate(rp, og, ScaledMode{Vector(6, 0.5)}, Vector(6, 0.0));
  CHECK(backprop_scale(rp, zr.cache, 1) == Vector(6, 0.0));
}

TEST_CASE("backprop_scale needs a Scaled cache") {
  const auto spec = mlp_spec({4, 6, 3});
  const auto params = random_params(spec, 32);
  const auto gate = output_gate(spec, 0.5);
  const auto fr = forward(params, gate, PlainMode{}, Vector(4, 0.5));
  CHECK_THROWS_AS(backprop_scale(params, fr.cache, 0), ContractError);
}

TEST_CASE("backprop_scale matches central differences on 8-unit heads") {
  std::size_t checked = 0;
  for (std::uint64_t seed = 0; checked < 100 && seed < 400; ++seed) {
    // Gate one layer below the output so the head has a ReLU in it.
    const NetworkSpec spec = seed % 2 ? mlp_spec({5, 8, 3}) : mlp_spec({5, 8, 6, 3});
    const auto params = random_params(spec, seed, 1.0);
    const DropoutGate gate{1, 0.5};
    const Vector z = gate_input(params, gate, Vector(random_vector(5, seed + 1, 0, 1)));
    const auto s = random_vector(8, seed + 2, 0.0, 1.0);
    const std::size_t label = seed % 3;
    const auto fr = forward_from_gate(params, gate, ScaledMode{Vector(s)}, z);
    if (kink_distance(fr.cache, params) < 1e-4) continue;
    const auto g = backprop_scale(params, fr.cache, label);
    auto loss = [&](const std::vector<double>& sv) {
      return cross_entropy(forward_from_gate(params, gate, ScaledMode{Vector(sv)}, z).output,
                           label);
    };
    CHECK(vec_rel_error(g, central_difference(loss, s)) <= 1e-5);
    ++checked;
  }
  CHECK(checked == 100);
}

TEST_CASE("stale caches are rejected") {
  const auto spec = mlp_spec({4, 5, 3});
  const auto params = random_params(spec, 40);
  const auto other = random_params(mlp_spec({4, 6, 3}), 41);
  const auto gate = output_gate(spec, 0.5);
  const auto fr = forward(params, gate, PlainMode{}, Vector(4, 0.5));
  CHECK_THROWS_AS(backprop_params(other, fr.cache, 0), ContractError);
  CHECK_THROWS_AS(backprop_params(params, fr.cache, 7), ContractError);
  const auto head = forward_from_gate(params, gate, PlainMode{}, Vector(5, 0.5));
  CHECK_THROWS_AS(backprop_params(params, head.cache, 0), ContractError);
}
