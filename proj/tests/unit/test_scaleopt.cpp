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
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "doctest.h"
#include "dropscale/errors.hpp"
#include "dropscale/inference.hpp"
#include "dropscale/scaleopt.hpp"
#include "dropscale/trainer.hpp"
#include "reference.hpp"

using namespace dropscale;
using testsupport::random_params;
using testsupport::random_vector;

namespace {

const ConstraintSet kClassicalHalf{0.5, 1.0};

std::vector<GateExample> random_examples(const NetworkParams& params, const DropoutGate& gate,
                                         std::size_t count, std::uint64_t seed) {
  std::vector<GateExample> out;
  const std::size_t in = params.input_dim();
  for (std::size_t i = 0; i < count; ++i) {
    const Vector x(random_vector(in, seed + i, 0, 1));
    out.push_back({gate_input(params, gate, x), (seed + i) % params.output_dim()});
  }
  return out;
}

// Quadratic surrogate over two units: mean over examples of |s - target_i|².
ScaleProblem quadratic_problem(std::vector<std::array<double, 2>> targets) {
  auto shared = std::make_shared<std::vector<std::array<double, 2>>>(std::move(targets));
  ScaleProblem p;
  p.width = 2;
  p.fit_size = shared->size();
  p.batch_loss = [shared](const Vector& s, std::span<const std::size_t> idx, Vector& grad) {
    grad = Vector(2);
    double loss = 0.0;
    for (std::size_t i : idx) {
      const auto& t = (*shared)[i];
      for (std::size_t k = 0; k < 2; ++k) {
        loss += (s[k] - t[k]) * (s[k] - t[k]);
        grad[k] += 2.0 * (s[k] - t[k]);
      }
    }
    const double inv = 1.0 / static_cast<double>(idx.size());
    for (double& g : grad) g *= inv;
    return loss * inv;
  };
  p.selection_error = [shared](const Vector& s) {
    double loss = 0.0;
    for (const auto& t : *shared) {
      loss += (s[0] - t[0]) * (s[0] - t[0]) + (s[1] - t[1]) * (s[1] - t[1]);
    }
    return loss / static_cast<double>(shared->size());
  };
  return p;
}

}  // namespace

TEST_CASE("reparametrize examples") {
  CHECK(reparametrize(Vector(5, 0.0), kClassicalHalf) == Vector(5, 0.5));
  CHECK(max_abs_diff(reparametrize(Vector{0.2, 0.4, 0.9}, kClassicalHalf),
                     Vector{0.2, 0.4, 0.9}) <= 1e-15);
  CHECK(reparametrize(Vector{1, 3}, ConstraintSet{1.0, 2.0}) == Vector{0, 2});
  CHECK_THROWS_AS(reparametrize(Vector{}, kClassicalHalf), ContractError);
}

TEST_CASE("reparametrize holds the mean") {
  std::mt19937_64 gen(1);
  for (double scale : {1.0, 100.0, 1000.0}) {
    std::uniform_real_distribution<double> u(-scale, scale);
    for (int trial = 0; trial < 2000; ++trial) {
      Vector e(2 + trial % 63);
      for (double& v : e) v = u(gen);
      for (const ConstraintSet cs : {ConstraintSet{0.5, 1.0}, ConstraintSet{1.0, 2.0},
                                     ConstraintSet{0.3, 1.0}}) {
        const Vector s = reparametrize(e, cs);
        CHECK(std::abs(mean(s.span()) - cs.mean_target) <= 1e-12);
      }
    }
  }
}

TEST_CASE("penalty examples") {
  const ConstraintSet cs{0.5, 1.0};
  CHECK(penalty(Vector{0.0, 0.3, 1.0, 0.7}, cs, 10000.0) == 0.0);
  CHECK(penalty(Vector{1.0, 0.0}, cs, 10000.0) == 0.0);
  // Reference: the exact penalty of the double inputs, rounded once.
  const long double exact = 10000.0L * (static_cast<long double>(1.2) - 1.0L) +
                            10000.0L * static_cast<long double>(0.1);
  CHECK(penalty(Vector{1.2, -0.1, 0.5}, cs, 10000.0) == static_cast<double>(exact));
  CHECK(std::abs(penalty(Vector{1.2, -0.1, 0.5}, cs, 10000.0) - 3000.0) <= 1e-9);
  CHECK(penalty(Vector{2.5, -1.0}, ConstraintSet{1.0, 2.0}, 1.0) == 1.5);
  CHECK_THROWS_AS(penalty(Vector{0.5}, cs, 0.0), ConfigError);
  CHECK_THROWS_AS(penalty(Vector{0.5}, cs, PenaltyConfig{1.0, {1.0, 2.0}}), ConfigError);
  CHECK(penalty(Vector{1.5, -1.0}, cs, PenaltyConfig{1.0, {2.0, 3.0}}) == 4.0);
}

TEST_CASE("penalty is zero exactly on the box") {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(-0.5, 1.5);
  const ConstraintSet cs{0.5, 1.0};
  for (int trial = 0; trial < 3000; ++trial) {
    Vector s(1 + trial % 9);
    for (double& v : s) {
      v = u(gen);
      if (trial % 3 == 0) v = std::clamp(v, 0.0, 1.0);
    }
    if (trial % 5 == 0) s[0] = trial % 2 ? 1.0 : 0.0;
    if (trial % 7 == 0) s[0] = trial % 2 ? std::nextafter(1.0, 2.0) : -std::numeric_limits<double>::denorm_min();
    const bool inside = std::all_of(s.begin(), s.end(), [](double v) { return v >= 0.0 && v <= 1.0; });
    const double pen = penalty(s, cs, kDefaultPenaltyWeight);
    CHECK((pen == 0.0) == inside);
    CHECK(pen >= 0.0);
  }
}

TEST_CASE("penalty subgradient") {
  const ConstraintSet cs{0.5, 1.0};
  const PenaltyConfig pc{7.0, {}};
  CHECK(penalty_subgradient(Vector{1.5, -0.5, 0.5, 1.0, 0.0}, cs, pc) == Vector{7, -7, 0, 0, 0});
}

TEST_CASE("objective at e = 0 is the weight-scaling loss") {
  const auto spec = mlp_spec({6, 8, 3});
  const auto params = random_params(spec, 2);
  const auto gate = output_gate(spec, 0.5);
  const auto batch = random_examples(params, gate, 16, 3);
  const auto obj = objective_and_gradient(Vector(8, 0.0), ConstraintSet::for_gate(gate),
                                          PenaltyConfig{}, params, gate, batch);
  double ref = 0.0;
  for (const auto& ex : batch) {
    ref += cross_entropy(weight_scaled_from_gate(params, gate, ex.z), ex.label);
  }
  ref /= static_cast<double>(batch.size());
  CHECK(std::abs(obj.loss - ref) <= 1e-13);
  CHECK(obj.penalty == 0.0);
  CHECK(obj.total == obj.loss);
  CHECK_THROWS_AS(objective_and_gradient(Vector(8, 0.0), ConstraintSet::for_gate(gate),
                                         PenaltyConfig{}, params, gate, {}),
                  ContractError);
}

TEST_CASE("objective gradient matches central differences and sums to zero") {
  std::size_t checked = 0;
  for (std::uint64_t seed = 0; checked < 40 && seed < 200; ++seed) {
    const NetworkSpec spec = seed % 2 ? mlp_spec({5, 8, 3}) : mlp_spec({5, 8, 6, 3});
    const auto params = random_params(spec, seed, 1.0);
    const DropoutGate gate{1, 0.5, seed % 3 ? DropoutConvention::classical
                                            : DropoutConvention::inverted};
    const ConstraintSet cs = ConstraintSet::for_gate(gate);
    const auto batch = random_examples(params, gate, 6, seed * 100);
    // Random e, some entries pushed outside the box so the penalty is active.
    const auto e = random_vector(8, seed + 7, -0.8, 0.8);
    const PenaltyConfig pc{3.0, {}};
    const auto obj = objective_and_gradient(Vector(e), cs, pc, params, gate, batch);
    const double near_kink = std::accumulate(obj.s.begin(), obj.s.end(), 1e300, [&](double d, double v) {
      return std::min({d, std::abs(v), std::abs(v - cs.upper_bound)});
    });
    if (near_kink < 1e-4) continue;
    auto f = [&](const std::vector<double>& ev) {
      return objective_and_gradient(Vector(ev), cs, pc, params, gate, batch).total;
    };
    const auto fd = testsupport::central_difference(f, e);
    double diff = 0.0, scale = 1e-8;
    for (std::size_t k = 0; k < 8; ++k) {
      diff = std::max(diff, std::abs(obj.grad_e[k] - fd[k]));
      scale = std::max(scale, std::abs(fd[k]));
    }
    CHECK(diff / scale <= 1e-5);
    CHECK(std::abs(sum(obj.grad_e.span())) <= 1e-10);
    ++checked;
  }
  CHECK(checked == 40);
}

TEST_CASE("feasibility repair examples") {
  const ConstraintSet cs{0.5, 1.0};
  const Vector inside{0.2, 0.8, 0.5};
  CHECK(feasibility_repair(inside, cs) == inside);
  CHECK(feasibility_repair(Vector{-0.2, 1.2}, cs) == Vector{0, 1});

  const ConstraintSet inv{1.0, 2.0};
  const Vector r = feasibility_repair(Vector{2.5, -0.5, 1.0}, inv);
  CHECK(inv.box_violation(r) <= 1e-9);
  CHECK(std::abs(mean(r.span()) - 1.0) <= 1e-9);
  CHECK(max_abs_diff(r, Vector{2.0, 0.0, 1.0}) <= 1e-12);

  CHECK_THROWS_AS(feasibility_repair(Vector{0.9, 0.9}, cs), ContractError);
}

TEST_CASE("feasibility repair on random vectors") {
  std::mt19937_64 gen(17);
  for (int trial = 0; trial < 500; ++trial) {
    const ConstraintSet cs = trial % 2 ? ConstraintSet{0.5, 1.0} : ConstraintSet{1.0, 1.0 / 0.3};
    Vector e(2 + trial % 50);
    std::normal_distribution<double> nd(0.0, 0.2 + trial % 7);
    for (double& v : e) v = nd(gen);
    const Vector s = reparametrize(e, cs);
    const Vector r = feasibility_repair(s, cs);
    CHECK(cs.box_violation(r) <= 1e-9);
    CHECK(std::abs(mean(r.span()) - cs.mean_target) <= 1e-9);
  }
}

TEST_CASE("optimize_scale with zero iterations returns uniform scaling") {
  const Dataset ds = synth_gaussians(3, 5, 40, 0.4, 11);
  const auto [train_set, val_set] = split(ds, SplitSpec{0.2, 1});
  const auto spec = mlp_spec({5, 12, 3});
  const auto gate = output_gate(spec, 0.5);
  TrainConfig tc;
  tc.max_epochs = 5;
  const auto ck = train(spec, gate, train_set, val_set, tc);
  ScaleOptConfig oc;
  oc.max_iterations = 0;
  const auto res = optimize_scale(ck.params, gate, ConstraintSet::for_gate(gate), PenaltyConfig{},
                                  oc, train_set, val_set);
  CHECK(res.scale == Vector(12, 0.5));
  CHECK(res.selected_epoch == 0);
  CHECK(res.trace.size() == 1);
  CHECK(res.val_error ==
        error_rate(ck.params, gate, val_set, InferenceMode::uniform_scaling, {}));
  CHECK(res.uniform_val_error == res.val_error);
}

TEST_CASE("optimize_scale on a convex head") {
  // One softmax layer on the gate: the scaled loss is convex in s.
  const Dataset ds = synth_gaussians(4, 6, 60, 0.6, 21);
  const auto [train_set, val_set] = split(ds, SplitSpec{0.2, 2});
  const NetworkSpec spec{{6, 4, Activation::softmax}};
  for (auto conv : {DropoutConvention::classical, DropoutConvention::inverted}) {
    const DropoutGate gate{0, 0.5, conv};
    TrainConfig tc;
    tc.max_epochs = 20;
    tc.seed = 3;
    const auto ck = train(spec, gate, train_set, val_set, tc);
    ScaleOptConfig oc;
    oc.max_iterations = 30;
    oc.adam.learning_rate = 0.01;
    oc.batch_size = 64;
    oc.seed = 5;
    const auto res = optimize_scale(ck.params, gate, ConstraintSet::for_gate(gate),
                                    PenaltyConfig{}, oc, train_set, val_set);
    CHECK(res.val_error <= res.uniform_val_error);
    CHECK(res.trace.size() == 31);
    for (std::size_t i = 1; i < res.trace.size(); ++i) {
      // Mini-batch noise allowance: never more than 1% above the previous epoch.
      CHECK(res.trace[i].objective <= res.trace[i - 1].objective * 1.01);
    }
    CHECK(res.trace.back().objective < res.trace.front().objective);
    CHECK(ConstraintSet::for_gate(gate).feasible(res.scale, 1e-9));
    // The persisted choice is the minimum of the trace.
    const auto best = std::min_element(res.trace.begin(), res.trace.end(),
                                       [](const auto& a, const auto& b) { return a.val_error < b.val_error; });
    CHECK(best->val_error == res.val_error);
    CHECK(best->epoch == res.selected_epoch);
  }
}

TEST_CASE("two-unit quadratic surrogate matches grid search") {
  struct Case {
    ConstraintSet cs;
    std::array<double, 2> target;
  };
  const std::vector<Case> cases = {
      {{0.5, 1.0}, {0.8, 0.1}},   // interior optimum
      {{0.5, 1.0}, {1.6, -0.2}},  // optimum pushed onto the bound
      {{1.0, 2.0}, {0.3, 1.4}},   // inverted constraint set
      {{0.3, 1.0}, {0.1, 0.9}},
  };
  for (const auto& c : cases) {
    std::vector<std::array<double, 2>> targets;
    std::mt19937_64 gen(9);
    std::normal_distribution<double> nd(0.0, 0.05);
    for (int i = 0; i < 32; ++i) targets.push_back({c.target[0] + nd(gen), c.target[1] + nd(gen)});
    const ScaleProblem problem = quadratic_problem(targets);
    ScaleOptConfig oc;
    oc.max_iterations = 2000;
    oc.batch_size = 32;  // full batch: one Adam step per epoch
    const auto res = optimize_scale(problem, c.cs, PenaltyConfig{}, oc);

    const double m2 = 2.0 * c.cs.mean_target;
    const double lo = std::max(0.0, m2 - c.cs.upper_bound);
    const double hi = std::min(c.cs.upper_bound, m2);
    const double t = testsupport::grid_argmin(
        [&](double t) { return problem.selection_error(Vector{t, m2 - t}); }, lo, hi, 200001);
    CHECK(std::abs(res.scale[0] - t) <= 1e-3);
    CHECK(std::abs(res.scale[1] - (m2 - t)) <= 1e-3);
  }
}

TEST_CASE("divergence aborts with the trace") {
  ScaleProblem p;
  p.width = 3;
  p.fit_size = 4;
  int calls = 0;
  p.batch_loss = [&calls](const Vector&, std::span<const std::size_t>, Vector& g) {
    g = Vector(3, 0.1);
    return ++calls > 6 ? std::numeric_limits<double>::infinity() : 1.0;
  };
  p.selection_error = [](const Vector&) { return 0.5; };
  ScaleOptConfig oc;
  oc.batch_size = 2;
  try {
    (void)optimize_scale(p, ConstraintSet{0.5, 1.0}, PenaltyConfig{}, oc);
    FAIL("expected divergence");
  } catch (const ScaleOptDivergence& e) {
    CHECK_FALSE(e.trace().empty());
    CHECK(e.category() == ErrorCategory::numeric);
  }
}

TEST_CASE("scale histogram") {
  const ConstraintSet cs{0.5, 1.0};
  const auto h = scale_histogram(Vector{0.0, 0.04, 0.05, 0.5, 0.99, 1.0}, cs);
  REQUIRE(h.size() == 20);
  CHECK(h[0] == 2);
  CHECK(h[1] == 1);
  CHECK(h[10] == 1);
  CHECK(h[19] == 2);
  CHECK(std::accumulate(h.begin(), h.end(), std::size_t{0}) == 6);
}
