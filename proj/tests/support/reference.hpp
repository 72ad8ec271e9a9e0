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

// Reference implementations used only by the tests. They share no code with
// the library beyond its plain data types: forward passes are written out as
// loops, expectations are enumerated directly, and derivatives come from
// finite differences.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "dropscale/network.hpp"
#include "dropscale/tensor.hpp"

namespace testsupport {

using dropscale::DropoutGate;
using dropscale::NetworkParams;
using dropscale::NetworkSpec;
using dropscale::Vector;

/// Forward pass with gate multiplier `g` (empty = no gating) applied to the
/// input of layer `gate_position`. Plain loops, softmax via exp/sum.
std::vector<double> naive_forward(const NetworkParams& params, std::size_t gate_position,
                                  const std::vector<double>& g, const std::vector<double>& x);

/// E_d[F(x, d)] by visiting every mask with weight p^k (1-p)^(n-k).
/// Arithmetic or (renormalized) probability-weighted geometric mean.
std::vector<double> brute_expectation(const NetworkParams& params, const DropoutGate& gate,
                                      const std::vector<double>& x, bool geometric);

/// Central difference (f(x + h e_i) - f(x - h e_i)) / 2h for every i.
std::vector<double> central_difference(const std::function<double(const std::vector<double>&)>& f,
                                       std::vector<double> x, double h = 1e-6);

/// |a - b| / max(|a|, |b|, floor).
double relative_error(double a, double b, double floor = 1e-8);

/// Raw IDX files. `gzip` writes through zlib.
void write_idx_images(const std::filesystem::path& path, const std::vector<std::uint8_t>& pixels,
                      std::uint32_t count, std::uint32_t rows, std::uint32_t cols, bool gzip);
void write_idx_labels(const std::filesystem::path& path, const std::vector<std::uint8_t>& labels,
                      bool gzip);
void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

/// Random parameters (normal, scaled) from a std::mt19937_64 of `seed`.
NetworkParams random_params(const NetworkSpec& spec, std::uint64_t seed, double scale = 0.5);
std::vector<double> random_vector(std::size_t n, std::uint64_t seed, double lo, double hi);

/// argmin over a uniform grid of `points` on [lo, hi].
double grid_argmin(const std::function<double(double)>& f, double lo, double hi,
                   std::size_t points);

/// Fresh empty directory under the system temp dir.
std::filesystem::path temp_dir(const std::string& name);

}  // namespace testsupport
