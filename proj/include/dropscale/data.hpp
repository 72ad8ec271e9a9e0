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
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "dropscale/tensor.hpp"

namespace dropscale {

struct Dataset {
  std::vector<Vector> features;
  std::vector<std::size_t> labels;
  std::size_t class_count = 0;

  std::size_t size() const noexcept { return labels.size(); }
  bool empty() const noexcept { return labels.empty(); }
  std::size_t feature_dim() const noexcept {
    return features.empty() ? 0 : features.front().size();
  }

  /// Throws DataError if lengths disagree or a label is out of range.
  void validate() const;
  /// Examples at `indices`, in that order.
  Dataset subset(std::span<const std::size_t> indices) const;
  /// First `count` examples (all of them when count is 0 or too large).
  Dataset head(std::size_t count) const;
};

/*
 IDX reader (the MNIST/Fashion-MNIST container). Images use magic 0x00000803,
 labels 0x00000801, dimensions big-endian. Gzip input is detected by its
 0x1f8b prefix. Pixels are scaled to [0, 1] by dividing by 255 and images are
 flattened row-major.

 `max_examples` > 0 reads only that many leading examples. `class_count` 0
 means max label + 1.
*/
Dataset read_idx(const std::filesystem::path& image_path,
                 const std::filesystem::path& label_path,
                 std::size_t max_examples = 0, std::size_t class_count = 0);

/// One example per line: comma-separated features, integer label last.
/// Blank lines and lines starting with '#' are skipped.
Dataset read_delimited(const std::filesystem::path& path, std::size_t class_count = 0);

/// Isotropic Gaussian clusters. Centers are uniform in [0, 1]^dim from the
/// "synth-centers" stream; examples are interleaved by class.
Dataset synth_gaussians(std::size_t class_count, std::size_t dim, std::size_t per_class,
                        double spread, std::uint64_t seed);

/// Same centers as synth_gaussians(…, seed) but fresh samples from `sample_seed`.
Dataset synth_gaussians(std::size_t class_count, std::size_t dim, std::size_t per_class,
                        double spread, std::uint64_t seed, std::uint64_t sample_seed);

struct SplitSpec {
  double val_fraction = 0.2;
  std::uint64_t seed = 0;
};

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};

/// Seeded shuffle, then the first round(n·val_fraction) indices go to
/// validation. Needs at least 5 examples.
SplitIndices split_indices(std::size_t n, const SplitSpec& spec);
std::pair<Dataset, Dataset> split(const Dataset& ds, const SplitSpec& spec);

}  // namespace dropscale
