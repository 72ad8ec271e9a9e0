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
#include "dropscale/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <string>

#include "dropscale/errors.hpp"

namespace dropscale {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

// Whole-file read; inflates gzip members when the 0x1f8b prefix is present.
std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> raw((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  if (raw.size() < 2 || raw[0] != 0x1f || raw[1] != 0x8b) return raw;

  std::vector<unsigned char> out;
  z_stream zs{};
  if (inflateInit2(&zs, 15 + 32) != Z_OK) throw IoError("zlib init failed");
  zs.next_in = raw.data();
  zs.avail_in = static_cast<uInt>(raw.size());
  std::array<unsigned char, 1 << 16> chunk{};
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = chunk.data();
    zs.avail_out = static_cast<uInt>(chunk.size());
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw DataError(DataErrorKind::truncated,
                      path.string() + ": corrupt or truncated gzip stream");
    }
    out.insert(out.end(), chunk.data(), chunk.data() + (chunk.size() - zs.avail_out));
    if (rc == Z_OK && zs.avail_in == 0 && zs.avail_out != 0) {
      inflateEnd(&zs);
      throw DataError(DataErrorKind::truncated, path.string() + ": truncated gzip stream");
    }
  }
  inflateEnd(&zs);
  return out;
}

std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset,
                        const std::filesystem::path& path) {
  if (bytes.size() < offset + 4) {
    throw DataError(DataErrorKind::truncated, path.string() + ": truncated IDX header");
  }
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void expect_magic(std::uint32_t got, std::uint32_t want, const std::filesystem::path& path) {
  if (got != want) {
    char buf[64];
    std::snprintf(buf, sizeof buf, ": bad IDX magic 0x%08x (expected 0x%08x)", got, want);
    throw DataError(DataErrorKind::bad_magic, path.string() + buf);
  }
}

std::size_t resolve_class_count(const std::vector<std::size_t>& labels, std::size_t requested) {
  std::size_t top = 0;
  for (auto l : labels) top = std::max(top, l + 1);
  if (requested == 0) return top;
  if (top > requested) {
    throw DataError(DataErrorKind::malformed,
                    "label " + std::to_string(top - 1) + " exceeds class count " +
                        std::to_string(requested));
  }
  return requested;
}

}  // namespace

void Dataset::validate() const {
  if (features.size() != labels.size()) {
    throw DataError(DataErrorKind::count_mismatch,
                    "dataset has " + std::to_string(features.size()) + " feature rows but " +
                        std::to_string(labels.size()) + " labels");
  }
  const std::size_t dim = feature_dim();
  for (std::size_t i = 0; i < size(); ++i) {
    if (features[i].size() != dim) {
      throw DataError(DataErrorKind::malformed,
                      "example " + std::to_string(i) + " has " +
                          std::to_string(features[i].size()) + " features, expected " +
                          std::to_string(dim));
    }
    if (labels[i] >= class_count) {
      throw DataError(DataErrorKind::malformed,
                      "example " + std::to_string(i) + " label " + std::to_string(labels[i]) +
                          " >= class count " + std::to_string(class_count));
    }
  }
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.class_count = class_count;
  out.features.reserve(indices.size());
  out.labels.reserve(indices.size());
  for (auto i : indices) {
    if (i >= size()) throw ContractError("Dataset::subset: index out of range");
    out.features.push_back(features[i]);
    out.labels.push_back(labels[i]);
  }
  return out;
}

Dataset Dataset::head(std::size_t count) const {
  if (count == 0 || count >= size()) return *this;
  std::vector<std::size_t> idx(count);
  std::iota(idx.begin(), idx.end(), 0);
  return subset(idx);
}

Dataset read_idx(const std::filesystem::path& image_path,
                 const std::filesystem::path& label_path, std::size_t max_examples,
                 std::size_t class_count) {
  const auto images = read_file_bytes(image_path);
  const auto labels = read_file_bytes(label_path);

  expect_magic(read_be32(images, 0, image_path), kImageMagic, image_path);
  expect_magic(read_be32(labels, 0, label_path), kLabelMagic, label_path);

  const std::size_t image_count = read_be32(images, 4, image_path);
  const std::size_t rows = read_be32(images, 8, image_path);
  const std::size_t cols = read_be32(images, 12, image_path);
  const std::size_t label_count = read_be32(labels, 4, label_path);
  if (image_count != label_count) {
    throw DataError(DataErrorKind::count_mismatch,
                    image_path.string() + " holds " + std::to_string(image_count) +
                        " images but " + label_path.string() + " holds " +
                        std::to_string(label_count) + " labels");
  }
  const std::size_t pixels = rows * cols;
  if (images.size() < 16 + image_count * pixels) {
    throw DataError(DataErrorKind::truncated,
                    image_path.string() + ": truncated pixel data (" +
                        std::to_string(images.size() - 16) + " of " +
                        std::to_string(image_count * pixels) + " bytes)");
  }
  if (labels.size() < 8 + label_count) {
    throw DataError(DataErrorKind::truncated, label_path.string() + ": truncated label data");
  }

  const std::size_t n =
      max_examples == 0 ? image_count : std::min(max_examples, image_count);
  Dataset ds;
  ds.features.reserve(n);
  ds.labels.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Vector x(pixels);
    const unsigned char* px = images.data() + 16 + i * pixels;
    for (std::size_t k = 0; k < pixels; ++k) x[k] = px[k] / 255.0;
    ds.features.push_back(std::move(x));
    ds.labels.push_back(labels[8 + i]);
  }
  ds.class_count = resolve_class_count(ds.labels, class_count);
  return ds;
}

Dataset read_delimited(const std::filesystem::path& path, std::size_t class_count) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  Dataset ds;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    std::vector<double> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      std::string field = line.substr(start, comma - start);
      field.erase(0, field.find_first_not_of(" \t"));
      field.erase(field.find_last_not_of(" \t") + 1);
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
      if (ec != std::errc() || ptr != field.data() + field.size() || !std::isfinite(v)) {
        throw DataError(DataErrorKind::malformed, path.string() + ":" +
                                                      std::to_string(line_no) +
                                                      ": bad numeric field '" + field + "'");
      }
      fields.push_back(v);
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (fields.size() < 2) {
      throw DataError(DataErrorKind::malformed,
                      path.string() + ":" + std::to_string(line_no) +
                          ": need at least one feature and a label");
    }
    const double label = fields.back();
    if (label < 0 || label != std::floor(label)) {
      throw DataError(DataErrorKind::malformed, path.string() + ":" +
                                                    std::to_string(line_no) +
                                                    ": label must be a non-negative integer");
    }
    fields.pop_back();
    if (!ds.features.empty() && fields.size() != ds.feature_dim()) {
      throw DataError(DataErrorKind::malformed,
                      path.string() + ":" + std::to_string(line_no) + ": expected " +
                          std::to_string(ds.feature_dim()) + " features, got " +
                          std::to_string(fields.size()));
    }
    ds.features.emplace_back(std::move(fields));
    ds.labels.push_back(static_cast<std::size_t>(label));
  }
  ds.class_count = resolve_class_count(ds.labels, class_count);
  return ds;
}

Dataset synth_gaussians(std::size_t class_count, std::size_t dim, std::size_t per_class,
                        double spread, std::uint64_t seed) {
  return synth_gaussians(class_count, dim, per_class, spread, seed, seed);
}

Dataset synth_gaussians(std::size_t class_count, std::size_t dim, std::size_t per_class,
                        double spread, std::uint64_t seed, std::uint64_t sample_seed) {
  if (class_count == 0 || dim == 0 || per_class == 0) {
    throw ContractError("synth_gaussians: counts must be positive");
  }
  if (!(spread >= 0.0)) throw ContractError("synth_gaussians: spread must be non-negative");

  RngStream center_rng(seed, derive_stream_id("synth-centers"));
  std::vector<Vector> centers;
  for (std::size_t c = 0; c < class_count; ++c) {
    Vector center(dim);
    for (double& v : center) v = center_rng.uniform();
    centers.push_back(std::move(center));
  }

  RngStream sample_rng(sample_seed, derive_stream_id("synth-samples"));
  Dataset ds;
  ds.class_count = class_count;
  for (std::size_t i = 0; i < per_class; ++i) {
    for (std::size_t c = 0; c < class_count; ++c) {
      Vector x = centers[c];
      for (double& v : x) v += spread * sample_rng.normal();
      ds.features.push_back(std::move(x));
      ds.labels.push_back(c);
    }
  }
  return ds;
}

SplitIndices split_indices(std::size_t n, const SplitSpec& spec) {
  if (!(spec.val_fraction > 0.0 && spec.val_fraction < 1.0)) {
    throw ContractError("split: validation fraction must be in (0, 1)");
  }
  if (n < 5) {
    throw DataError(DataErrorKind::too_small,
                    "split: need at least 5 examples, got " + std::to_string(n));
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  RngStream rng(spec.seed, derive_stream_id("split"));
  rng.shuffle(std::span<std::size_t>(order));

  auto val_count = static_cast<std::size_t>(std::llround(n * spec.val_fraction));
  val_count = std::clamp<std::size_t>(val_count, 1, n - 1);
  SplitIndices out;
  out.val.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(val_count));
  out.train.assign(order.begin() + static_cast<std::ptrdiff_t>(val_count), order.end());
  return out;
}

std::pair<Dataset, Dataset> split(const Dataset& ds, const SplitSpec& spec) {
  const auto idx = split_indices(ds.size(), spec);
  return {ds.subset(idx.train), ds.subset(idx.val)};
}

}  // namespace dropscale
