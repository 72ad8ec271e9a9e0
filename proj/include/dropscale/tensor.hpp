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

/*
 Dense vectors and matrices of doubles, the handful of kernels the networks
 need, and a counter-based random stream.

 Storage is row-major and 64-bit throughout; the oracle tolerances assume
 double precision.
*/

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <utility>
#include <string_view>
#include <vector>

namespace dropscale {

class Vector {
 public:
  Vector() = default;
  explicit Vector(std::size_t n, double fill = 0.0) : data_(n, fill) {}
  Vector(std::initializer_list<double> values) : data_(values) {}
  explicit Vector(std::vector<double> values) : data_(std::move(values)) {}

  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }

  std::span<double> span() noexcept { return data_; }
  std::span<const double> span() const noexcept { return data_; }

  auto begin() noexcept { return data_.begin(); }
  auto end() noexcept { return data_.end(); }
  auto begin() const noexcept { return data_.begin(); }
  auto end() const noexcept { return data_.end(); }

  const std::vector<double>& values() const noexcept { return data_; }

  friend bool operator==(const Vector&, const Vector&) = default;

 private:
  std::vector<double> data_;
};

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  /// Row-major literal, e.g. `Matrix{{1, 2}, {3, 4}}`. Rows must agree in length.
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  double& operator()(std::size_t r, std::size_t c) noexcept {
    return data_[r * cols_ + c];
  }
  double operator()(std::size_t r, std::size_t c) const noexcept {
    return data_[r * cols_ + c];
  }

  std::span<double> row(std::size_t r) noexcept {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> flat() noexcept { return data_; }
  std::span<const double> flat() const noexcept { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Kernels. Dimension mismatches throw ContractError.

Vector matvec(const Matrix& w, const Vector& z);
/// wᵀ·v, the backward direction of matvec.
Vector matvec_transposed(const Matrix& w, const Vector& v);
Vector hadamard(const Vector& a, const Vector& b);
Vector add(const Vector& a, const Vector& b);
Vector subtract(const Vector& a, const Vector& b);
Vector scaled(const Vector& a, double factor);
double dot(std::span<const double> a, std::span<const double> b);

/// Compensated (Neumaier) sum.
double sum(std::span<const double> values);
double mean(std::span<const double> values);
double max_abs(std::span<const double> values);
double max_abs_diff(const Vector& a, const Vector& b);
std::size_t argmax(const Vector& v);
bool all_finite(std::span<const double> values);

/// Max-subtracted softmax; the result is renormalized to sum to one.
Vector softmax(const Vector& logits);
/// −log(probs[label]) with probs clamped below at 1e-300.
double cross_entropy(const Vector& probs, std::size_t label);

/// Running Neumaier accumulator used wherever summation order matters.
class CompensatedSum {
 public:
  void add(double x) noexcept;
  double value() const noexcept { return sum_ + compensation_; }

 private:
  double sum_ = 0.0;
  double compensation_ = 0.0;
};

/*
 Counter-based random stream (SplitMix64 over a keyed counter).

 The key mixes a base seed with a stream id, so every consumer can own an
 independent stream that does not depend on how many numbers any other
 consumer drew. Output depends only on (base_seed, stream_id, call index).
*/
class RngStream {
 public:
  RngStream(std::uint64_t base_seed, std::uint64_t stream_id);

  std::uint64_t next_u64() noexcept;
  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept;
  /// Standard normal via Box-Muller. Consumes two draws per pair.
  double normal() noexcept;
  /// Uniform integer in [0, bound); bound must be positive.
  std::uint64_t below(std::uint64_t bound) noexcept;

  template <typename T>
  void shuffle(std::span<T> items) noexcept {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  std::uint64_t base_seed() const noexcept { return base_seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }

 private:
  std::uint64_t base_seed_;
  std::uint64_t stream_id_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x) noexcept;

/*
 Domain-separated stream ids: FNV-1a of the purpose string, mixed with the
 index. `derive_stream_id("mc", 7)` is the stream of the eighth Monte Carlo
 sample, `derive_stream_id("shuffle", epoch)` the trainer's shuffle for an
 epoch. Adding a purpose leaves every existing stream unchanged.
*/
std::uint64_t derive_stream_id(std::string_view purpose, std::uint64_t index = 0) noexcept;

/// Length-n {0,1} vector with P(1) = keep_prob. keep_prob must be in [0, 1].
Vector bernoulli_mask(RngStream& rng, std::size_t n, double keep_prob);

}  // namespace dropscale
