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

#include <stdexcept>
#include <string>
#include <string_view>

namespace dropscale {

/// Broad failure classes; the CLI maps each to its own exit code.
enum class ErrorCategory {
  contract,  // caller broke a precondition (dimensions, ranges)
  data,      // malformed or inconsistent input files
  config,    // bad or missing configuration keys
  numeric,   // divergence, non-finite values, non-convergence
  io,        // filesystem failures
};

std::string_view to_string(ErrorCategory category);

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

class ContractError : public Error {
 public:
  explicit ContractError(const std::string& what)
      : Error(ErrorCategory::contract, what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what)
      : Error(ErrorCategory::config, what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what)
      : Error(ErrorCategory::numeric, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorCategory::io, what) {}
};

// Data errors carry a finer reason so callers (and tests) can tell a wrong
// magic number from a short read.
enum class DataErrorKind {
  bad_magic,
  truncated,
  count_mismatch,
  malformed,
  too_small,
};

class DataError : public Error {
 public:
  DataError(DataErrorKind kind, const std::string& what)
      : Error(ErrorCategory::data, what), kind_(kind) {}

  DataErrorKind kind() const noexcept { return kind_; }

 private:
  DataErrorKind kind_;
};

}  // namespace dropscale
