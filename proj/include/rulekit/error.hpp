// Copyright 2026 The rulekit Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

#include <nlohmann/json.hpp>

namespace rulekit {

using json = nlohmann::json;

/// Base class for every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument or violated precondition.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Malformed or missing input data (files, records, configs).
class DataError : public Error {
 public:
  using Error::Error;
};

enum class ProviderErrorKind { kTransport, kHttpStatus, kMissingText };

/// A text-generation backend failed to produce a usable completion.
class ProviderError : public Error {
 public:
  ProviderError(ProviderErrorKind kind, std::string message, int status = 0)
      : Error(std::move(message)), kind_(kind), status_(status) {}

  ProviderErrorKind kind() const noexcept { return kind_; }
  /// HTTP status for kHttpStatus errors, 0 otherwise.
  int status() const noexcept { return status_; }

 private:
  ProviderErrorKind kind_;
  int status_;
};

/// A model response could not be parsed into the expected structure.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Value-or-error holder used where per-item failures must not abort a batch.
template <class T>
class Outcome {
 public:
  static Outcome success(T value) {
    Outcome out;
    out.value_ = std::move(value);
    return out;
  }
  static Outcome failure(std::string message) {
    Outcome out;
    out.error_ = std::move(message);
    return out;
  }

  bool ok() const noexcept { return value_.has_value(); }
  explicit operator bool() const noexcept { return ok(); }

  const T& value() const {
    if (!value_) throw Error("Outcome has no value: " + error_);
    return *value_;
  }
  T& value() {
    if (!value_) throw Error("Outcome has no value: " + error_);
    return *value_;
  }
  const std::string& error() const noexcept { return error_; }

 private:
  Outcome() = default;
  std::optional<T> value_;
  std::string error_;
};

}  // namespace rulekit
