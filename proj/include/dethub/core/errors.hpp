// Copyright 2026 The DetHub Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace dethub {

// Error hierarchy used across the library. Each error carries a short
// machine-readable code so the CLI can emit structured failures and map
// them onto exit codes (config=2, data=3, numeric/shape=4).
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message) : Error("config", message) {}
  ConfigError(std::string code, const std::string& message)
      : Error(std::move(code), message) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& message) : Error("data", message) {}
  DataError(std::string code, const std::string& message)
      : Error(std::move(code), message) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& message) : Error("shape", message) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& message) : Error("numeric", message) {}
};

}  // namespace dethub
