// Copyright 2026 The residscope Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace rscope {

/// Base class for every error raised by the analysis engine.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed container bytes or manifest.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A trace or dataset violates a structural invariant. `field()` names the
/// offending field so callers can report it without parsing the message.
class ValidationError : public Error {
 public:
  ValidationError(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Non-finite tensor payloads.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration (fixture config, report config, empty digit vocab).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Bad arguments to a public operation.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Input is well formed but the requested statistic is undefined for it
/// (constant probe labels, zero attention mass on the span).
class DegenerateError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failure, always carrying the path.
class IoError : public Error {
 public:
  IoError(const std::string& path, const std::string& what)
      : Error(path + ": " + what), path_(path) {}

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

}  // namespace rscope
