#pragma once

#include <stdexcept>
#include <string>

namespace dwvit {

// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Dimension or rank violation in a tensor operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf contract violation: an operation produced a non-finite value.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Invalid model configuration or CLI usage.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed file, missing tensor, manifest mismatch.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace dwvit
