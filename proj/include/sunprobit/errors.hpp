#pragma once

#include <stdexcept>
#include <string>

namespace sunprobit {

// Base for everything thrown by the library. CLI maps subclasses to exit codes:
// ConfigError -> 2, NumericalError -> 3.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : Error {
  using Error::Error;
};

struct NumericalError : Error {
  using Error::Error;
};

struct DimensionMismatch : ConfigError {
  using ConfigError::ConfigError;
};

struct IndexOutOfRange : ConfigError {
  using ConfigError::ConfigError;
};

struct ParseError : ConfigError {
  using ConfigError::ConfigError;
};

struct NonBinaryResponse : ConfigError {
  using ConfigError::ConfigError;
};

struct EmptyModelSet : ConfigError {
  using ConfigError::ConfigError;
};

struct NotPositiveDefinite : NumericalError {
  using NumericalError::NumericalError;
};

struct RankDeficient : NumericalError {
  using NumericalError::NumericalError;
};

struct InfeasibleRegion : NumericalError {
  using NumericalError::NumericalError;
};

struct DegenerateConditional : NumericalError {
  using NumericalError::NumericalError;
};

struct InvalidParams : NumericalError {
  using NumericalError::NumericalError;
};

} // namespace sunprobit
