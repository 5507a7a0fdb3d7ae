#pragma once

#include <stdexcept>
#include <string>

namespace sgr {

/// Base class for all errors raised by the toolkit.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Incompatible variable counts, vector lengths or matrix sides.
class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& what) : Error(what) {}
};

/// Combinatorial sizes (binomials, Gram sides) that overflow practical limits.
class CapacityError : public Error {
 public:
  explicit CapacityError(const std::string& what) : Error(what) {}
};

/// Invalid scenario files or parameter combinations. Carries the failing
/// field path / rule name in the message.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what) {}
};

/// Malformed polynomial text.
class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what) : Error(what) {}
};

}  // namespace sgr
