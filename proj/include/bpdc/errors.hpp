#pragma once

#include <stdexcept>
#include <string>

namespace bpdc {

// Argument outside the mathematical domain of a function.
class DomainError : public std::domain_error {
 public:
  explicit DomainError(const std::string& what) : std::domain_error(what) {}
};

// Vector or matrix dimensions disagree.
class ShapeError : public std::invalid_argument {
 public:
  explicit ShapeError(const std::string& what) : std::invalid_argument(what) {}
};

// NaN/Inf encountered where a finite value is required.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Hyperparameters violate the finite beta-process prior constraints.
class InvalidPriorError : public std::invalid_argument {
 public:
  explicit InvalidPriorError(const std::string& what)
      : std::invalid_argument(what) {}
};

// Object used out of order (e.g. backward without a forward cache).
class StateError : public std::logic_error {
 public:
  explicit StateError(const std::string& what) : std::logic_error(what) {}
};

// Malformed or truncated file.
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

// Checkpoint written by an incompatible format version.
class VersionError : public FormatError {
 public:
  explicit VersionError(const std::string& what) : FormatError(what) {}
};

// Request exceeds what a brute-force routine is willing to enumerate.
class RefusalError : public std::invalid_argument {
 public:
  explicit RefusalError(const std::string& what)
      : std::invalid_argument(what) {}
};

// Unknown or malformed configuration key.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

}  // namespace bpdc
