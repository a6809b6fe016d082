#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>

namespace capfield {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

inline constexpr const char* kVersion = "0.1.0";

// Base class for all errors raised by the library. Every throw site uses a
// subclass so callers (and the CLI error reporter) can distinguish bad input
// from internal numeric trouble.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Malformed user-supplied data: files, CSV cells, JSON documents.
class InputError : public Error {
 public:
  using Error::Error;
};

// Constraint expression text that does not conform to the grammar.
class ParseError : public InputError {
 public:
  using InputError::InputError;
};

// A mathematically undefined evaluation (division by zero inside a
// constraint expression). Deliberately fatal: silently skipping a sample
// would corrupt attack statistics.
class EvalDomainError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration values (negative iteration counts, bad flags).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Numerical breakdown: non-finite values where finite ones are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace capfield
