#pragma once

#include <stdexcept>
#include <string>

namespace scrcl {

/// Operand shapes are incompatible.
class DimensionError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// A caller broke an operation's precondition (non-scalar root, bad k, ...).
class ParameterError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// Input data violates a domain invariant (negative counts, duplicate ids, ...).
class ValidationError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Malformed input file; the message carries the path and line.
class ParseError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Contradictory or empty training configuration.
class ConfigError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// Training diverged.
class NumericError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

}  // namespace scrcl
