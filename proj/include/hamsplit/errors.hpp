#pragma once

#include <stdexcept>
#include <string>

namespace hamsplit {

/// Bad input: non-finite matrices, dimension mismatches, reversed intervals.
class InvalidArgument : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// A damping descriptor the propagator cannot evaluate exactly.
class UnsupportedDescriptor : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Eigensolver or factorization breakdown.
class NumericFailure : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// A one-step map could not produce the next state.
class StepFailure : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Bad experiment configuration (unknown names, incompatible step ladders).
class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Unwritable artifact paths, unreadable files.
class IoError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Reference solution failed its step-halving self-check.
class ReferenceError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

}  // namespace hamsplit
