#pragma once

#include <stdexcept>
#include <string>

namespace fiokit {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dimension mismatch, malformed matrix, out-of-range parameter.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A grid is too coarse (or misaligned) for the oscillation it must carry.
class ResolutionError : public Error {
 public:
  using Error::Error;
};

/// An iterative procedure did not settle (flow integration, cutoff limit,
/// Newton solve).
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

/// The requested operation has no implementation for this object kind.
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

/// Experiment configuration failed validation.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace fiokit
