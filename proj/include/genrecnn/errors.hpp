#pragma once

#include <stdexcept>
#include <string>

namespace genrecnn {

/// Base class for all errors raised by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed container or file contents (bad magic, bad header, bad layout).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Well-formed input that uses a feature we do not handle (codec, bit depth).
class UnsupportedError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Tensor or matrix dimensions do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Input too short for the requested analysis window.
class InsufficientInputError : public Error {
 public:
  using Error::Error;
};

/// Invalid run configuration (empty split, bad ratio, missing data).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Operation called in the wrong order (e.g. backward without forward).
class StateError : public Error {
 public:
  using Error::Error;
};

/// Filesystem or stream failure.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace genrecnn
