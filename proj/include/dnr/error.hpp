#pragma once

#include <stdexcept>
#include <string>

namespace dnr {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Extent or rank mismatch between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Input has the wrong layout (e.g. channel count).
class ShapeError : public Error {
 public:
  using Error::Error;
};

class UnsupportedModeError : public Error {
 public:
  using Error::Error;
};

/// Operation called out of order (e.g. backward before forward).
class StateError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// A loss or gradient became non-finite.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace dnr
