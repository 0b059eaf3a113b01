#pragma once

#include <stdexcept>
#include <string>

namespace dsmcsg {

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid parameters, orders, node counts or model settings.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Vector or matrix sizes that do not match the basis or grid.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Kernel bound times time step exceeds one.
class StepSizeError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values, inadmissible states or solver breakdown.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Operation requested on an object in an unusable state.
class StateError : public Error {
 public:
  using Error::Error;
};

/// Event log is malformed, incomplete or inconsistent with the replay request.
class ReplayError : public Error {
 public:
  using Error::Error;
};

}  // namespace dsmcsg
