#pragma once

#include <stdexcept>
#include <string>

namespace hpvcal {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A model parameter is outside its domain (e.g. a non-positive duration).
class InvalidParameter : public Error {
 public:
  using Error::Error;
};

/// A flat vector has the wrong length for the requested layout.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Input that makes a quantity undefined, such as an empty gender when
/// normalising partner acquisition rates.
class DegenerateInput : public Error {
 public:
  using Error::Error;
};

/// Failures of the numerical integration. Carries the model time at which
/// the integrator gave up.
class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, double time) : Error(what), time_(time) {}
  double time() const noexcept { return time_; }

 private:
  double time_;
};

/// The step size fell below the configured minimum.
class StiffnessError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// A NaN/Inf appeared in the state, or a component went clearly negative.
class DivergenceError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Observable requested on a stratum with zero population.
class UndefinedObservable : public Error {
 public:
  using Error::Error;
};

/// A caller broke a documented precondition (e.g. asked for a time the
/// trajectory does not contain).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

/// The sampler's starting point has zero posterior density.
class InitializationError : public Error {
 public:
  using Error::Error;
};

/// Bad or incomplete run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed data file. Messages carry the file, row and column.
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace hpvcal
