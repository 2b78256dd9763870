#pragma once

#include <stdexcept>
#include <string>

namespace gasgrid {

/// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed or missing field in a network document.
struct SchemaError : Error {
  using Error::Error;
};

/// An id is referenced but never defined.
struct ReferenceError : Error {
  using Error::Error;
};

/// Unknown unit tag on a physical quantity.
struct UnitError : Error {
  using Error::Error;
};

/// Profile does not cover the requested horizon.
struct CoverageError : Error {
  using Error::Error;
};

/// Argument outside the mathematical domain of an operation.
struct DomainError : Error {
  using Error::Error;
};

/// Reduced network matrix is singular (disconnected graph).
struct SingularityError : Error {
  using Error::Error;
};

/// Aggregate capacity cannot cover demand; problem is infeasible before solve.
struct InfeasibleBoundsError : Error {
  using Error::Error;
};

/// Inconsistent run or model configuration.
struct ConfigError : Error {
  using Error::Error;
};

/// Robust withdrawal bounds are not ordered min <= nom <= max.
struct OrderingError : Error {
  using Error::Error;
};

/// Gas generator without a resolvable gas junction.
struct MappingError : Error {
  using Error::Error;
};

/// Variable layouts of two problems do not match.
struct LayoutError : Error {
  using Error::Error;
};

/// Injections handed to the DC power flow do not sum to zero.
struct BalanceError : Error {
  using Error::Error;
};

/// Newton iteration failed to reach tolerance.
struct NoConvergence : Error {
  using Error::Error;
};

/// Simulation produced a nonpositive density; inputs are physically infeasible.
struct NegativeDensity : Error {
  using Error::Error;
};

}  // namespace gasgrid
