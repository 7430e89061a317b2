#pragma once

#include <stdexcept>
#include <string>

namespace ddmpc {

// Failure taxonomy shared across the library. Everything thrown on purpose
// derives from Error so callers can catch at whatever granularity they need.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape mismatch between arguments.
struct DimError : Error {
  using Error::Error;
};

// Non-finite entries, or a matrix that violates a structural requirement.
struct InvalidMatrix : Error {
  using Error::Error;
};

// A matrix required to be positive (semi)definite is not.
struct NotPsd : Error {
  using Error::Error;
};

// Bad user-supplied configuration (values, not file IO).
struct ConfigError : Error {
  using Error::Error;
};

// The cost-shaping constant c does not exceed lambda_min(Q). Kept separate
// from ConfigError: the synthesis problem is infeasible for such c, so the
// CLI reports it through the initial-infeasibility path with a suggested fix.
struct CTooSmall : ConfigError {
  using ConfigError::ConfigError;
};

// Candidate model rejected by a consistency-set operation that requires
// membership.
struct NotInSet : Error {
  using Error::Error;
};

// A problem handed to the solver is structurally unusable.
struct InvalidProblem : Error {
  using Error::Error;
};

// Asked to extract results from a solve that did not succeed.
struct NoSolution : Error {
  using Error::Error;
};

// The very first receding-horizon solve failed; no controller can be started.
struct InitialInfeasible : Error {
  using Error::Error;
};

// A mid-run solve failed after the controller was already committed.
struct SolverFailed : Error {
  using Error::Error;
};

// Closed-loop state left the representable range.
struct Diverged : Error {
  using Error::Error;
};

// Riccati iteration did not converge; the pair is likely not stabilizable.
struct NotStabilizable : Error {
  using Error::Error;
};

}  // namespace ddmpc
