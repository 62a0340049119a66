// errors.hpp — exception hierarchy shared by all collapsar components.

#pragma once

#include <stdexcept>
#include <string>

namespace collapsar {

// Root of all collapsar exceptions; carries the exit-code class used by the CLI.
class Error : public std::runtime_error {
  public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Operator with non-finite entries or broken Hermiticity contract.
class InvalidOperator : public Error {
  public:
    using Error::Error;
};

// Dimension or index mismatch between operands.
class ShapeError : public Error {
  public:
    using Error::Error;
};

// Zero-norm state where an expectation or normalization was required.
class DegenerateState : public Error {
  public:
    using Error::Error;
};

// Kernel or covariance matrix with negative eigenvalues beyond tolerance.
class NotPositiveSemiDefinite : public Error {
  public:
    using Error::Error;
};

// Two time grids expected to be identical differ.
class GridMismatch : public Error {
  public:
    using Error::Error;
};

// Argument outside the documented domain of an operation.
class InvalidArgument : public Error {
  public:
    using Error::Error;
};

// Discrete-line kernels carry their modes explicitly; no spectral density to transform.
class UseModeListDirectly : public Error {
  public:
    using Error::Error;
};

// Requested tensor dimension exceeds the configured cap.
class TooLarge : public Error {
  public:
    using Error::Error;
};

// Scenario parsing / semantic validation failure.
class ConfigError : public Error {
  public:
    using Error::Error;
};

}  // namespace collapsar
