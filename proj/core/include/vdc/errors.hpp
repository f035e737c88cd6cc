#pragma once

#include <stdexcept>
#include <string>

namespace vdc {

/// Base for all toolkit errors.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Tensor rank/extent mismatch.
class ShapeError : public Error {
  public:
    using Error::Error;
};

/// Value outside the mathematical domain of an operation (NaN/Inf inputs,
/// logit of 0 or 1, normalization of an all-zero spectrum, ...).
class DomainError : public Error {
  public:
    using Error::Error;
};

/// Caller passed an out-of-range or inconsistent argument.
class ArgumentError : public Error {
  public:
    using Error::Error;
};

/// A linear system was too close to singular to solve.
class SingularError : public Error {
  public:
    SingularError(const std::string& what, double det) : Error(what), det_(det) {}

    double det() const { return det_; }

  private:
    double det_;
};

/// The inclusion-probability solution sits too close to a constraint boundary
/// for the branch Jacobian to be well defined. The message names the
/// near-active constraint.
class DegenerateError : public Error {
  public:
    using Error::Error;
};

/// File or stream I/O failed; the message carries the path.
class IoError : public Error {
  public:
    using Error::Error;
};

}  // namespace vdc
