#pragma once

#include <stdexcept>
#include <string>

namespace psis {

/// Root of every exception thrown by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of a function (non-finite input,
/// Tan closed form beyond pi/2, invalid Jensen weights, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Evaluation requested at or beyond the terminal instant t = T_p.
class SingularityError : public Error {
 public:
  using Error::Error;
};

/// Invalid user configuration (eta floors, dimensions, unknown keys).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A trajectory lacks the samples or metadata an audit needs.
class AuditError : public Error {
 public:
  using Error::Error;
};

}  // namespace psis
