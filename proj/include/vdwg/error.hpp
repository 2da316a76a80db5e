#pragma once

#include <stdexcept>
#include <string>

namespace vdwg {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Quadrature or solver failed to reach the requested accuracy.
class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, double achieved_error)
      : Error(what), achieved_error_(achieved_error) {}
  double achieved_error() const { return achieved_error_; }

 private:
  double achieved_error_;
};

/// Malformed input text; carries the 1-based line number (0 if not applicable).
class ParseError : public Error {
 public:
  ParseError(const std::string& what, int line)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

/// Well-formed input that violates a structural invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent configuration (overlapping windows, undersampled grid, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Too few data for the number of fitted parameters.
class UnderdeterminedError : public Error {
 public:
  using Error::Error;
};

}  // namespace vdwg
