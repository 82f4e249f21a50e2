#pragma once

#include <stdexcept>
#include <string>

namespace grokfit {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid argument or precondition violation.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Iterative numerical kernel failed (eigensolver did not converge, ...).
class NumericError : public Error {
 public:
  using Error::Error;
};

class QuadratureError : public NumericError {
 public:
  QuadratureError(const std::string& what, double partial, double abs_error)
      : NumericError(what), partial_(partial), abs_error_(abs_error) {}
  double partial_estimate() const noexcept { return partial_; }
  double abs_error_estimate() const noexcept { return abs_error_; }

 private:
  double partial_;
  double abs_error_;
};

// Target value is not straddled by the search interval.
class BracketError : public Error {
 public:
  using Error::Error;
};

// Singular normal equations, or a fit that lands outside the admissible region.
class FitDegenerateError : public Error {
 public:
  using Error::Error;
};

// The accuracy curve has too few samples inside its rise to be fitted.
class InsufficientTransitionError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace grokfit
