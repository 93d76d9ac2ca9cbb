#pragma once

#include <stdexcept>
#include <string>

namespace caplf {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed case text, CSV or JSON input. `line()` is 1-based, 0 when unknown.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, int line = 0)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

/// Structurally valid input that violates a model invariant (slack count,
/// dangling branch, non-PSD correlation, bad option value, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Newton-Raphson did not converge or hit a singular Jacobian.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, int iterations, double mismatch)
      : Error(what), iterations_(iterations), mismatch_(mismatch) {}
  int iterations() const noexcept { return iterations_; }
  double mismatch() const noexcept { return mismatch_; }

 private:
  int iterations_;
  double mismatch_;
};

/// |P_delta| is beyond the regulation capacity of the system.
class CapacityError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure inside a linear-algebra or statistics routine.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Wraps an upstream error with the pipeline stage it came from.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error("[" + stage + "] " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace caplf
