#pragma once

#include <stdexcept>
#include <string>

namespace manta {

/// Input outside the admissible domain of an operation (bad parameter ranges,
/// malformed files, inconsistent artifacts). Maps to CLI exit code 2.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A parameter outside its admissible range; `field()` names the culprit.
class DomainError : public ValidationError {
 public:
  DomainError(std::string field, const std::string& what)
      : ValidationError(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Numerical breakdown (singular systems, failed eigensolves). Exit code 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The design produces a degenerate or self-intersecting shell. Callers treat
/// it as a filtered sample, not a crash.
class GeometryInfeasible : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A hydrodynamic evaluation could not be completed.
class EvaluationFailed : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Internal volumes exceed the shell volume.
class PackagingInfeasible : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace manta
