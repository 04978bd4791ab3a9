#pragma once

#include <stdexcept>
#include <string>

namespace spillover {

/// Bad user input: dimensions, ranges, unsupported design points.
class InvalidArgumentError : public std::invalid_argument {
 public:
  explicit InvalidArgumentError(const std::string& msg) : std::invalid_argument(msg) {}
};

/// Parameter point outside the region where the model is defined
/// (singular spatial filter, nonpositive determinant, unstable dynamics).
class InadmissibleParameterError : public std::runtime_error {
 public:
  explicit InadmissibleParameterError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Arithmetic left the computable regime (zero row sums, vanishing
/// residual variance, exact-rank trailing eigenvalue sums).
class NumericDegenerateError : public std::runtime_error {
 public:
  explicit NumericDegenerateError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A documented invariant of a domain type was violated.
class InvariantViolationError : public std::runtime_error {
 public:
  explicit InvariantViolationError(const std::string& msg) : std::runtime_error(msg) {}
};

class OptimizationFailureError : public std::runtime_error {
 public:
  explicit OptimizationFailureError(const std::string& msg) : std::runtime_error(msg) {}
};

class SelectionFailureError : public std::runtime_error {
 public:
  explicit SelectionFailureError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Information matrix too ill-conditioned to invert.
class SingularInformationError : public std::runtime_error {
 public:
  explicit SingularInformationError(const std::string& msg) : std::runtime_error(msg) {}
};

class ExperimentFailureError : public std::runtime_error {
 public:
  explicit ExperimentFailureError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed input files (CSV rows, manifests, dimension mismatches).
class IngestionError : public std::runtime_error {
 public:
  explicit IngestionError(const std::string& msg) : std::runtime_error(msg) {}
};

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace spillover
