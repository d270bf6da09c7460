#pragma once

#include <stdexcept>
#include <string>

namespace treebv {

/// Thrown when an input violates a structural constraint (zero column sums,
/// subspace membership, multiplier positivity).
class ConstraintViolation : public std::runtime_error {
 public:
  explicit ConstraintViolation(const std::string& what) : std::runtime_error(what) {}
};

/// Thrown when a normalization is requested at an atom whose martingale
/// value vanishes. Callers that sweep over atoms should test the norm first.
class PolarUndefined : public std::domain_error {
 public:
  explicit PolarUndefined(const std::string& what) : std::domain_error(what) {}
};

/// Thrown when constrained rejection sampling exhausts its retry budget.
class SamplingError : public std::runtime_error {
 public:
  explicit SamplingError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace treebv
