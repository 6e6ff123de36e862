#pragma once

#include <stdexcept>
#include <string>

namespace ssmel {

/// Zero is not inside the convex hull of the (block-mean) estimating
/// functions: the Lagrange multiplier ran off to the divergence cap.
class HullDivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A matrix the method needs to invert is (numerically) singular.
class SingularMatrixError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Too few blocks for the parameter dimension (K < p).
class InfeasibleSplitError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A per-subset fit inside the DEL baseline failed.
class SubsetFitError : public std::runtime_error {
 public:
  SubsetFitError(long subset, const std::string& what)
      : std::runtime_error("subset " + std::to_string(subset) + ": " + what), subset_(subset) {}
  long subset() const { return subset_; }

 private:
  long subset_;
};

}  // namespace ssmel
