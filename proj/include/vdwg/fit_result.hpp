#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "vdwg/error.hpp"

namespace vdwg {

struct FitParameter {
  std::string name;
  std::string unit;
  double value = 0.0;
  double uncertainty = 0.0;  // one sigma; 0 when pinned at a bound
  bool at_lower = false;
  bool at_upper = false;
};

struct FitResult {
  std::string kind;  // "ratio", "c3_s0", "c3_fixed_s0"
  std::vector<FitParameter> parameters;
  double rss = 0.0;  // weighted sum of squared residuals
  int dof = 0;
  int iterations = 0;
  bool converged = false;
  double gradient_norm = 0.0;
  double condition_number = 0.0;
  bool ill_conditioned = false;
  std::vector<std::string> warnings;

  const FitParameter& param(std::string_view name) const;
  double value(std::string_view name) const { return param(name).value; }
  double uncertainty(std::string_view name) const { return param(name).uncertainty; }
};

/// Thrown when the minimizer stops without meeting its convergence test;
/// carries the best point found.
class ConvergenceError : public NumericalError {
 public:
  ConvergenceError(const std::string& what, FitResult best)
      : NumericalError(what, best.gradient_norm), best_(std::move(best)) {}
  const FitResult& best() const { return best_; }

 private:
  FitResult best_;
};

}  // namespace vdwg
