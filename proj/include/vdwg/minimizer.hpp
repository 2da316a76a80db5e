#pragma once

// Bound-constrained nonlinear least squares: Nelder-Mead to get into the basin,
// then Gauss-Newton with Levenberg damping on a forward/central-differenced
// Jacobian.  Bounds are enforced by projection.  All quantities here are in
// scaled (dimensionless, order-one) coordinates.

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace vdwg {

struct MinimizerOptions {
  int max_iterations = 500;       // simplex + Gauss-Newton iterations combined
  int max_simplex_iterations = 300;
  double rel_objective_tol = 1e-10;
  double step_tol = 1e-8;
  double gradient_tol = 1e-6;     // bound on the Gauss-Newton step length at the optimum
  double simplex_size = 0.05;     // initial simplex edge
  double jacobian_step = 1e-6;    // relative finite-difference step
};

struct MinimizerResult {
  Eigen::VectorXd x;
  Eigen::VectorXd residuals;
  double objective = 0.0;         // sum of squared residuals
  double initial_objective = 0.0;
  Eigen::MatrixXd jacobian;       // at x
  Eigen::MatrixXd covariance;     // (J^T J)^+ in scaled coordinates
  double condition_number = 0.0;  // of J^T J over the free parameters
  double gradient_norm = 0.0;     // Gauss-Newton step length (A^+ J^T r) at x
  std::vector<bool> at_lower;
  std::vector<bool> at_upper;
  int iterations = 0;
  bool converged = false;
  std::string message;
};

using ResidualFunction = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

/// Minimizes ||r(x)||^2 subject to lower <= x <= upper.  Never returns a point
/// with a larger objective than x0.  Residual functions may return non-finite
/// entries to reject a point.
MinimizerResult minimize_least_squares(const ResidualFunction& residuals,
                                       const Eigen::VectorXd& x0, const Eigen::VectorXd& lower,
                                       const Eigen::VectorXd& upper,
                                       const MinimizerOptions& options = {});

}  // namespace vdwg
