#pragma once

// Shared optimizers: bounded Levenberg-Marquardt with finite-difference
// Jacobians, golden-section search, and divided differences of exponentials.

#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace qdial::numerics {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

using ResidualFn = std::function<Vector(const Vector&)>;
using JacobianFn = std::function<Matrix(const Vector&)>;

struct LmOptions {
  int max_iterations = 200;
  double fd_rel_step = 1e-6;
  double xtol = 1e-14;
  double ftol = 1e-16;
  double gtol = 1e-15;
  /// Singular-value ratio (column-scaled Jacobian) below which the problem is
  /// declared rank deficient.
  double rank_tol = 1e-9;
  /// Optional box constraints; empty means unbounded.
  Vector lower;
  Vector upper;
};

struct LmResult {
  Vector params;
  Vector residuals;
  Matrix jacobian;
  /// Residual-variance-scaled inverse normal matrix s^2 (J^T J)^-1; empty when rank deficient.
  Matrix covariance;
  double cost = 0.0;  // 0.5 * |r|^2
  int iterations = 0;
  bool converged = false;
  bool rank_deficient = false;
  std::vector<bool> at_bound;
};

/// Central differences with relative step, one-sided next to a bound.
Matrix finite_difference_jacobian(const ResidualFn& f, const Vector& x, double rel_step,
                                  const Vector& lower = {}, const Vector& upper = {});

LmResult levenberg_marquardt(const ResidualFn& f, Vector x0, const LmOptions& opts = {},
                             const JacobianFn& jac = nullptr);

/// Minimizes a unimodal function on [lo, hi] until the bracket is below
/// rel_tol relative to its midpoint.
double golden_section_minimize(const std::function<double(double)>& f, double lo, double hi,
                               double rel_tol);

/// (1 - exp(-a t)) / a, continuous through a = 0.
double exp_integral(double a, double t);

/// Divided difference g[l1, ..., ln] of g(l) = exp(-l t) for n <= 3 rates, stable
/// for arbitrarily close or coincident rates.
double exp_divided_difference(std::vector<double> rates, double t);

}  // namespace qdial::numerics
