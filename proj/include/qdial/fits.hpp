#pragma once

// Curve-fit primitives for coherence and benchmarking data. All fits are
// bounded Levenberg-Marquardt with residual-scaled (J^T J)^-1 uncertainties.

#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace qdial::fits {

struct FitResult {
  std::vector<std::string> names;        // parameter order of the covariance
  std::map<std::string, double> params;
  std::map<std::string, double> sigmas;  // only when converged and full rank
  Eigen::MatrixXd covariance;            // empty when rank deficient
  double residual_rms = 0.0;
  bool converged = false;
  bool rank_deficient = false;
  bool at_bound = false;
  int iterations = 0;

  double param(const std::string& name) const { return params.at(name); }
  double sigma(const std::string& name) const { return sigmas.at(name); }
  bool has_sigmas() const { return !sigmas.empty(); }
};

/// y = A exp(-t/tau) + B.
FitResult fit_exponential(std::span<const double> t, std::span<const double> y,
                          std::span<const double> sigma = {});

/// y = A exp(-t/tau) cos(2 pi f t + phi) + B, f >= 0.
FitResult fit_decaying_cosine(std::span<const double> t, std::span<const double> y,
                              std::span<const double> sigma = {});

inline constexpr double stretched_alpha_min = 0.3;
inline constexpr double stretched_alpha_max = 5.0;

/// y = exp(-(t/T2DD)^alpha), alpha in [0.3, 5]. Parameters "T2DD", "alpha".
FitResult fit_stretched_exponential(std::span<const double> t, std::span<const double> y,
                                    std::span<const double> sigma = {});

/// P_g(m) = A p^m + B with p in (0, 1].
FitResult rb_fit(std::span<const double> m, std::span<const double> p_g,
                 std::span<const double> sigma = {});

inline constexpr double default_pulses_per_clifford = 45.0 / 24.0;

/// F = 1 - (1 - p_ref) / (2k).
double clifford_fidelity(double p_ref, double k = default_pulses_per_clifford);

/// F_G = 1 - (1 - p_int / p_ref) / 2; may exceed 1.
double interleaved_fidelity(double p_ref, double p_int);

struct QuadraticMinimum {
  double x_min;
  double y_min;
  double curvature;  // second-order coefficient c2 of y = c0 + c1 x + c2 x^2
  Eigen::Vector3d coefficients;
};

/// Least-squares parabola through (x, y); requires positive curvature.
QuadraticMinimum fit_quadratic_minimum(std::span<const double> x, std::span<const double> y);

}  // namespace qdial::fits
