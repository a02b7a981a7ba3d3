#pragma once

// Four-level (g, e, f, h) downward-only Pauli master equation: closed-form
// populations, an adaptive Runge-Kutta oracle, the averaged IQ pointer
// signal, and a global least-squares fit of the relaxation rates.

#include <array>
#include <complex>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace qdial::dynamics {

/// Rate Gamma_ij is the transition j -> i (1/s).
struct DecayRates {
  double gamma_ge = 0.0;
  double gamma_ef = 0.0;
  double gamma_fh = 0.0;
  double gamma_gf = 0.0;
  double gamma_gh = 0.0;
  double gamma_eh = 0.0;

  bool sequential() const { return gamma_gf == 0.0 && gamma_gh == 0.0 && gamma_eh == 0.0; }
  double a_f() const { return gamma_gf + gamma_ef; }
  double a_h() const { return gamma_gh + gamma_eh + gamma_fh; }
  void validate() const;

  /// Sequential rates from lifetimes (s).
  static DecayRates from_t1(double t1_ge, double t1_ef, double t1_fh);
};

struct PopulationVector {
  std::array<double, 4> p{1.0, 0.0, 0.0, 0.0};  // g, e, f, h

  double g() const { return p[0]; }
  double e() const { return p[1]; }
  double f() const { return p[2]; }
  double h() const { return p[3]; }
  double sum() const { return p[0] + p[1] + p[2] + p[3]; }
  double& operator[](std::size_t i) { return p[i]; }
  double operator[](std::size_t i) const { return p[i]; }

  static PopulationVector pure(int level);
  /// Throws InvalidPopulations unless every entry is in [0, 1] and the sum is 1 within tol.
  void validate(double tol = 1e-12) const;
};

enum class Prep { e = 1, f = 2, h = 3 };

char prep_label(Prep prep);
Prep prep_from_label(char c);

enum class SolutionMode { sequential, general };

/// Full population vector from the closed-form solution.
PopulationVector populations_closed_form(double t, const DecayRates& rates, Prep prep,
                                         SolutionMode mode = SolutionMode::general);

double ground_population_closed_form(double t, const DecayRates& rates, Prep prep,
                                     SolutionMode mode = SolutionMode::general);

struct OdeOptions {
  double abs_tol = 1e-12;
  double rel_tol = 1e-12;
  long max_steps = 10'000'000;
};

/// Dormand-Prince 5(4) integration of the rate equations from t = 0.
std::vector<PopulationVector> populations_ode(std::span<const double> t_grid,
                                              const DecayRates& rates,
                                              const PopulationVector& init,
                                              const OdeOptions& opts = {});

/// Generator matrix Q with dP/dt = Q P (columns sum to zero).
Eigen::Matrix4d rate_matrix(const DecayRates& rates);

using Complex = std::complex<double>;

struct PointerCalibration {
  std::array<Complex, 4> s{};  // s_g, s_e, s_f, s_h
  void validate() const;
};

std::vector<Complex> averaged_signal(std::span<const double> t_grid, const DecayRates& rates,
                                     const PopulationVector& init, const PointerCalibration& cal);

struct ResetSample {
  double time;
  PopulationVector populations;
};

struct ResetDataset {
  std::map<Prep, std::vector<ResetSample>> curves;
  std::optional<double> floor_p_g;

  void validate() const;
};

/// Observed populations with a thermal floor p_inf: p_inf * P(t) + (1 - p_inf) * |e>.
PopulationVector apply_floor(const PopulationVector& p, double p_inf);

struct DecayFit {
  DecayRates rates;
  std::array<double, 3> rate_sigma{};  // ge, ef, fh (1/s)
  std::array<double, 3> t1{};          // s
  std::array<double, 3> t1_sigma{};    // s
  /// Covariance of (Gamma_ge, Gamma_ef, Gamma_fh[, p_inf]).
  Eigen::MatrixXd covariance;
  std::optional<double> floor;
  std::optional<double> floor_sigma;
  double residual_rms = 0.0;
  int iterations = 0;
};

enum class DecayWeighting {
  /// Pearson chi-square: residuals scaled by 1/sqrt(P_model), which carries the
  /// multinomial covariance of the populations measured at one time point.
  multinomial,
  /// Plain least squares over populations.
  unweighted,
};

struct DecayFitOptions {
  bool fit_floor = false;
  DecayWeighting weighting = DecayWeighting::multinomial;
  int max_iterations = 200;
  double fd_rel_step = 1e-6;
  /// Optional starting rates; otherwise seeded from the data.
  std::optional<DecayRates> seed;
};

/// Joint nonlinear least squares of the sequential model over all preparations
/// and all four populations.
DecayFit fit_decay_rates(const ResetDataset& data, const DecayFitOptions& opts = {});

}  // namespace qdial::dynamics
