#pragma once

// Boltzmann thermometry on the g, e, f, h manifold: temperature fits,
// per-ratio temperatures, Cramer-Rao bounds and window statistics.

#include <array>
#include <map>
#include <span>
#include <vector>

#include "qdial/constants.hpp"
#include "qdial/dynamics.hpp"

namespace qdial::thermometry {

using dynamics::PopulationVector;

struct LevelLadder {
  double f_ge_ghz = 0.0;
  double f_ef_ghz = 0.0;
  double f_fh_ghz = 0.0;

  void validate() const;
  /// E_0..E_3 in GHz.
  std::array<double, 4> energies_ghz() const;
};

/// Q3 and Q4 multilevel ladders (GHz).
inline constexpr LevelLadder ladder_q3{3.9514, 3.8167, 3.6730};
inline constexpr LevelLadder ladder_q4{3.9003, 3.7654, 3.6211};

struct Units {
  double kb_over_h_ghz_per_k = constants::kb_over_h_ghz_per_k;

  static Units codata() { return {constants::kb_over_h_codata_ghz_per_k}; }
};

PopulationVector boltzmann_populations(double temperature_k, const LevelLadder& ladder,
                                       const Units& units = {});

/// Boltzmann weights over an arbitrary list of energies (GHz).
std::vector<double> boltzmann_weights(double temperature_k, std::span<const double> energies_ghz,
                                      const Units& units = {});

struct TemperatureEstimate {
  double t_eff = 0.0;      // K
  double r_squared = 0.0;
  std::map<char, double> ratio_temps;  // 'e', 'f', 'h' -> K
  double chi2_min = 0.0;
  bool at_boundary = false;
};

struct FitBounds {
  double t_min = 1e-3;
  double t_max = 20.0;
};

double chi_squared(double temperature_k, const PopulationVector& meas, const LevelLadder& ladder,
                   const Units& units = {});

TemperatureEstimate fit_temperature(const PopulationVector& meas, const LevelLadder& ladder,
                                    const FitBounds& bounds = {}, const Units& units = {});

std::map<char, double> ratio_temperatures(const PopulationVector& meas, const LevelLadder& ladder,
                                          const Units& units = {});

/// Lower bound on (Delta T / T)_SM from the n lowest levels, n in {2, 3, 4}.
double qcrb_bound(double temperature_k, const LevelLadder& ladder, int n_levels,
                  const Units& units = {});

/// Same bound from k_B T / sqrt(Var_T(E)) over the truncated ladder.
double qcrb_bound_variance(double temperature_k, const LevelLadder& ladder, int n_levels,
                           const Units& units = {});

struct WindowSeries {
  std::vector<double> temps;  // K
  long n_shot_per_window = 1;
  double t_shot = 0.0;        // s

  double t_meas() const { return static_cast<double>(n_shot_per_window) * t_shot; }
};

struct WindowStatistics {
  double mu_t = 0.0;
  double sigma_t = 0.0;   // unbiased
  double sigma_mu = 0.0;
  std::size_t n_win = 0;
};

WindowStatistics window_statistics(std::span<const double> temps);
WindowStatistics window_statistics(const WindowSeries& series);

/// Noise-equivalent temperature sigma_T * sqrt(t_meas), K/sqrt(Hz).
double net(double sigma_t, double t_meas);

/// Normalized single-measurement precision (sigma_T / mu_T) sqrt(N_shot).
double single_measurement_precision(const WindowStatistics& stats, long n_shot);

/// Populations from g, e, f, h counts (no overflow level).
PopulationVector populations_from_counts(const std::array<long, 4>& counts);

struct WindowAnalysis {
  std::vector<TemperatureEstimate> per_window;
  WindowSeries series;
  WindowStatistics stats;
  double net = 0.0;
};

/// Fit every window of g, e, f, h counts and summarize. n_shot is the raw
/// window size including excluded overflow shots; 0 takes the largest count total.
WindowAnalysis analyze_windows(std::span<const std::array<long, 4>> window_counts,
                               const LevelLadder& ladder, double t_shot, long n_shot = 0,
                               const FitBounds& bounds = {}, const Units& units = {});

}  // namespace qdial::thermometry
