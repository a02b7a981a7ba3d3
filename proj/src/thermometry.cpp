#include "qdial/thermometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "qdial/error.hpp"
#include "qdial/numerics.hpp"

namespace qdial::thermometry {

namespace {

constexpr double p_floor = 1e-12;
constexpr int grid_points = 256;

double log_sum_exp(std::initializer_list<double> terms) {
  const double m = std::max(terms);
  double s = 0.0;
  for (double t : terms) s += std::exp(t - m);
  return m + std::log(s);
}

// log(1 + e^x)
double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

std::array<double, 3> reduced_energies(double temperature_k, const LevelLadder& ladder,
                                       const Units& units) {
  const auto e = ladder.energies_ghz();
  const double kt = units.kb_over_h_ghz_per_k * temperature_k;
  return {e[1] / kt, e[2] / kt, e[3] / kt};
}

}  // namespace

void LevelLadder::validate() const {
  if (!(f_ge_ghz > 0.0 && f_ef_ghz > 0.0 && f_fh_ghz > 0.0))
    throw Error(ErrorKind::InvalidArgument, "ladder transition frequencies must be > 0");
}

std::array<double, 4> LevelLadder::energies_ghz() const {
  return {0.0, f_ge_ghz, f_ge_ghz + f_ef_ghz, f_ge_ghz + f_ef_ghz + f_fh_ghz};
}

std::vector<double> boltzmann_weights(double temperature_k, std::span<const double> energies_ghz,
                                      const Units& units) {
  if (!(temperature_k > 0.0)) throw Error(ErrorKind::InvalidArgument, "temperature must be > 0");
  const double kt = units.kb_over_h_ghz_per_k * temperature_k;
  const double e_min = *std::min_element(energies_ghz.begin(), energies_ghz.end());
  std::vector<double> w(energies_ghz.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::exp(-(energies_ghz[i] - e_min) / kt);
  const double z = std::accumulate(w.begin(), w.end(), 0.0);
  for (double& x : w) x /= z;
  return w;
}

PopulationVector boltzmann_populations(double temperature_k, const LevelLadder& ladder,
                                       const Units& units) {
  ladder.validate();
  const auto e = ladder.energies_ghz();
  const auto w = boltzmann_weights(temperature_k, e, units);
  PopulationVector p;
  std::copy(w.begin(), w.end(), p.p.begin());
  return p;
}

double chi_squared(double temperature_k, const PopulationVector& meas, const LevelLadder& ladder,
                   const Units& units) {
  const PopulationVector th = boltzmann_populations(temperature_k, ladder, units);
  double chi2 = 0.0;
  for (int i = 0; i < 4; ++i) {
    const double d = meas.p[i] - th.p[i];
    chi2 += d * d / std::max(th.p[i], p_floor);
  }
  return chi2;
}

std::map<char, double> ratio_temperatures(const PopulationVector& meas, const LevelLadder& ladder,
                                          const Units& units) {
  ladder.validate();
  std::map<char, double> out;
  if (!(meas.p[0] > 0.0)) return out;
  const auto e = ladder.energies_ghz();
  const char labels[4] = {'g', 'e', 'f', 'h'};
  for (int i = 1; i < 4; ++i) {
    if (!(meas.p[i] > 0.0)) continue;
    const double lr = std::log(meas.p[i] / meas.p[0]);
    if (lr == 0.0) continue;  // infinite temperature
    out[labels[i]] = -e[i] / (units.kb_over_h_ghz_per_k * lr);
  }
  return out;
}

TemperatureEstimate fit_temperature(const PopulationVector& meas, const LevelLadder& ladder,
                                    const FitBounds& bounds, const Units& units) {
  ladder.validate();
  meas.validate(1e-6);
  if (!(bounds.t_min > 0.0 && bounds.t_max > bounds.t_min))
    throw Error(ErrorKind::InvalidArgument, "temperature bounds must satisfy 0 < t_min < t_max");

  auto chi2 = [&](double t) { return chi_squared(t, meas, ladder, units); };

  std::array<double, grid_points> grid{};
  const double l0 = std::log(bounds.t_min), l1 = std::log(bounds.t_max);
  int best = 0;
  double best_val = std::numeric_limits<double>::infinity();
  for (int k = 0; k < grid_points; ++k) {
    grid[k] = k == grid_points - 1 ? bounds.t_max
                                   : std::exp(l0 + (l1 - l0) * k / (grid_points - 1.0));
    if (k == 0) grid[k] = bounds.t_min;
    const double v = chi2(grid[k]);
    if (v < best_val) {
      best_val = v;
      best = k;
    }
  }
  const double lo = grid[std::max(best - 1, 0)];
  const double hi = grid[std::min(best + 1, grid_points - 1)];
  double t = numerics::golden_section_minimize(chi2, lo, hi, 1e-12);
  // Golden section never lands exactly on the bracket ends.
  for (double cand : {lo, hi, grid[best]})
    if (chi2(cand) < chi2(t)) t = cand;

  TemperatureEstimate est;
  est.t_eff = t;
  est.chi2_min = chi2(t);
  est.at_boundary = std::abs(t - bounds.t_min) <= 1e-6 * bounds.t_min ||
                    std::abs(t - bounds.t_max) <= 1e-6 * bounds.t_max;

  const PopulationVector th = boltzmann_populations(t, ladder, units);
  const double mean = 0.25 * meas.sum();
  double ss_res = 0.0, ss_tot = 0.0;
  for (int i = 0; i < 4; ++i) {
    ss_res += (meas.p[i] - th.p[i]) * (meas.p[i] - th.p[i]);
    ss_tot += (meas.p[i] - mean) * (meas.p[i] - mean);
  }
  // Uniform populations leave R^2 undefined.
  est.r_squared = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : std::numeric_limits<double>::quiet_NaN();
  est.ratio_temps = ratio_temperatures(meas, ladder, units);
  return est;
}

double qcrb_bound(double temperature_k, const LevelLadder& ladder, int n_levels,
                  const Units& units) {
  ladder.validate();
  if (!(temperature_k > 0.0)) throw Error(ErrorKind::InvalidArgument, "temperature must be > 0");
  const auto [a, b, c] = reduced_energies(temperature_k, ladder, units);
  double log_b2 = 0.0;  // log of bound^2
  switch (n_levels) {
    case 2:
      log_b2 = 2.0 * softplus(a) - 2.0 * std::log(a) - a;
      break;
    case 3: {
      const double num = log_sum_exp({a + b, a, b});
      const double den = log_sum_exp({2.0 * std::log(a) + b, 2.0 * std::log(b) + a,
                                      2.0 * std::log(std::abs(a - b))});
      log_b2 = 2.0 * num - den - (a + b);
      break;
    }
    case 4: {
      const double num = log_sum_exp({a + b + c, a + b, a + c, b + c});
      const double den = log_sum_exp({2.0 * std::log(a) + b + c, 2.0 * std::log(b) + a + c,
                                      2.0 * std::log(c) + a + b, 2.0 * std::log(std::abs(a - b)) + c,
                                      2.0 * std::log(std::abs(a - c)) + b,
                                      2.0 * std::log(std::abs(b - c)) + a});
      log_b2 = 2.0 * num - den - (a + b + c);
      break;
    }
    default:
      throw Error(ErrorKind::InvalidArgument, "n_levels must be 2, 3 or 4");
  }
  return std::exp(0.5 * log_b2);
}

double qcrb_bound_variance(double temperature_k, const LevelLadder& ladder, int n_levels,
                           const Units& units) {
  ladder.validate();
  if (n_levels < 2 || n_levels > 4)
    throw Error(ErrorKind::InvalidArgument, "n_levels must be 2, 3 or 4");
  const auto [a, b, c] = reduced_energies(temperature_k, ladder, units);
  const std::array<double, 4> x{0.0, a, b, c};
  std::vector<double> w(n_levels);
  double z = 0.0;
  for (int i = 0; i < n_levels; ++i) z += (w[i] = std::exp(-x[i]));
  double mean = 0.0;
  for (int i = 0; i < n_levels; ++i) mean += w[i] / z * x[i];
  double var = 0.0;
  for (int i = 0; i < n_levels; ++i) var += w[i] / z * (x[i] - mean) * (x[i] - mean);
  return 1.0 / std::sqrt(var);
}

WindowStatistics window_statistics(std::span<const double> temps) {
  if (temps.size() < 2) throw Error(ErrorKind::TooFewWindows, "window statistics need >= 2 windows");
  WindowStatistics s;
  s.n_win = temps.size();
  const double n = static_cast<double>(temps.size());
  s.mu_t = std::accumulate(temps.begin(), temps.end(), 0.0) / n;
  double ss = 0.0;
  for (double t : temps) ss += (t - s.mu_t) * (t - s.mu_t);
  s.sigma_t = std::sqrt(ss / (n - 1.0));
  s.sigma_mu = s.sigma_t / std::sqrt(n);
  return s;
}

WindowStatistics window_statistics(const WindowSeries& series) {
  if (series.n_shot_per_window < 1)
    throw Error(ErrorKind::InvalidArgument, "n_shot_per_window must be >= 1");
  return window_statistics(series.temps);
}

double net(double sigma_t, double t_meas) {
  if (!(t_meas > 0.0)) throw Error(ErrorKind::InvalidArgument, "t_meas must be > 0");
  return sigma_t * std::sqrt(t_meas);
}

double single_measurement_precision(const WindowStatistics& stats, long n_shot) {
  return stats.sigma_t / stats.mu_t * std::sqrt(static_cast<double>(n_shot));
}

PopulationVector populations_from_counts(const std::array<long, 4>& counts) {
  long total = 0;
  for (long c : counts) {
    if (c < 0) throw Error(ErrorKind::InvalidArgument, "counts must be >= 0");
    total += c;
  }
  if (total == 0) throw Error(ErrorKind::InvalidPopulations, "no counts");
  PopulationVector p;
  for (int i = 0; i < 4; ++i) p.p[i] = static_cast<double>(counts[i]) / static_cast<double>(total);
  return p;
}

WindowAnalysis analyze_windows(std::span<const std::array<long, 4>> window_counts,
                               const LevelLadder& ladder, double t_shot, long n_shot,
                               const FitBounds& bounds, const Units& units) {
  if (!(t_shot > 0.0)) throw Error(ErrorKind::InvalidArgument, "t_shot must be > 0");
  WindowAnalysis out;
  out.series.t_shot = t_shot;
  long largest = 0;
  for (const auto& counts : window_counts) {
    const PopulationVector p = populations_from_counts(counts);
    out.per_window.push_back(fit_temperature(p, ladder, bounds, units));
    out.series.temps.push_back(out.per_window.back().t_eff);
    largest = std::max(largest, counts[0] + counts[1] + counts[2] + counts[3]);
  }
  out.series.n_shot_per_window = std::max(n_shot > 0 ? n_shot : largest, 1L);
  out.stats = window_statistics(out.series);
  out.net = net(out.stats.sigma_t, out.series.t_meas());
  return out;
}

}  // namespace qdial::thermometry
