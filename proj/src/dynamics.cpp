#include "qdial/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "qdial/error.hpp"
#include "qdial/numerics.hpp"

namespace qdial::dynamics {

namespace {

using numerics::exp_divided_difference;

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorKind::InvalidArgument, what);
}

}  // namespace

void DecayRates::validate() const {
  for (double r : {gamma_ge, gamma_ef, gamma_fh, gamma_gf, gamma_gh, gamma_eh})
    require(r >= 0.0 && std::isfinite(r), "decay rates must be finite and >= 0");
}

DecayRates DecayRates::from_t1(double t1_ge, double t1_ef, double t1_fh) {
  require(t1_ge > 0.0 && t1_ef > 0.0 && t1_fh > 0.0, "lifetimes must be > 0");
  DecayRates r;
  r.gamma_ge = 1.0 / t1_ge;
  r.gamma_ef = 1.0 / t1_ef;
  r.gamma_fh = 1.0 / t1_fh;
  return r;
}

PopulationVector PopulationVector::pure(int level) {
  require(level >= 0 && level < 4, "level must be 0..3");
  PopulationVector v;
  v.p = {0.0, 0.0, 0.0, 0.0};
  v.p[level] = 1.0;
  return v;
}

void PopulationVector::validate(double tol) const {
  for (double x : p) {
    if (!(x >= -tol && x <= 1.0 + tol))
      throw Error(ErrorKind::InvalidPopulations, "population outside [0, 1]");
  }
  if (std::abs(sum() - 1.0) > tol) {
    std::ostringstream os;
    os << "populations sum to " << sum();
    throw Error(ErrorKind::InvalidPopulations, os.str());
  }
}

char prep_label(Prep prep) {
  switch (prep) {
    case Prep::e: return 'e';
    case Prep::f: return 'f';
    case Prep::h: return 'h';
  }
  return '?';
}

Prep prep_from_label(char c) {
  switch (c) {
    case 'e': return Prep::e;
    case 'f': return Prep::f;
    case 'h': return Prep::h;
    default: throw Error(ErrorKind::InvalidArgument, std::string("unknown preparation '") + c + "'");
  }
}

PopulationVector populations_closed_form(double t, const DecayRates& rates, Prep prep,
                                         SolutionMode mode) {
  rates.validate();
  require(t >= 0.0, "t must be >= 0");
  if (mode == SolutionMode::sequential && !rates.sequential())
    throw Error(ErrorKind::InvalidArgument, "sequential mode requires zero non-sequential rates");

  const double g_ge = rates.gamma_ge;
  const double a_f = rates.a_f();
  const double a_h = rates.a_h();
  // -g[a, b] = (exp(-a t) - exp(-b t)) / (b - a) is the two-step feeding kernel.
  auto two = [t](double a, double b) { return -exp_divided_difference({a, b}, t); };
  auto three = [t](double a, double b, double c) { return exp_divided_difference({a, b, c}, t); };

  PopulationVector out;
  out.p = {0.0, 0.0, 0.0, 0.0};
  switch (prep) {
    case Prep::e:
      out.p[1] = std::exp(-g_ge * t);
      break;
    case Prep::f:
      out.p[2] = std::exp(-a_f * t);
      out.p[1] = rates.gamma_ef * two(g_ge, a_f);
      break;
    case Prep::h:
      out.p[3] = std::exp(-a_h * t);
      out.p[2] = rates.gamma_fh * two(a_f, a_h);
      out.p[1] = rates.gamma_eh * two(g_ge, a_h) +
                 rates.gamma_ef * rates.gamma_fh * three(g_ge, a_f, a_h);
      break;
  }
  out.p[0] = 1.0 - out.p[1] - out.p[2] - out.p[3];
  for (double x : out.p) {
    if (!std::isfinite(x))
      throw Error(ErrorKind::DegenerateUnhandled, "closed form overflowed for these rates");
  }
  // Round-off can push a vanishing population a few ulp below zero.
  out.p[0] = std::clamp(out.p[0], 0.0, 1.0);
  return out;
}

double ground_population_closed_form(double t, const DecayRates& rates, Prep prep,
                                     SolutionMode mode) {
  return populations_closed_form(t, rates, prep, mode).p[0];
}

Eigen::Matrix4d rate_matrix(const DecayRates& r) {
  Eigen::Matrix4d q = Eigen::Matrix4d::Zero();
  // column j = source level
  q(0, 1) = r.gamma_ge;
  q(1, 1) = -r.gamma_ge;
  q(0, 2) = r.gamma_gf;
  q(1, 2) = r.gamma_ef;
  q(2, 2) = -r.a_f();
  q(0, 3) = r.gamma_gh;
  q(1, 3) = r.gamma_eh;
  q(2, 3) = r.gamma_fh;
  q(3, 3) = -r.a_h();
  return q;
}

std::vector<PopulationVector> populations_ode(std::span<const double> t_grid,
                                              const DecayRates& rates,
                                              const PopulationVector& init,
                                              const OdeOptions& opts) {
  rates.validate();
  for (std::size_t i = 1; i < t_grid.size(); ++i)
    require(t_grid[i] >= t_grid[i - 1], "t_grid must be non-decreasing");
  if (!t_grid.empty()) require(t_grid.front() >= 0.0, "t_grid must start at t >= 0");

  using V = Eigen::Vector4d;
  const Eigen::Matrix4d q = rate_matrix(rates);
  auto rhs = [&q](const V& p) -> V { return q * p; };

  // Dormand-Prince 5(4) tableau.
  constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  constexpr double a21 = 1.0 / 5;
  constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                   a54 = -212.0 / 729;
  constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                   a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                   b6 = 11.0 / 84;
  constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                   e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
  (void)c2;
  (void)c3;
  (void)c4;
  (void)c5;

  V y(init.p[0], init.p[1], init.p[2], init.p[3]);
  double t = 0.0;
  const double max_rate = std::max({rates.gamma_ge, rates.a_f(), rates.a_h(), 1e-300});
  double h = std::min(1e-3 / max_rate, t_grid.empty() ? 1.0 : std::max(t_grid.back(), 1e-300));
  long steps = 0;
  V k1 = rhs(y);

  std::vector<PopulationVector> out;
  out.reserve(t_grid.size());
  for (double target : t_grid) {
    while (t < target) {
      if (++steps > opts.max_steps)
        throw Error(ErrorKind::StepFailure, "step budget exhausted before reaching t_grid end");
      const bool last = t + h >= target;
      const double hs = last ? target - t : h;
      const V k2 = rhs(y + hs * (a21 * k1));
      const V k3 = rhs(y + hs * (a31 * k1 + a32 * k2));
      const V k4 = rhs(y + hs * (a41 * k1 + a42 * k2 + a43 * k3));
      const V k5 = rhs(y + hs * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
      const V k6 = rhs(y + hs * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
      const V y_new = y + hs * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
      const V k7 = rhs(y_new);
      const V err = hs * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
      double err_norm = 0.0;
      for (int i = 0; i < 4; ++i) {
        const double sc = opts.abs_tol + opts.rel_tol * std::max(std::abs(y[i]), std::abs(y_new[i]));
        err_norm = std::max(err_norm, std::abs(err[i]) / sc);
      }
      if (err_norm <= 1.0) {
        t = last ? target : t + hs;
        y = y_new;
        k1 = k7;
        const double factor = err_norm == 0.0 ? 5.0 : std::min(5.0, 0.9 * std::pow(err_norm, -0.2));
        if (!last || factor < 1.0) h = hs * std::max(0.2, factor);
      } else {
        h = hs * std::max(0.2, 0.9 * std::pow(err_norm, -0.2));
        if (h < 1e-15 * std::max(t, 1e-300) || h < 1e-300)
          throw Error(ErrorKind::StepFailure, "step size underflow; tolerance cannot be met");
      }
    }
    PopulationVector pv;
    for (int i = 0; i < 4; ++i) pv.p[i] = y[i];
    out.push_back(pv);
  }
  return out;
}

void PointerCalibration::validate() const {
  for (std::size_t i = 1; i < s.size(); ++i)
    if (s[i] != s[0]) return;
  throw Error(ErrorKind::InvalidArgument, "pointer calibration needs at least two distinct values");
}

std::vector<Complex> averaged_signal(std::span<const double> t_grid, const DecayRates& rates,
                                     const PopulationVector& init, const PointerCalibration& cal) {
  cal.validate();
  init.validate(1e-9);
  // The solution is linear in the initial state: combine pure-state closed forms.
  std::vector<Complex> out;
  out.reserve(t_grid.size());
  for (double t : t_grid) {
    std::array<double, 4> p{init.p[0], 0.0, 0.0, 0.0};
    for (int level = 1; level < 4; ++level) {
      if (init.p[level] == 0.0) continue;
      const PopulationVector sub = populations_closed_form(t, rates, static_cast<Prep>(level));
      for (int i = 0; i < 4; ++i) p[i] += init.p[level] * sub.p[i];
    }
    Complex s = cal.s[0];
    for (int i = 1; i < 4; ++i) s += (cal.s[i] - cal.s[0]) * p[i];
    out.push_back(s);
  }
  return out;
}

void ResetDataset::validate() const {
  for (const auto& [prep, samples] : curves) {
    for (std::size_t i = 1; i < samples.size(); ++i)
      if (!(samples[i].time > samples[i - 1].time))
        throw Error(ErrorKind::InvalidArgument,
                    std::string("times must be strictly increasing for prep ") + prep_label(prep));
  }
  if (floor_p_g)
    require(*floor_p_g > 0.0 && *floor_p_g <= 1.0, "floor_p_g must lie in (0, 1]");
}

PopulationVector apply_floor(const PopulationVector& p, double p_inf) {
  PopulationVector out;
  for (int i = 0; i < 4; ++i) out.p[i] = p_inf * p.p[i];
  out.p[1] += 1.0 - p_inf;
  return out;
}

namespace {

// Seed rate for one preparation: time at which P_g first crosses 1 - 1/e,
// scaled by the number of steps down the ladder.
double crossing_rate(const std::vector<ResetSample>& s, int steps) {
  for (const auto& sample : s) {
    if (sample.populations.g() >= 1.0 - std::exp(-1.0) * 1.0 && sample.time > 0.0)
      return steps / sample.time;
  }
  const double span = s.back().time > 0.0 ? s.back().time : 1.0;
  return steps / span;
}

}  // namespace

DecayFit fit_decay_rates(const ResetDataset& data, const DecayFitOptions& opts) {
  data.validate();
  if (data.curves.size() < 2)
    throw Error(ErrorKind::InvalidArgument, "fit_decay_rates needs at least two preparations");
  std::size_t n_res = 0;
  for (const auto& [prep, samples] : data.curves) {
    if (samples.size() < 5)
      throw Error(ErrorKind::InvalidArgument, "each preparation needs at least 5 time points");
    // Levels above the prepared one are unreachable; they carry no rate information
    // and would only pad the residual degrees of freedom.
    n_res += (static_cast<std::size_t>(prep) + 1) * samples.size();
  }

  using numerics::Vector;
  const bool with_floor = opts.fit_floor;
  const Eigen::Index n_par = with_floor ? 4 : 3;

  auto to_rates = [](const Vector& th) {
    DecayRates r;
    r.gamma_ge = std::exp(th[0]);
    r.gamma_ef = std::exp(th[1]);
    r.gamma_fh = std::exp(th[2]);
    return r;
  };

  const bool weighted = opts.weighting == DecayWeighting::multinomial;
  constexpr double weight_floor = 1e-6;
  auto residual = [&](const Vector& th) {
    const DecayRates r = to_rates(th);
    const double p_inf = with_floor ? th[3] : 1.0;
    Vector res(static_cast<Eigen::Index>(n_res));
    Eigen::Index k = 0;
    for (const auto& [prep, samples] : data.curves) {
      for (const auto& s : samples) {
        PopulationVector model = populations_closed_form(s.time, r, prep, SolutionMode::sequential);
        if (with_floor) model = apply_floor(model, p_inf);
        for (int i = 0; i <= static_cast<int>(prep); ++i) {
          const double d = model.p[i] - s.populations.p[i];
          res[k++] = weighted ? d / std::sqrt(std::max(model.p[i], weight_floor)) : d;
        }
      }
    }
    return res;
  };

  Vector seed(n_par);
  if (opts.seed) {
    seed[0] = std::log(opts.seed->gamma_ge);
    seed[1] = std::log(opts.seed->gamma_ef);
    seed[2] = std::log(opts.seed->gamma_fh);
  } else {
    // e-prep crossing gives Gamma_ge directly; otherwise use the lowest prep.
    double g_all = 0.0;
    const auto& first = *data.curves.begin();
    g_all = crossing_rate(first.second, static_cast<int>(first.first));
    const double g_ge = data.curves.count(Prep::e) ? crossing_rate(data.curves.at(Prep::e), 1)
                                                   : g_all;
    seed[0] = std::log(g_ge);
    seed[1] = std::log(1.5 * g_ge);
    seed[2] = std::log(2.0 * g_ge);
  }
  if (with_floor) {
    double tail = 0.0;
    for (const auto& [prep, samples] : data.curves) tail = std::max(tail, samples.back().populations.g());
    seed[3] = std::clamp(data.floor_p_g.value_or(tail), 0.5, 1.0);
  }

  numerics::LmOptions lm_opts;
  lm_opts.max_iterations = opts.max_iterations;
  lm_opts.fd_rel_step = opts.fd_rel_step;
  if (with_floor) {
    lm_opts.lower = Vector::Constant(n_par, -std::numeric_limits<double>::infinity());
    lm_opts.upper = Vector::Constant(n_par, std::numeric_limits<double>::infinity());
    lm_opts.lower[3] = 0.0;
    lm_opts.upper[3] = 1.0;
  }

  // A few seeds for the (ef, fh) ordering, which the data may not pin down from
  // one starting point.
  numerics::LmResult best;
  bool have = false;
  const std::array<std::pair<double, double>, 3> seed_pairs{{{0.0, 0.0}, {0.7, -0.4}, {-0.5, 0.6}}};
  for (const auto& [d1, d2] : seed_pairs) {
    Vector s = seed;
    s[1] += d1;
    s[2] += d2;
    numerics::LmResult lm = numerics::levenberg_marquardt(residual, s, lm_opts);
    if (!lm.params.allFinite()) continue;
    if (!have || lm.cost < best.cost) {
      best = lm;
      have = true;
    }
  }
  if (!have || (!best.converged && best.iterations >= opts.max_iterations))
    throw Error(ErrorKind::FitDiverged, "fit_decay_rates: no convergence");
  if (best.rank_deficient)
    throw Error(ErrorKind::RankDeficient, "fit_decay_rates: Jacobian is rank deficient");

  DecayFit out;
  out.rates = to_rates(best.params);
  out.iterations = best.iterations;
  out.residual_rms = std::sqrt(2.0 * best.cost / static_cast<double>(n_res));
  // Delta method from log-rates to rates.
  Eigen::VectorXd d(n_par);
  d[0] = out.rates.gamma_ge;
  d[1] = out.rates.gamma_ef;
  d[2] = out.rates.gamma_fh;
  if (with_floor) d[3] = 1.0;
  Eigen::MatrixXd cov = best.covariance;
  if (weighted) {
    // The categories at one time point sum to one, so each sample contributes
    // one fewer independent residual than it has entries.
    std::size_t n_samples = 0;
    for (const auto& kv : data.curves) n_samples += kv.second.size();
    const double dof_all = static_cast<double>(n_res) - static_cast<double>(n_par);
    const double dof_ind = dof_all - static_cast<double>(n_samples);
    if (dof_ind > 0.0) cov *= dof_all / dof_ind;
  }
  out.covariance = d.asDiagonal() * cov * d.asDiagonal();
  const std::array<double, 3> g{out.rates.gamma_ge, out.rates.gamma_ef, out.rates.gamma_fh};
  for (int k = 0; k < 3; ++k) {
    out.rate_sigma[k] = std::sqrt(std::max(0.0, out.covariance(k, k)));
    out.t1[k] = 1.0 / g[k];
    out.t1_sigma[k] = out.rate_sigma[k] / (g[k] * g[k]);
  }
  if (with_floor) {
    out.floor = best.params[3];
    out.floor_sigma = std::sqrt(std::max(0.0, out.covariance(3, 3)));
  }
  return out;
}

}  // namespace qdial::dynamics
