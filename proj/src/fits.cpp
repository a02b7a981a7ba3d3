#include "qdial/fits.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <numeric>

#include "qdial/constants.hpp"
#include "qdial/error.hpp"
#include "qdial/numerics.hpp"

namespace qdial::fits {

namespace {

using numerics::Matrix;
using numerics::Vector;
using constants::pi;

void check_xy(std::span<const double> x, std::span<const double> y, std::span<const double> sigma,
              std::size_t min_points, const char* what) {
  if (x.size() != y.size())
    throw Error(ErrorKind::InvalidArgument, std::string(what) + ": x and y differ in length");
  if (!sigma.empty() && sigma.size() != y.size())
    throw Error(ErrorKind::InvalidArgument, std::string(what) + ": sigma length mismatch");
  if (x.size() < min_points)
    throw Error(ErrorKind::InvalidArgument,
                std::string(what) + ": need at least " + std::to_string(min_points) + " points");
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i]))
      throw Error(ErrorKind::InvalidArgument, std::string(what) + ": non-finite data");
    if (!sigma.empty() && !(sigma[i] > 0.0))
      throw Error(ErrorKind::InvalidArgument, std::string(what) + ": sigma must be > 0");
  }
}

double mean(std::span<const double> y) {
  return std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
}

double range(std::span<const double> y) {
  const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
  return *hi - *lo;
}

using Model = std::function<double(double x, const Vector& theta)>;

// Maps internal parameters to reported ones, plus d(reported)/d(internal) (diagonal).
struct Reporter {
  std::vector<std::string> names;
  std::function<Vector(const Vector&)> values;
  std::function<Vector(const Vector&)> derivative;
};

numerics::ResidualFn make_residual(const Model& model, std::span<const double> x,
                                   std::span<const double> y, std::span<const double> sigma) {
  return [=](const Vector& theta) {
    Vector r(static_cast<Eigen::Index>(x.size()));
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double w = sigma.empty() ? 1.0 : 1.0 / sigma[i];
      r[static_cast<Eigen::Index>(i)] = (model(x[i], theta) - y[i]) * w;
    }
    return r;
  };
}

FitResult package(const numerics::LmResult& lm, const Reporter& rep, std::size_t n_points) {
  FitResult out;
  out.names = rep.names;
  const Vector vals = rep.values(lm.params);
  for (std::size_t k = 0; k < rep.names.size(); ++k) out.params[rep.names[k]] = vals[k];
  out.converged = lm.converged;
  out.rank_deficient = lm.rank_deficient;
  out.iterations = lm.iterations;
  out.residual_rms = std::sqrt(2.0 * lm.cost / static_cast<double>(n_points));
  out.at_bound = std::any_of(lm.at_bound.begin(), lm.at_bound.end(), [](bool b) { return b; });
  if (!lm.rank_deficient) {
    const Vector d = rep.derivative(lm.params);
    out.covariance = d.asDiagonal() * lm.covariance * d.asDiagonal();
    if (out.converged) {
      for (std::size_t k = 0; k < rep.names.size(); ++k)
        out.sigmas[rep.names[k]] = std::sqrt(std::max(0.0, out.covariance(k, k)));
    }
  }
  return out;
}

numerics::LmResult run(const numerics::ResidualFn& f, const Vector& seed,
                       const numerics::LmOptions& opts, const char* what) {
  numerics::LmResult lm = numerics::levenberg_marquardt(f, seed, opts);
  if (!lm.converged && lm.iterations >= opts.max_iterations)
    throw Error(ErrorKind::FitDiverged,
                std::string(what) + ": no convergence in " + std::to_string(opts.max_iterations) +
                    " iterations");
  if (!lm.params.allFinite()) throw Error(ErrorKind::FitDiverged, std::string(what));
  return lm;
}

// Linear regression y = a + b x; returns (a, b).
std::pair<double, double> linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  const double b = sxx > 0.0 ? sxy / sxx : 0.0;
  return {my - b * mx, b};
}

// Seeds (amplitude, rate) of y ~ A exp(-k x) + B for a fixed offset guess by
// regressing log|y - B| over points on the same side of B as the first point.
bool log_linear_seed(std::span<const double> x, std::span<const double> y, double offset,
                     double& amp, double& rate) {
  std::vector<double> xs, ls;
  const double sign = (y[0] - offset) >= 0.0 ? 1.0 : -1.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = sign * (y[i] - offset);
    if (d > 0.0) {
      xs.push_back(x[i]);
      ls.push_back(std::log(d));
    }
  }
  if (xs.size() < 2) return false;
  const auto [a, b] = linear_fit(xs, ls);
  amp = sign * std::exp(a);
  rate = -b;
  return std::isfinite(amp) && std::isfinite(rate);
}

}  // namespace

FitResult fit_exponential(std::span<const double> t, std::span<const double> y,
                          std::span<const double> sigma) {
  check_xy(t, y, sigma, 4, "fit_exponential");
  const double span_t = t.back() - t.front();
  if (!(span_t > 0.0)) throw Error(ErrorKind::InvalidArgument, "fit_exponential: t not increasing");

  if (range(y) <= 1e-14 * std::max(1.0, std::abs(mean(y)))) {
    FitResult flat;
    flat.names = {"A", "tau", "B"};
    flat.params = {{"A", 0.0}, {"tau", std::numeric_limits<double>::quiet_NaN()}, {"B", mean(y)}};
    flat.converged = true;
    flat.rank_deficient = true;
    return flat;
  }

  // Offset seed slightly beyond the last sample, then log-linear regression.
  const double drop = y.front() - y.back();
  const double b0 = y.back() - 0.02 * drop;
  double k0 = 3.0 / span_t;
  double amp, rate;
  if (log_linear_seed(t, y, b0, amp, rate) && rate > 0.0) k0 = rate;
  const double t_ref = t.front();
  Model model = [t_ref](double x, const Vector& th) {
    return th[0] * std::exp(-(x - t_ref) * std::exp(-th[1])) + th[2];
  };
  // Internal amplitude is referenced to the first sample time.
  const double a0 = y.front() - b0;
  Vector seed(3);
  seed << a0, std::log(1.0 / k0), b0;

  const auto f = make_residual(model, t, y, sigma);
  numerics::LmResult lm = run(f, seed, {}, "fit_exponential");

  Reporter rep{{"A", "tau", "B"},
               [t_ref](const Vector& th) {
                 const double tau = std::exp(th[1]);
                 Vector v(3);
                 v << th[0] * std::exp(t_ref / tau), tau, th[2];
                 return v;
               },
               [t_ref](const Vector& th) {
                 const double tau = std::exp(th[1]);
                 Vector d(3);
                 d << std::exp(t_ref / tau), tau, 1.0;
                 return d;
               }};
  // Referencing A at t_ref couples A and tau; recompute the reported
  // covariance through the full Jacobian of the reparametrization.
  FitResult out = package(lm, rep, t.size());
  if (!lm.rank_deficient) {
    const double tau = std::exp(lm.params[1]);
    Matrix d = Matrix::Zero(3, 3);
    d(0, 0) = std::exp(t_ref / tau);
    d(0, 1) = lm.params[0] * std::exp(t_ref / tau) * (-t_ref / tau);
    d(1, 1) = tau;
    d(2, 2) = 1.0;
    out.covariance = d * lm.covariance * d.transpose();
    if (out.converged)
      for (int k = 0; k < 3; ++k)
        out.sigmas[out.names[k]] = std::sqrt(std::max(0.0, out.covariance(k, k)));
  }
  return out;
}

FitResult fit_decaying_cosine(std::span<const double> t, std::span<const double> y,
                              std::span<const double> sigma) {
  check_xy(t, y, sigma, 8, "fit_decaying_cosine");
  const std::size_t n = t.size();
  const double span_t = t.back() - t.front();
  if (!(span_t > 0.0))
    throw Error(ErrorKind::InvalidArgument, "fit_decaying_cosine: t not increasing");

  const double y_mean = mean(y);
  std::vector<double> detr(n);
  for (std::size_t i = 0; i < n; ++i) detr[i] = y[i] - y_mean;
  double var = 0.0;
  for (double d : detr) var += d * d;
  var /= static_cast<double>(n);
  if (var <= 1e-24 * std::max(1.0, y_mean * y_mean))
    throw Error(ErrorKind::NoOscillation, "fit_decaying_cosine: trace has no variation");

  // Periodogram on (0, Nyquist] with 8x oversampling relative to 1/span.
  const double f_nyq = 0.5 * static_cast<double>(n - 1) / span_t;
  const int n_freq = static_cast<int>(8 * n);
  std::vector<double> power(n_freq);
  std::vector<std::complex<double>> coef(n_freq);
  for (int k = 0; k < n_freq; ++k) {
    const double f = f_nyq * (k + 1) / n_freq;
    std::complex<double> s(0.0, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      s += detr[i] * std::exp(std::complex<double>(0.0, -2.0 * pi * f * (t[i] - t.front())));
    coef[k] = s;
    power[k] = std::norm(s);
  }
  const int k_peak =
      static_cast<int>(std::max_element(power.begin(), power.end()) - power.begin());
  std::vector<double> sorted = power;
  std::nth_element(sorted.begin(), sorted.begin() + n_freq / 2, sorted.end());
  const double median = sorted[n_freq / 2];
  if (power[k_peak] < 3.0 * median)
    throw Error(ErrorKind::NoOscillation, "fit_decaying_cosine: spectral peak below noise floor");

  const double f_seed = f_nyq * (k_peak + 1) / n_freq;
  const double a_seed = 2.0 * std::abs(coef[k_peak]) / static_cast<double>(n);
  const double phi_seed = std::arg(coef[k_peak]);
  const double t_ref = t.front();

  Model model = [t_ref](double x, const Vector& th) {
    const double dt = x - t_ref;
    return th[0] * std::exp(-dt * std::exp(-th[3])) * std::cos(2.0 * pi * th[1] * dt + th[2]) +
           th[4];
  };
  const auto f = make_residual(model, t, y, sigma);
  numerics::LmOptions opts;
  opts.lower = Vector::Constant(5, -std::numeric_limits<double>::infinity());
  opts.upper = Vector::Constant(5, std::numeric_limits<double>::infinity());
  opts.lower[1] = 0.0;

  numerics::LmResult best;
  bool have = false;
  for (double tau_factor : {0.25, 1.0, 4.0, 50.0}) {
    Vector seed(5);
    seed << a_seed, f_seed, phi_seed, std::log(tau_factor * span_t), y_mean;
    try {
      numerics::LmResult lm = run(f, seed, opts, "fit_decaying_cosine");
      if (!have || lm.cost < best.cost) {
        best = lm;
        have = true;
      }
    } catch (const Error&) {
    }
  }
  if (!have) throw Error(ErrorKind::FitDiverged, "fit_decaying_cosine: all seeds failed");

  // Canonical sign: A >= 0, phi in (-pi, pi], referenced to t = 0.
  Reporter rep{{"A", "f", "phi", "tau", "B"},
               [t_ref](const Vector& th) {
                 double a = th[0];
                 double phi = th[2] - 2.0 * pi * th[1] * t_ref;
                 const double tau = std::exp(th[3]);
                 a *= std::exp(t_ref / tau);
                 if (a < 0.0) {
                   a = -a;
                   phi += pi;
                 }
                 phi = std::remainder(phi, 2.0 * pi);
                 Vector v(5);
                 v << a, th[1], phi, tau, th[4];
                 return v;
               },
               [t_ref](const Vector& th) {
                 const double tau = std::exp(th[3]);
                 Vector d(5);
                 d << std::exp(t_ref / tau), 1.0, 1.0, tau, 1.0;
                 return d;
               }};
  return package(best, rep, n);
}

FitResult fit_stretched_exponential(std::span<const double> t, std::span<const double> y,
                                    std::span<const double> sigma) {
  check_xy(t, y, sigma, 5, "fit_stretched_exponential");
  for (double v : y)
    if (!(v > 0.0 && v <= 1.0))
      throw Error(ErrorKind::InvalidArgument, "fit_stretched_exponential: y must lie in (0, 1]");

  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] > 0.0 && y[i] < 1.0) {
      lx.push_back(std::log(t[i]));
      ly.push_back(std::log(-std::log(y[i])));
    }
  }
  double alpha0 = 1.0;
  double t2_0 = t.back();
  if (lx.size() >= 2) {
    const auto [a, b] = linear_fit(lx, ly);
    if (b > 0.0) {
      alpha0 = b;
      t2_0 = std::exp(-a / b);
    }
  }
  alpha0 = std::clamp(alpha0, stretched_alpha_min, stretched_alpha_max);

  Model model = [](double x, const Vector& th) {
    if (x <= 0.0) return 1.0;
    return std::exp(-std::pow(x * std::exp(-th[0]), th[1]));
  };
  const auto f = make_residual(model, t, y, sigma);
  numerics::LmOptions opts;
  opts.lower = Vector(2);
  opts.upper = Vector(2);
  opts.lower << -std::numeric_limits<double>::infinity(), stretched_alpha_min;
  opts.upper << std::numeric_limits<double>::infinity(), stretched_alpha_max;
  Vector seed(2);
  seed << std::log(t2_0), alpha0;
  numerics::LmResult lm = run(f, seed, opts, "fit_stretched_exponential");

  Reporter rep{{"T2DD", "alpha"},
               [](const Vector& th) {
                 Vector v(2);
                 v << std::exp(th[0]), th[1];
                 return v;
               },
               [](const Vector& th) {
                 Vector d(2);
                 d << std::exp(th[0]), 1.0;
                 return d;
               }};
  FitResult out = package(lm, rep, t.size());
  if (lm.at_bound[1]) {
    out.at_bound = true;
    out.converged = false;
    out.sigmas.clear();
  }
  return out;
}

FitResult rb_fit(std::span<const double> m, std::span<const double> p_g,
                 std::span<const double> sigma) {
  check_xy(m, p_g, sigma, 5, "rb_fit");
  {
    std::vector<double> distinct(m.begin(), m.end());
    std::sort(distinct.begin(), distinct.end());
    if (std::unique(distinct.begin(), distinct.end()) - distinct.begin() < 5)
      throw Error(ErrorKind::InvalidArgument, "rb_fit: need at least 5 distinct lengths");
  }
  if (range(p_g) <= 1e-14 * std::max(1.0, std::abs(mean(p_g)))) {
    FitResult flat;
    flat.names = {"A", "p", "B"};
    flat.params = {{"A", 0.0}, {"p", 1.0}, {"B", mean(p_g)}};
    flat.converged = true;
    flat.rank_deficient = true;
    flat.at_bound = true;
    return flat;
  }

  Model model = [](double x, const Vector& th) { return th[0] * std::pow(th[1], x) + th[2]; };
  const auto f = make_residual(model, m, p_g, sigma);

  // Offset candidates below the smallest survival; keep the best log-linear seed.
  const double lo = *std::min_element(p_g.begin(), p_g.end());
  const double rng = range(p_g);
  Vector best_seed;
  double best_cost = std::numeric_limits<double>::infinity();
  for (double frac : {0.01, 0.05, 0.2, 0.5, 1.0, 3.0}) {
    const double b = lo - frac * rng;
    double amp, rate;
    if (!log_linear_seed(m, p_g, b, amp, rate)) continue;
    const double p = std::clamp(std::exp(-rate), 1e-6, 1.0);
    Vector seed(3);
    seed << amp, p, b;
    const double c = f(seed).squaredNorm();
    if (c < best_cost) {
      best_cost = c;
      best_seed = seed;
    }
  }
  if (best_seed.size() == 0) throw Error(ErrorKind::FitDiverged, "rb_fit: no usable seed");

  numerics::LmOptions opts;
  opts.lower = Vector::Constant(3, -std::numeric_limits<double>::infinity());
  opts.upper = Vector::Constant(3, std::numeric_limits<double>::infinity());
  opts.lower[1] = 1e-12;
  opts.upper[1] = 1.0;
  numerics::LmResult lm = run(f, best_seed, opts, "rb_fit");
  Reporter rep{{"A", "p", "B"}, [](const Vector& th) { return th; },
               [](const Vector& th) { return Vector::Ones(th.size()).eval(); }};
  return package(lm, rep, m.size());
}

double clifford_fidelity(double p_ref, double k) {
  if (!(p_ref >= 0.0 && p_ref <= 1.0) || !(k > 0.0))
    throw Error(ErrorKind::InvalidArgument, "clifford_fidelity: need p_ref in [0,1], k > 0");
  return 1.0 - (1.0 - p_ref) / (2.0 * k);
}

double interleaved_fidelity(double p_ref, double p_int) {
  if (p_ref == 0.0) throw Error(ErrorKind::DivisionByZero, "interleaved_fidelity: p_ref = 0");
  return 1.0 - 0.5 * (1.0 - p_int / p_ref);
}

QuadraticMinimum fit_quadratic_minimum(std::span<const double> x, std::span<const double> y) {
  check_xy(x, y, {}, 3, "fit_quadratic_minimum");
  const Eigen::Index n = static_cast<Eigen::Index>(x.size());
  Matrix a(n, 3);
  Vector b(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    a(i, 0) = 1.0;
    a(i, 1) = x[i];
    a(i, 2) = x[i] * x[i];
    b[i] = y[i];
  }
  const Eigen::Vector3d c = a.colPivHouseholderQr().solve(b);
  if (!(c[2] > 0.0))
    throw Error(ErrorKind::FitDiverged, "fit_quadratic_minimum: curvature is not positive");
  QuadraticMinimum out;
  out.coefficients = c;
  out.curvature = c[2];
  out.x_min = -c[1] / (2.0 * c[2]);
  out.y_min = c[0] + c[1] * out.x_min + c[2] * out.x_min * out.x_min;
  return out;
}

}  // namespace qdial::fits
