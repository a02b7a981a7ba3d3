#include "qdial/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "qdial/error.hpp"

namespace qdial::numerics {

namespace {

bool has_bounds(const Vector& b) { return b.size() > 0; }

Vector project(const Vector& x, const Vector& lower, const Vector& upper) {
  Vector y = x;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (has_bounds(lower)) y[i] = std::max(y[i], lower[i]);
    if (has_bounds(upper)) y[i] = std::min(y[i], upper[i]);
  }
  return y;
}

// Column-scaled SVD of J; returns false when rank deficient.
bool normal_inverse(const Matrix& jac, double rank_tol, Matrix& inv) {
  const Eigen::Index n = jac.cols();
  Vector scale(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double nrm = jac.col(k).norm();
    if (!(nrm > 0.0) || !std::isfinite(nrm)) return false;
    scale[k] = nrm;
  }
  const Matrix js = jac * scale.cwiseInverse().asDiagonal();
  Eigen::JacobiSVD<Matrix> svd(js, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& sv = svd.singularValues();
  if (sv.size() < n || sv[n - 1] < rank_tol * sv[0]) return false;
  const Matrix v = svd.matrixV();
  const Matrix inner = v * sv.array().square().inverse().matrix().asDiagonal() * v.transpose();
  inv = scale.cwiseInverse().asDiagonal() * inner * scale.cwiseInverse().asDiagonal();
  return true;
}

}  // namespace

Matrix finite_difference_jacobian(const ResidualFn& f, const Vector& x, double rel_step,
                                  const Vector& lower, const Vector& upper) {
  const Vector f0 = f(x);
  Matrix jac(f0.size(), x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double h = rel_step * std::max(std::abs(x[k]), 1e-8);
    const bool can_up = !has_bounds(upper) || x[k] + h <= upper[k];
    const bool can_down = !has_bounds(lower) || x[k] - h >= lower[k];
    Vector xp = x, xm = x;
    if (can_up && can_down) {
      xp[k] += h;
      xm[k] -= h;
      jac.col(k) = (f(xp) - f(xm)) / (2.0 * h);
    } else if (can_up) {
      xp[k] += h;
      jac.col(k) = (f(xp) - f0) / h;
    } else {
      xm[k] -= h;
      jac.col(k) = (f0 - f(xm)) / h;
    }
  }
  return jac;
}

LmResult levenberg_marquardt(const ResidualFn& f, Vector x0, const LmOptions& opts,
                             const JacobianFn& jac_fn) {
  const Vector& lo = opts.lower;
  const Vector& hi = opts.upper;
  auto jacobian = [&](const Vector& x) {
    return jac_fn ? jac_fn(x) : finite_difference_jacobian(f, x, opts.fd_rel_step, lo, hi);
  };

  LmResult res;
  Vector x = project(x0, lo, hi);
  Vector r = f(x);
  if (!r.allFinite()) throw Error(ErrorKind::FitDiverged, "non-finite residuals at the seed");
  double cost = 0.5 * r.squaredNorm();
  Matrix jac = jacobian(x);
  double lambda = -1.0;
  double nu = 2.0;

  int it = 0;
  for (; it < opts.max_iterations; ++it) {
    const Vector g = jac.transpose() * r;
    const Matrix a = jac.transpose() * jac;
    if (lambda < 0.0) lambda = 1e-3 * std::max(a.diagonal().maxCoeff(), 1e-300);
    if (g.lpNorm<Eigen::Infinity>() <= opts.gtol * std::max(cost, 1e-300) || cost == 0.0) {
      res.converged = true;
      break;
    }

    bool stepped = false;
    bool tiny_step = false;
    for (int inner = 0; inner < 60; ++inner) {
      Matrix damped = a;
      for (Eigen::Index k = 0; k < damped.rows(); ++k)
        damped(k, k) += lambda * std::max(a(k, k), 1e-300);
      const Vector delta = damped.ldlt().solve(-g);
      const Vector x_new = project(x + delta, lo, hi);
      const Vector step = x_new - x;
      if (step.norm() <= opts.xtol * (x.norm() + opts.xtol)) {
        tiny_step = true;
        break;
      }
      const Vector r_new = f(x_new);
      const double cost_new = r_new.allFinite() ? 0.5 * r_new.squaredNorm()
                                                : std::numeric_limits<double>::infinity();
      const double predicted = -(g.dot(step) + 0.5 * step.dot(a * step));
      const double rho = predicted > 0.0 ? (cost - cost_new) / predicted : -1.0;
      if (rho > 0.0 && cost_new < cost) {
        const double rel_drop = (cost - cost_new) / std::max(cost, 1e-300);
        x = x_new;
        r = r_new;
        cost = cost_new;
        jac = jacobian(x);
        lambda *= std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * rho - 1.0, 3));
        nu = 2.0;
        stepped = true;
        if (rel_drop <= opts.ftol) tiny_step = true;
        break;
      }
      lambda *= nu;
      nu *= 2.0;
      if (lambda > 1e300) {
        tiny_step = true;
        break;
      }
    }
    if (tiny_step) {
      res.converged = true;
      ++it;
      break;
    }
    if (!stepped) break;
  }

  res.params = x;
  res.residuals = r;
  res.jacobian = jac;
  res.cost = cost;
  res.iterations = it;
  res.at_bound.assign(x.size(), false);
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    if (has_bounds(lo) && x[k] <= lo[k]) res.at_bound[k] = true;
    if (has_bounds(hi) && x[k] >= hi[k]) res.at_bound[k] = true;
  }

  Matrix inv;
  if (normal_inverse(jac, opts.rank_tol, inv)) {
    const Eigen::Index dof = r.size() - x.size();
    const double s2 = dof > 0 ? 2.0 * cost / static_cast<double>(dof) : 0.0;
    res.covariance = s2 * inv;
  } else {
    res.rank_deficient = true;
  }
  return res;
}

double golden_section_minimize(const std::function<double(double)>& f, double lo, double hi,
                               double rel_tol) {
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - invphi * (b - a);
  double d = a + invphi * (b - a);
  double fc = f(c), fd = f(d);
  for (int it = 0; it < 500 && (b - a) > rel_tol * std::abs(0.5 * (a + b)); ++it) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - invphi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + invphi * (b - a);
      fd = f(d);
    }
  }
  return fc <= fd ? c : d;
}

namespace {

constexpr double series_switch = 1e-6;

// (exp(-d t) - 1) / d for d >= 0.
double expm1_ratio(double d, double t) {
  const double z = d * t;
  if (std::abs(z) < series_switch) return -t * (1.0 - z / 2.0 + z * z / 6.0);
  return std::expm1(-z) / d;
}

}  // namespace

double exp_integral(double a, double t) { return -expm1_ratio(a, t); }

double exp_divided_difference(std::vector<double> rates, double t) {
  std::sort(rates.begin(), rates.end());
  switch (rates.size()) {
    case 1:
      return std::exp(-rates[0] * t);
    case 2:
      return std::exp(-rates[0] * t) * expm1_ratio(rates[1] - rates[0], t);
    case 3: {
      const double base = std::exp(-rates[0] * t);
      const double d2 = rates[1] - rates[0];
      const double d3 = rates[2] - rates[0];
      if (d3 * t < 1e-3) {
        // sum_{k>=2} (-t)^k / k! * h_{k-2}(d2, d3), h_m the complete homogeneous polynomial.
        double sum = 0.0;
        double tk = t * t / 2.0;  // t^k / k!
        for (int k = 2; k < 14; ++k) {
          double hm = 0.0;
          const int m = k - 2;
          for (int i = 0; i <= m; ++i) hm += std::pow(d2, i) * std::pow(d3, m - i);
          sum += ((k % 2 == 0) ? 1.0 : -1.0) * tk * hm;
          tk *= t / (k + 1);
        }
        return base * sum;
      }
      const double h23 = std::exp(-d2 * t) * expm1_ratio(d3 - d2, t);
      const double h02 = expm1_ratio(d2, t);
      return base * (h23 - h02) / d3;
    }
    default:
      throw Error(ErrorKind::InvalidArgument, "divided difference supports 1 to 3 rates");
  }
}

}  // namespace qdial::numerics
