#include "qdial/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "qdial/error.hpp"

namespace qdial::network {

namespace {

using constants::pi;

constexpr double tangent_pole_limit = 1e9;

void require(bool ok, const char* what) {
  if (!ok) throw Error(ErrorKind::InvalidArgument, what);
}

double checked_tan(double arg, const char* where) {
  const double c = std::cos(arg);
  const double s = std::sin(arg);
  if (std::abs(s) > tangent_pole_limit * std::abs(c)) {
    std::ostringstream os;
    os << "tan(" << where << ") evaluated at a pole (arg=" << arg << " rad); perturb omega";
    throw Error(ErrorKind::TangentPole, os.str());
  }
  return s / c;
}

// Voltage/current pair on the line, current flowing toward +x (away from the node).
struct LineState {
  complex v;
  complex i;
};

LineState propagate_back(const LineState& s, double beta, double d, double z0) {
  const double c = std::cos(beta * d);
  const double sn = std::sin(beta * d);
  const complex j(0.0, 1.0);
  return {s.v * c + j * z0 * s.i * sn, s.i * c + j * (s.v / z0) * sn};
}

struct ProfileSolution {
  LineState at_end;
  LineState right_of_inductor;
  LineState left_of_inductor;
  complex node_current;
};

// Unit voltage at the open end, propagated back to the node.
ProfileSolution solve_from_open_end(const FilterGeometry& geom, double l_s, double omega) {
  const double beta = omega / geom.v_p;
  const complex j(0.0, 1.0);
  ProfileSolution sol;
  sol.at_end = {complex(1.0, 0.0), j * omega * geom.c_g};
  sol.right_of_inductor = propagate_back(sol.at_end, beta, geom.l_f - geom.x_s, geom.z0);
  sol.left_of_inductor = {sol.right_of_inductor.v + j * omega * l_s * sol.right_of_inductor.i,
                          sol.right_of_inductor.i};
  sol.node_current = propagate_back(sol.left_of_inductor, beta, geom.x_s, geom.z0).i;
  return sol;
}

complex scale_to_node(const ProfileSolution& sol, complex i0) {
  const double ref = std::abs(sol.at_end.v) / 1.0 + std::abs(sol.right_of_inductor.i) +
                     std::abs(sol.left_of_inductor.v);
  if (std::abs(sol.node_current) < 1e-14 * ref) {
    throw Error(ErrorKind::TangentPole,
                "node current vanishes for finite line excitation (profile pole); perturb omega");
  }
  return i0 / sol.node_current;
}

}  // namespace

void SquidArray::validate() const {
  require(n_squids >= 1, "n_squids must be >= 1");
  require(ic_junction > 0.0, "ic_junction must be > 0");
  require(l_fixed_per_squid >= 0.0, "l_fixed_per_squid must be >= 0");
  require(clamp_epsilon > 0.0 && clamp_epsilon < 0.1, "clamp_epsilon must lie in (0, 0.1)");
}

void FilterGeometry::validate() const {
  require(z0 > 0.0 && v_p > 0.0 && l_f > 0.0, "z0, v_p and l_f must be > 0");
  require(x_s >= 0.0 && x_s <= l_f, "x_s must lie in [0, l_f]");
  require(c_g >= 0.0 && c_d >= 0.0, "c_g and c_d must be >= 0");
  require(z_source > 0.0, "z_source must be > 0");
}

void QubitLoad::validate() const {
  require(c_q > 0.0, "c_q must be > 0");
  require(f_q > 0.0, "f_q must be > 0");
  require(!t1_internal || *t1_internal > 0.0, "t1_internal must be > 0 when present");
}

double squid_critical_current(const SquidArray& arr, double flux_ratio) {
  return 2.0 * arr.ic_junction * std::abs(std::cos(pi * flux_ratio));
}

double effective_critical_current(const SquidArray& arr, double flux_ratio, InductanceMode mode) {
  const double c = std::abs(std::cos(pi * flux_ratio));
  if (c < arr.clamp_epsilon) {
    if (mode == InductanceMode::strict) {
      std::ostringstream os;
      os << "|cos(pi*flux)| = " << c << " below clamp_epsilon " << arr.clamp_epsilon
         << " at flux_ratio " << flux_ratio;
      throw Error(ErrorKind::HalfFluxDivergence, os.str());
    }
    return 2.0 * arr.ic_junction * arr.clamp_epsilon;
  }
  return 2.0 * arr.ic_junction * c;
}

double squid_array_inductance(const SquidArray& arr, double flux_ratio, double i_ac,
                              InductanceMode mode) {
  arr.validate();
  const double ic_sq = effective_critical_current(arr, flux_ratio, mode);
  const double n = arr.n_squids;
  double l = n * arr.l_fixed_per_squid + n * constants::flux_quantum / (2.0 * pi * ic_sq);
  if (i_ac != 0.0) {
    if (std::abs(i_ac) >= ic_sq) {
      std::ostringstream os;
      os << "|i_ac| = " << std::abs(i_ac) << " A >= Ic_SQ = " << ic_sq << " A";
      throw Error(ErrorKind::OverCritical, os.str());
    }
    l += n * constants::flux_quantum / (4.0 * pi) * i_ac * i_ac / (ic_sq * ic_sq * ic_sq);
  }
  return l;
}

complex input_impedance(const FilterGeometry& geom, double l_s, double omega) {
  geom.validate();
  if (!(omega > 0.0)) throw Error(ErrorKind::InvalidArgument, "omega must be > 0");
  const complex j(0.0, 1.0);
  const double beta = omega / geom.v_p;
  const double l_r = geom.l_f - geom.x_s;
  const double z0 = geom.z0;

  const double t_left = checked_tan(beta * geom.x_s, "beta*x_s");
  const double t_right = checked_tan(beta * l_r, "beta*L_r");

  // Right section seen from x_s.
  complex z2;
  bool z2_infinite = false;
  if (geom.c_g > 0.0) {
    const complex z_end = 1.0 / (j * omega * geom.c_g);
    z2 = z0 * (z_end + j * z0 * t_right) / (z0 + j * z_end * t_right);
  } else if (t_right != 0.0) {
    z2 = -j * z0 / t_right;
  } else {
    z2_infinite = true;  // zero-length open section
  }

  if (z2_infinite) return -j * z0 / t_left;

  const complex z1 = j * omega * l_s + z2;
  return z0 * (z1 + j * z0 * t_left) / (z0 + j * z1 * t_left);
}

double filter_frequency_first_order(double f0, double l_s, double z0) {
  if (!(f0 > 0.0 && z0 > 0.0) || l_s < 0.0)
    throw Error(ErrorKind::InvalidArgument, "need f0 > 0, z0 > 0, l_s >= 0");
  return f0 / (1.0 + 4.0 * f0 * l_s / z0);
}

double short_condition(const FilterGeometry& geom, double l_s, double omega) {
  // omega*L_s + X2 + Z0 tan(beta x_s) = 0 multiplied by cos(beta x_s) and by
  // the denominator of X2, then divided by Z0.
  const double beta = omega / geom.v_p;
  const double a = beta * geom.x_s;
  const double b = beta * (geom.l_f - geom.x_s);
  const double wcz = omega * geom.c_g * geom.z0;
  const double d2 = wcz * std::cos(b) + std::sin(b);
  const double n2 = -std::cos(b) + wcz * std::sin(b);
  return (omega * l_s / geom.z0) * d2 * std::cos(a) + n2 * std::cos(a) + std::sin(a) * d2;
}

double filter_frequency_exact(const FilterGeometry& geom, double l_s, const RootScan& scan) {
  geom.validate();
  if (l_s < 0.0) throw Error(ErrorKind::InvalidArgument, "l_s must be >= 0");
  const double f0 = geom.f0();
  const double f_lo = scan.f_lo_factor * f0;
  const double f_hi = scan.f_hi_factor * f0;
  const int n = std::max(scan.grid_points, 2);
  auto g = [&](double f) { return short_condition(geom, l_s, 2.0 * pi * f); };

  double best_lo = 0.0, best_hi = 0.0, best_dist = std::numeric_limits<double>::infinity();
  bool found = false;
  int sign_changes = 0;
  double f_prev = f_lo;
  double g_prev = g(f_prev);
  for (int k = 1; k < n; ++k) {
    const double f = f_lo + (f_hi - f_lo) * k / (n - 1);
    const double gv = g(f);
    if (g_prev == 0.0 || (g_prev < 0.0) != (gv < 0.0)) {
      ++sign_changes;
      const double dist = std::abs(0.5 * (f_prev + f) - f0);
      if (dist < best_dist) {
        best_dist = dist;
        best_lo = f_prev;
        best_hi = f;
        found = true;
      }
    }
    f_prev = f;
    g_prev = gv;
  }
  if (!found) {
    std::ostringstream os;
    os << "no sign change of the short condition in [" << f_lo << ", " << f_hi << "] Hz over "
       << n << " points (l_s = " << l_s << " H, g(lo) = " << g(f_lo) << ", g(hi) = " << g(f_hi)
       << ")";
    throw Error(ErrorKind::NoRootFound, os.str());
  }

  double lo = best_lo, hi = best_hi;
  double g_lo = g(lo);
  if (g_lo == 0.0) return lo;
  for (int it = 0; it < 200 && (hi - lo) > scan.rel_tol * 0.5 * (hi + lo); ++it) {
    const double mid = 0.5 * (lo + hi);
    const double gm = g(mid);
    if (gm == 0.0) return mid;
    if ((gm < 0.0) == (g_lo < 0.0)) {
      lo = mid;
      g_lo = gm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

double perturbative_pull(const FilterGeometry& geom, double l_s) {
  geom.validate();
  const double c = std::cos(pi * geom.x_s / (2.0 * geom.l_f));
  return -(2.0 / pi) * (geom.omega0() * l_s / geom.z0) * c * c;
}

complex inductor_current(const FilterGeometry& geom, double l_s, double omega, complex i0) {
  geom.validate();
  const ProfileSolution sol = solve_from_open_end(geom, l_s, omega);
  return sol.right_of_inductor.i * scale_to_node(sol, i0);
}

std::vector<ProfilePoint> current_profile(const FilterGeometry& geom, double l_s, double omega,
                                          complex i0, int n_points) {
  geom.validate();
  if (n_points < 2) throw Error(ErrorKind::InvalidArgument, "n_points must be >= 2");
  const ProfileSolution sol = solve_from_open_end(geom, l_s, omega);
  const complex scale = scale_to_node(sol, i0);
  const double beta = omega / geom.v_p;

  auto right = [&](double x) {
    return propagate_back(sol.at_end, beta, geom.l_f - x, geom.z0).i * scale;
  };
  auto left = [&](double x) {
    return propagate_back(sol.left_of_inductor, beta, geom.x_s - x, geom.z0).i * scale;
  };

  std::vector<ProfilePoint> out;
  out.reserve(n_points + 2);
  bool inserted = false;
  for (int k = 0; k < n_points; ++k) {
    const double x = geom.l_f * k / (n_points - 1);
    if (!inserted && x >= geom.x_s) {
      out.push_back({geom.x_s, left(geom.x_s)});
      out.push_back({geom.x_s, right(geom.x_s)});
      inserted = true;
      if (x == geom.x_s) continue;
    }
    out.push_back({x, x < geom.x_s ? left(x) : right(x)});
  }
  return out;
}

MarginCheck nonlinearity_margin(double i_peak, double ic_sq) {
  if (!(ic_sq > 0.0)) throw Error(ErrorKind::InvalidArgument, "ic_sq must be > 0");
  const double m = 5.0 * i_peak / ic_sq;
  return {m, m < nonlinearity_margin_limit};
}

complex qubit_admittance(const FilterGeometry& geom, double l_s, double omega) {
  const complex z_in = input_impedance(geom, l_s, omega);
  if (geom.c_d == 0.0) return {0.0, 0.0};
  const complex j(0.0, 1.0);
  const complex z_node = geom.z_source * z_in / (geom.z_source + z_in);
  const complex y_cd = j * omega * geom.c_d;
  return y_cd / (1.0 + y_cd * z_node);
}

namespace {

double coupling_rate(const FilterGeometry& geom, double l_s, const QubitLoad& qubit, double omega) {
  return std::max(0.0, qubit_admittance(geom, l_s, omega).real()) / qubit.c_q;
}

}  // namespace

CouplingFigures coupling_figures(const FilterGeometry& geom, const SquidArray& arr,
                                 const QubitLoad& qubit, double flux_ratio, double drive_freq,
                                 const CouplingOptions& opts) {
  geom.validate();
  qubit.validate();
  if (!(drive_freq > 0.0)) throw Error(ErrorKind::InvalidArgument, "drive_freq must be > 0");
  const double omega = 2.0 * pi * drive_freq;
  const double l_s = squid_array_inductance(arr, flux_ratio, 0.0, opts.mode);

  CouplingFigures out;
  out.gamma_qf = coupling_rate(geom, l_s, qubit, omega);
  if (out.gamma_qf > 0.0) {
    out.t1_ext = 1.0 / out.gamma_qf;
  } else {
    out.t1_ext = std::numeric_limits<double>::infinity();
    out.t1_ext_infinite = true;
  }
  if (qubit.t1_internal) {
    out.t1_total = 1.0 / (out.gamma_qf + 1.0 / *qubit.t1_internal);
  } else {
    out.t1_total = out.t1_ext;
  }

  const double l_ref = squid_array_inductance(arr, opts.reference_flux, 0.0, opts.mode);
  const double gamma_ref = coupling_rate(geom, l_ref, qubit, omega);
  out.rabi_relative = gamma_ref > 0.0 ? std::sqrt(out.gamma_qf / gamma_ref)
                                      : std::numeric_limits<double>::quiet_NaN();
  return out;
}

double node_current_from_dbm(double power_dbm, double z_source) {
  const double p_watt = 1e-3 * std::pow(10.0, power_dbm / 10.0);
  return std::sqrt(2.0 * p_watt / z_source);
}

std::vector<SweepRow> flux_sweep(const FilterGeometry& geom, const SquidArray& arr,
                                 const QubitLoad& qubit, std::span<const double> flux_grid,
                                 double drive_freq, const SweepOptions& opts) {
  if (flux_grid.empty()) throw Error(ErrorKind::InvalidArgument, "flux_grid is empty");
  geom.validate();
  arr.validate();
  qubit.validate();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const double omega = 2.0 * pi * drive_freq;

  std::vector<SweepRow> rows;
  rows.reserve(flux_grid.size());
  for (double flux : flux_grid) {
    SweepRow row;
    row.flux_ratio = flux;
    row.l_j_arr = row.f_f = row.gamma_qf = row.t1_ext = row.t1_total = row.rabi_rel = nan;
    row.i_peak = row.margin = nan;
    auto note = [&](const Error& e) {
      if (!row.error) row.error = std::string(to_string(e.kind()));
    };
    try {
      row.l_j_arr = squid_array_inductance(arr, flux, 0.0, opts.mode);
    } catch (const Error& e) {
      note(e);
      rows.push_back(row);
      continue;
    }
    try {
      row.f_f = filter_frequency_exact(geom, row.l_j_arr);
    } catch (const Error& e) {
      note(e);
    }
    try {
      const CouplingFigures cf = coupling_figures(geom, arr, qubit, flux, drive_freq,
                                                  {opts.mode, opts.reference_flux});
      row.gamma_qf = cf.gamma_qf;
      row.t1_ext = cf.t1_ext;
      row.t1_total = cf.t1_total;
      row.rabi_rel = cf.rabi_relative;
    } catch (const Error& e) {
      note(e);
    }
    try {
      row.i_peak = std::abs(inductor_current(geom, row.l_j_arr, omega, opts.i_node));
      row.margin =
          nonlinearity_margin(row.i_peak, effective_critical_current(arr, flux, opts.mode)).margin;
    } catch (const Error& e) {
      note(e);
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace qdial::network
