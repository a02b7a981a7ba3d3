#pragma once

// Lossless transmission-line model of the flux-tunable quarter-wave drive
// filter: a line of length l_f open (or weakly capacitively loaded) at the far
// end, with a series dc-SQUID array at x_s, attached to the qubit node at x=0.
// All quantities are SI. Time convention e^{+iwt}: Z_L = iwL, Z_C = 1/(iwC).

#include <complex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qdial/constants.hpp"

namespace qdial::network {

using complex = std::complex<double>;

struct SquidArray {
  int n_squids = 5;
  double ic_junction = 10e-6;       // A, per junction
  double l_fixed_per_squid = 0.0;   // H
  double clamp_epsilon = 1e-3;

  void validate() const;
};

struct FilterGeometry {
  double z0 = 50.0;          // Ohm
  double v_p = 1.17e8;       // m/s
  double l_f = 6.5e-3;       // m
  double x_s = 2.0e-3;       // m
  double c_g = 0.0;          // F, open-end capacitance to ground
  double c_d = 4.4e-15;      // F, qubit-node coupling capacitance
  double z_source = 50.0;    // Ohm

  void validate() const;
  /// Bare quarter-wave frequency v_p / (4 l_f).
  double f0() const { return v_p / (4.0 * l_f); }
  double omega0() const { return constants::pi * v_p / (2.0 * l_f); }
};

struct QubitLoad {
  double c_q = 143e-15;                    // F
  double f_q = 4.5e9;                      // Hz
  std::optional<double> t1_internal;       // s; absent means no internal loss

  void validate() const;
};

struct CouplingFigures {
  double gamma_qf = 0.0;      // 1/s
  double t1_ext = 0.0;        // s, +inf when gamma_qf == 0
  double t1_total = 0.0;      // s
  double rabi_relative = 0.0; // sqrt(gamma_qf / gamma_ref)
  bool t1_ext_infinite = false;
};

enum class InductanceMode { strict, clamped };

double squid_critical_current(const SquidArray& arr, double flux_ratio);

/// Critical current actually used for the inductance: in clamped mode
/// |cos(pi Phi/Phi0)| is floored at clamp_epsilon.
double effective_critical_current(const SquidArray& arr, double flux_ratio, InductanceMode mode);

/// Series-array inductance N*L_fixed + N*Phi0/(2 pi Ic_SQ), plus the Kerr term
/// N*(Phi0/4pi)*I^2/Ic_SQ^3 when i_ac != 0.
double squid_array_inductance(const SquidArray& arr, double flux_ratio, double i_ac = 0.0,
                              InductanceMode mode = InductanceMode::strict);

/// Input impedance of the filter seen from the qubit node (drive port excluded).
complex input_impedance(const FilterGeometry& geom, double l_s, double omega);

double filter_frequency_first_order(double f0, double l_s, double z0);

/// Smooth, pole-free form of the short-node condition. Its zeros are the
/// filter frequencies; sign changes bracket them.
double short_condition(const FilterGeometry& geom, double l_s, double omega);

struct RootScan {
  int grid_points = 4096;
  double f_lo_factor = 0.3;
  double f_hi_factor = 1.2;
  double rel_tol = 1e-12;
};

/// Exact filter frequency (Hz): root of the short-node condition nearest f0.
double filter_frequency_exact(const FilterGeometry& geom, double l_s, const RootScan& scan = {});

/// First-order fractional shift (f_f - f0)/f0 = -(2/pi)(w0 L_s/Z0) cos^2(pi x_s / 2 l_f).
double perturbative_pull(const FilterGeometry& geom, double l_s);

struct ProfilePoint {
  double x;
  complex current;
};

/// Standing-wave current along the line for current i0 at x=0. The point
/// x_s appears twice (left and right limits) so continuity can be checked.
std::vector<ProfilePoint> current_profile(const FilterGeometry& geom, double l_s, double omega,
                                          complex i0, int n_points);

/// Current through the series inductor for current i0 at the node.
complex inductor_current(const FilterGeometry& geom, double l_s, double omega, complex i0);

struct MarginCheck {
  double margin;
  bool pass;
};

inline constexpr double nonlinearity_margin_limit = 0.25;

MarginCheck nonlinearity_margin(double i_peak, double ic_sq);

/// Admittance seen by the qubit through C_d into (Z_source || Z_in).
complex qubit_admittance(const FilterGeometry& geom, double l_s, double omega);

struct CouplingOptions {
  InductanceMode mode = InductanceMode::strict;
  double reference_flux = 0.0;
};

CouplingFigures coupling_figures(const FilterGeometry& geom, const SquidArray& arr,
                                 const QubitLoad& qubit, double flux_ratio, double drive_freq,
                                 const CouplingOptions& opts = {});

struct SweepRow {
  double flux_ratio = 0.0;
  double l_j_arr = 0.0;
  double f_f = 0.0;
  double gamma_qf = 0.0;
  double t1_ext = 0.0;
  double t1_total = 0.0;
  double rabi_rel = 0.0;
  double i_peak = 0.0;
  double margin = 0.0;
  std::optional<std::string> error;  // set when the row failed
};

struct SweepOptions {
  InductanceMode mode = InductanceMode::clamped;
  double reference_flux = 0.0;
  /// Drive current amplitude at the qubit node (A).
  double i_node = 0.0;
};

/// Node current amplitude for a drive power (dBm) delivered into z_source.
double node_current_from_dbm(double power_dbm, double z_source);

std::vector<SweepRow> flux_sweep(const FilterGeometry& geom, const SquidArray& arr,
                                 const QubitLoad& qubit, std::span<const double> flux_grid,
                                 double drive_freq, const SweepOptions& opts = {});

inline constexpr const char* sweep_csv_header =
    "flux_ratio,l_j_arr_H,f_f_Hz,gamma_qf_per_s,t1_ext_s,t1_total_s,rabi_rel,i_peak_A,margin";

}  // namespace qdial::network
