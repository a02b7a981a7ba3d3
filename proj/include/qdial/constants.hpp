#pragma once

namespace qdial::constants {

inline constexpr double pi = 3.14159265358979323846;
/// Magnetic flux quantum h/2e (Wb).
inline constexpr double flux_quantum = 2.067833848e-15;
inline constexpr double elementary_charge = 1.602176634e-19;
inline constexpr double planck = 6.62607015e-34;
inline constexpr double boltzmann = 1.380649e-23;

/// k_B/h in GHz/K as used for all thermometry numbers.
inline constexpr double kb_over_h_ghz_per_k = 20.84;
/// CODATA k_B/h in GHz/K.
inline constexpr double kb_over_h_codata_ghz_per_k = boltzmann / planck * 1e-9;

}  // namespace qdial::constants
