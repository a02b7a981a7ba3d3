#pragma once

// Seeded synthetic datasets. Every generator is a pure function of its inputs
// and seed; windows and curve points draw from independent substreams.

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "qdial/classify.hpp"
#include "qdial/dynamics.hpp"
#include "qdial/thermometry.hpp"

namespace qdial::synth {

struct ReadoutDecay {
  dynamics::DecayRates rates;
  double t_readout = 0.0;       // s
  double sample_instant = 0.0;  // s, <= t_readout
};

struct ShotGenConfig {
  thermometry::LevelLadder ladder;
  int n_model_levels = 6;
  classify::GmmModel cluster_model;
  std::optional<ReadoutDecay> readout_decay;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Energies (GHz) of the first n levels; above h the transition frequency keeps
/// dropping by the constant step f_ef - f_fh.
std::vector<double> extended_energies(const thermometry::LevelLadder& ladder, int n_levels);

/// Boltzmann probabilities over the extended ladder.
std::vector<double> extended_populations(const thermometry::LevelLadder& ladder, int n_levels,
                                         double temperature_k,
                                         const thermometry::Units& units = {});

/// Multinomial draw via a chain of binomials.
std::vector<long> sample_counts(std::span<const double> probs, long n, std::mt19937_64& rng);

/// Level after a Gillespie walk over downward rates up to time t. Levels above h do not move.
int gillespie_level(int level, const dynamics::DecayRates& rates, double t, std::mt19937_64& rng);

/// Thermal shots; each shot's prep field carries its true emitted level.
std::vector<classify::IqShot> gen_thermal_shots(const ShotGenConfig& cfg, double temperature_k,
                                                long n);

/// Counts (g, e, f, h, k+) with exact classification, one window per entry.
std::vector<std::array<long, 5>> gen_window_counts(const thermometry::LevelLadder& ladder,
                                                   int n_model_levels,
                                                   const std::function<double(long)>& t_profile,
                                                   long n_win, long n_shot, std::uint64_t seed);

/// Raw shots per window; window w uses substream w of cfg.seed.
std::vector<std::vector<classify::IqShot>> gen_window_series(
    const ShotGenConfig& cfg, const std::function<double(long)>& t_profile, long n_win, long n_shot);

dynamics::ResetDataset gen_reset_curves(const dynamics::DecayRates& rates,
                                        std::span<const dynamics::Prep> preps,
                                        std::span<const double> t_grid, long n_shots_per_point,
                                        std::optional<double> floor_p_inf, std::uint64_t seed);

struct RbDataset {
  std::vector<double> m;
  std::vector<double> p_g;
};

RbDataset gen_rb_decay(double p_true, double a, double b, std::span<const double> m_grid,
                       long shots_per_point, std::uint64_t seed);

/// Reference relaxation times (s) of the multilevel device.
inline constexpr double reference_t1_ge = 238.22e-9;
inline constexpr double reference_t1_ef = 136.80e-9;
inline constexpr double reference_t1_fh = 128.84e-9;

/// Well-separated five-cluster readout model on a ring, unit-variance blobs.
classify::GmmModel default_cluster_model(double spacing = 8.0);

}  // namespace qdial::synth
