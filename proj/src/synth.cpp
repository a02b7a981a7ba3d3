#include "qdial/synth.hpp"

#include <algorithm>
#include <cmath>

#include "qdial/constants.hpp"
#include "qdial/error.hpp"
#include "qdial/rng.hpp"

namespace qdial::synth {

using classify::IqShot;
using classify::Level;

void ShotGenConfig::validate() const {
  ladder.validate();
  if (n_model_levels < 4) throw Error(ErrorKind::InvalidArgument, "n_model_levels must be >= 4");
  cluster_model.validate();
  for (Level l : {Level::g, Level::e, Level::f, Level::h}) cluster_model.at(l);
  if (n_model_levels > 4) cluster_model.at(Level::kplus);
  if (readout_decay) {
    readout_decay->rates.validate();
    if (!(readout_decay->sample_instant >= 0.0 &&
          readout_decay->sample_instant <= readout_decay->t_readout))
      throw Error(ErrorKind::InvalidArgument, "sample_instant must lie in [0, t_readout]");
  }
}

std::vector<double> extended_energies(const thermometry::LevelLadder& ladder, int n_levels) {
  ladder.validate();
  const double step = ladder.f_ef_ghz - ladder.f_fh_ghz;
  std::vector<double> e{0.0, ladder.f_ge_ghz, ladder.f_ge_ghz + ladder.f_ef_ghz};
  double f = ladder.f_fh_ghz;
  e.push_back(e.back() + f);
  while (static_cast<int>(e.size()) < n_levels) {
    f -= step;
    if (!(f > 0.0)) throw Error(ErrorKind::InvalidArgument, "extended ladder reaches f <= 0");
    e.push_back(e.back() + f);
  }
  e.resize(static_cast<std::size_t>(n_levels));
  return e;
}

std::vector<double> extended_populations(const thermometry::LevelLadder& ladder, int n_levels,
                                         double temperature_k, const thermometry::Units& units) {
  const auto e = extended_energies(ladder, n_levels);
  return thermometry::boltzmann_weights(temperature_k, e, units);
}

std::vector<long> sample_counts(std::span<const double> probs, long n, std::mt19937_64& rng) {
  std::vector<long> counts(probs.size(), 0);
  long left = n;
  double mass = 1.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (left == 0) break;
    if (i + 1 == probs.size()) {
      counts[i] = left;
      break;
    }
    const double q = mass > 0.0 ? std::clamp(probs[i] / mass, 0.0, 1.0) : 0.0;
    counts[i] = std::binomial_distribution<long>(left, q)(rng);
    left -= counts[i];
    mass -= probs[i];
  }
  return counts;
}

int gillespie_level(int level, const dynamics::DecayRates& r, double t, std::mt19937_64& rng) {
  double clock = 0.0;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  while (level >= 1 && level <= 3) {
    std::array<double, 3> to{};  // rates into g, e, f
    if (level == 1) to = {r.gamma_ge, 0.0, 0.0};
    if (level == 2) to = {r.gamma_gf, r.gamma_ef, 0.0};
    if (level == 3) to = {r.gamma_gh, r.gamma_eh, r.gamma_fh};
    const double total = to[0] + to[1] + to[2];
    if (total <= 0.0) break;
    clock += -std::log1p(-unif(rng)) / total;
    if (clock > t) break;
    double u = unif(rng) * total;
    int next = 0;
    for (int k = 0; k < 3; ++k) {
      if (u < to[k]) {
        next = k;
        break;
      }
      u -= to[k];
      next = k;
    }
    level = next;
  }
  return level;
}

namespace {

Level emitted_label(int level) { return level >= 4 ? Level::kplus : static_cast<Level>(level); }

std::vector<IqShot> thermal_shots(const ShotGenConfig& cfg, double temperature_k, long n,
                                  std::mt19937_64& rng) {
  const auto probs = extended_populations(cfg.ladder, cfg.n_model_levels, temperature_k);
  std::discrete_distribution<int> pick(probs.begin(), probs.end());
  std::normal_distribution<double> normal(0.0, 1.0);
  // Cholesky factors per emitted label.
  std::map<Level, Eigen::Matrix2d> chol;
  for (const auto& [label, c] : cfg.cluster_model.components) chol[label] = c.cov.llt().matrixL();

  std::vector<IqShot> out;
  out.reserve(static_cast<std::size_t>(n));
  for (long s = 0; s < n; ++s) {
    int level = pick(rng);
    if (cfg.readout_decay)
      level = gillespie_level(level, cfg.readout_decay->rates, cfg.readout_decay->sample_instant, rng);
    const Level label = emitted_label(level);
    const auto& c = cfg.cluster_model.at(label);
    const double z0 = normal(rng);
    const double z1 = normal(rng);
    const Eigen::Vector2d v = c.mean + chol[label] * Eigen::Vector2d(z0, z1);
    out.push_back({v[0], v[1], label});
  }
  return out;
}

}  // namespace

std::vector<IqShot> gen_thermal_shots(const ShotGenConfig& cfg, double temperature_k, long n) {
  cfg.validate();
  if (!(temperature_k > 0.0)) throw Error(ErrorKind::InvalidArgument, "temperature must be > 0");
  if (n < 1) throw Error(ErrorKind::InvalidArgument, "n must be >= 1");
  std::mt19937_64 rng(cfg.seed);
  return thermal_shots(cfg, temperature_k, n, rng);
}

std::vector<std::array<long, 5>> gen_window_counts(const thermometry::LevelLadder& ladder,
                                                   int n_model_levels,
                                                   const std::function<double(long)>& t_profile,
                                                   long n_win, long n_shot, std::uint64_t seed) {
  if (n_win < 2) throw Error(ErrorKind::InvalidArgument, "n_win must be >= 2");
  if (n_shot < 1) throw Error(ErrorKind::InvalidArgument, "n_shot must be >= 1");
  if (n_model_levels < 4) throw Error(ErrorKind::InvalidArgument, "n_model_levels must be >= 4");
  std::vector<std::array<long, 5>> out(static_cast<std::size_t>(n_win));
  for (long w = 0; w < n_win; ++w) {
    std::mt19937_64 rng = substream(seed, static_cast<std::uint64_t>(w));
    const auto probs = extended_populations(ladder, n_model_levels, t_profile(w));
    const auto counts = sample_counts(probs, n_shot, rng);
    auto& row = out[static_cast<std::size_t>(w)];
    row = {0, 0, 0, 0, 0};
    for (std::size_t k = 0; k < counts.size(); ++k) row[std::min<std::size_t>(k, 4)] += counts[k];
  }
  return out;
}

std::vector<std::vector<IqShot>> gen_window_series(const ShotGenConfig& cfg,
                                                   const std::function<double(long)>& t_profile,
                                                   long n_win, long n_shot) {
  cfg.validate();
  if (n_win < 2) throw Error(ErrorKind::InvalidArgument, "n_win must be >= 2");
  if (n_shot < 1) throw Error(ErrorKind::InvalidArgument, "n_shot must be >= 1");
  std::vector<std::vector<IqShot>> out;
  out.reserve(static_cast<std::size_t>(n_win));
  for (long w = 0; w < n_win; ++w) {
    std::mt19937_64 rng = substream(cfg.seed, static_cast<std::uint64_t>(w));
    out.push_back(thermal_shots(cfg, t_profile(w), n_shot, rng));
  }
  return out;
}

dynamics::ResetDataset gen_reset_curves(const dynamics::DecayRates& rates,
                                        std::span<const dynamics::Prep> preps,
                                        std::span<const double> t_grid, long n_shots_per_point,
                                        std::optional<double> floor_p_inf, std::uint64_t seed) {
  rates.validate();
  if (n_shots_per_point < 1) throw Error(ErrorKind::InvalidArgument, "n_shots_per_point must be >= 1");
  if (floor_p_inf && !(*floor_p_inf > 0.0 && *floor_p_inf <= 1.0))
    throw Error(ErrorKind::InvalidArgument, "floor must lie in (0, 1]");
  dynamics::ResetDataset data;
  data.floor_p_g = floor_p_inf;
  for (dynamics::Prep prep : preps) {
    if (data.curves.count(prep)) throw Error(ErrorKind::InvalidArgument, "duplicate preparation");
    const auto traj = dynamics::populations_ode(
        t_grid, rates, dynamics::PopulationVector::pure(static_cast<int>(prep)));
    auto& curve = data.curves[prep];
    for (std::size_t k = 0; k < t_grid.size(); ++k) {
      dynamics::PopulationVector p = traj[k];
      if (floor_p_inf) p = dynamics::apply_floor(p, *floor_p_inf);
      std::array<double, 4> probs{};
      for (int i = 0; i < 4; ++i) probs[i] = std::max(0.0, p.p[i]);
      std::mt19937_64 rng =
          substream(seed, (static_cast<std::uint64_t>(prep) << 32) | static_cast<std::uint64_t>(k));
      const auto counts = sample_counts(probs, n_shots_per_point, rng);
      dynamics::PopulationVector obs;
      for (int i = 0; i < 4; ++i)
        obs.p[i] = static_cast<double>(counts[i]) / static_cast<double>(n_shots_per_point);
      curve.push_back({t_grid[k], obs});
    }
  }
  return data;
}

RbDataset gen_rb_decay(double p_true, double a, double b, std::span<const double> m_grid,
                       long shots_per_point, std::uint64_t seed) {
  if (!(p_true > 0.0 && p_true <= 1.0)) throw Error(ErrorKind::InvalidArgument, "p_true must lie in (0, 1]");
  if (shots_per_point < 1) throw Error(ErrorKind::InvalidArgument, "shots_per_point must be >= 1");
  RbDataset out;
  for (std::size_t k = 0; k < m_grid.size(); ++k) {
    const double prob = std::clamp(a * std::pow(p_true, m_grid[k]) + b, 0.0, 1.0);
    std::mt19937_64 rng = substream(seed, k);
    const long hits = std::binomial_distribution<long>(shots_per_point, prob)(rng);
    out.m.push_back(m_grid[k]);
    out.p_g.push_back(static_cast<double>(hits) / static_cast<double>(shots_per_point));
  }
  return out;
}

classify::GmmModel default_cluster_model(double spacing) {
  classify::GmmModel m;
  const double radius = spacing / (2.0 * std::sin(constants::pi / 5.0));
  for (int k = 0; k < 5; ++k) {
    classify::Component c;
    const double phi = 2.0 * constants::pi * k / 5.0;
    c.mean = {radius * std::cos(phi), radius * std::sin(phi)};
    c.cov = Eigen::Matrix2d::Identity();
    c.weight = 0.2;
    m.components[static_cast<Level>(k)] = c;
  }
  return m;
}

}  // namespace qdial::synth
