#include <doctest.h>

#include <cmath>
#include <vector>

#include "qdial/error.hpp"
#include "qdial/synth.hpp"
#include "qdial/thermometry.hpp"

using namespace qdial;
using namespace qdial::thermometry;

TEST_CASE("boltzmann populations against frozen values") {
  const auto p = boltzmann_populations(0.181072, ladder_q3);
  CHECK(p.g() == doctest::Approx(0.65496410641480601).epsilon(1e-13));
  CHECK(p.e() == doctest::Approx(0.22985463952851136).epsilon(1e-13));
  CHECK(p.f() == doctest::Approx(0.083597172656920309).epsilon(1e-13));
  CHECK(p.h() == doctest::Approx(0.031584081399762321).epsilon(1e-13));
  CHECK(boltzmann_populations(0.045, ladder_q4).g() ==
        doctest::Approx(0.98433807385745392).epsilon(1e-13));
  const auto p100 = boltzmann_populations(0.1, ladder_q3);
  CHECK(p100.e() == doctest::Approx(0.12743213856136082).epsilon(1e-13));
  CHECK(p100.h() == doctest::Approx(0.0035032041678520342).epsilon(1e-12));

  // Very cold: everything in g, no underflow trouble.
  const auto cold = boltzmann_populations(1e-3, ladder_q3);
  CHECK(cold.g() == 1.0);
  CHECK(cold.sum() == doctest::Approx(1.0));

  CHECK(Units::codata().kb_over_h_ghz_per_k == doctest::Approx(20.8366).epsilon(1e-5));
  CHECK_THROWS_AS(boltzmann_populations(-0.1, ladder_q3), Error);
  CHECK_THROWS_AS(boltzmann_populations(0.1, LevelLadder{1.0, 0.0, 1.0}), Error);
}

TEST_CASE("temperature fit") {
  for (double t : {0.03, 0.1, 0.181072, 0.5, 2.0}) {
    const auto est = fit_temperature(boltzmann_populations(t, ladder_q3), ladder_q3);
    CHECK(est.t_eff == doctest::Approx(t).epsilon(1e-9));
    CHECK(est.r_squared == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_FALSE(est.at_boundary);
    CHECK(est.chi2_min < 1e-15);
    for (char c : {'e', 'f', 'h'}) CHECK(est.ratio_temps.at(c) == doctest::Approx(t).epsilon(1e-12));
  }

  SUBCASE("uniform populations") {
    const PopulationVector u{{0.25, 0.25, 0.25, 0.25}};
    const auto est = fit_temperature(u, ladder_q3);
    CHECK(std::isnan(est.r_squared));
    CHECK(est.at_boundary);
    CHECK(est.t_eff == doctest::Approx(20.0));
    CHECK(est.ratio_temps.empty());
  }

  SUBCASE("pure ground state pins the lower bound") {
    const auto est = fit_temperature(PopulationVector::pure(0), ladder_q3);
    CHECK(est.at_boundary);
    CHECK(est.t_eff == doctest::Approx(1e-3));
  }

  SUBCASE("non-Boltzmann populations: the ratios disagree") {
    const PopulationVector m{{0.7, 0.2, 0.07, 0.03}};
    const auto est = fit_temperature(m, ladder_q3);
    CHECK(est.r_squared < 1.0);
    CHECK(est.ratio_temps.at('e') != doctest::Approx(est.ratio_temps.at('h')));
    // chi^2 minimum really is a minimum.
    CHECK(chi_squared(est.t_eff * 1.01, m, ladder_q3) > est.chi2_min);
    CHECK(chi_squared(est.t_eff * 0.99, m, ladder_q3) > est.chi2_min);
  }

  CHECK_THROWS_AS(fit_temperature(PopulationVector{{0.5, 0.6, 0.0, 0.0}}, ladder_q3), Error);
}

TEST_CASE("cramer-rao bounds") {
  // Two-level closed form at x = E/kT = 2.
  const LevelLadder two{2.0 * 20.84, 1.0, 1.0};
  CHECK(qcrb_bound(1.0, two, 2) == doctest::Approx(1.5430806348152438).epsilon(1e-13));

  CHECK(qcrb_bound(0.1, ladder_q3, 2) == doctest::Approx(1.5654156587267928).epsilon(1e-12));
  CHECK(qcrb_bound(0.1, ladder_q3, 3) == doctest::Approx(1.2473688908268499).epsilon(1e-12));
  CHECK(qcrb_bound(0.1, ladder_q3, 4) == doctest::Approx(1.1673759021730041).epsilon(1e-12));
  CHECK(qcrb_bound(0.181072, ladder_q3, 2) == doctest::Approx(2.1777947449023655).epsilon(1e-12));
  CHECK(qcrb_bound(0.181072, ladder_q3, 3) == doctest::Approx(1.5000992493196614).epsilon(1e-12));
  CHECK(qcrb_bound(0.181072, ladder_q3, 4) == doctest::Approx(1.2519377676623979).epsilon(1e-12));

  // Explicit and variance forms agree across a wide range, including deep cold.
  for (double t : {0.005, 0.02, 0.05, 0.1, 0.3, 1.0, 10.0}) {
    for (int n : {2, 3, 4}) {
      const double a = qcrb_bound(t, ladder_q3, n);
      const double b = qcrb_bound_variance(t, ladder_q3, n);
      CHECK(std::isfinite(a));
      CHECK(a == doctest::Approx(b).epsilon(1e-9));
    }
    // More levels never hurt.
    CHECK(qcrb_bound(t, ladder_q3, 4) <= qcrb_bound(t, ladder_q3, 3) * (1 + 1e-12));
    CHECK(qcrb_bound(t, ladder_q3, 3) <= qcrb_bound(t, ladder_q3, 2) * (1 + 1e-12));
  }
  CHECK_THROWS_AS(qcrb_bound(0.1, ladder_q3, 5), Error);
}

TEST_CASE("window statistics and NET") {
  CHECK(net(3.540e-3, 0.171) == doctest::Approx(0.0014638659774719816).epsilon(1e-14));
  std::vector<double> temps{0.1, 0.2, 0.3};
  const auto s = window_statistics(temps);
  CHECK(s.mu_t == doctest::Approx(0.2));
  CHECK(s.sigma_t == doctest::Approx(0.1));
  CHECK(s.sigma_mu == doctest::Approx(0.1 / std::sqrt(3.0)));
  CHECK(s.n_win == 3);
  try {
    window_statistics(std::vector<double>{0.1});
    FAIL("expected TooFewWindows");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::TooFewWindows);
  }
  WindowSeries ws{{0.1, 0.2, 0.3}, 5000, 34.2e-6};
  CHECK(ws.t_meas() == doctest::Approx(0.171));
  CHECK(single_measurement_precision(s, 5000) == doctest::Approx(0.5 * std::sqrt(5000.0)));

  const auto p = populations_from_counts({6, 2, 1, 1});
  CHECK(p.g() == doctest::Approx(0.6));
  CHECK_THROWS_AS(populations_from_counts({0, 0, 0, 0}), Error);
}

TEST_CASE("window scatter matches multinomial theory") {
  const double t = 0.181072;
  const long n_shot = 5000;
  const auto counts5 = synth::gen_window_counts(ladder_q3, 6, [t](long) { return t; }, 600, n_shot, 11);
  std::vector<std::array<long, 4>> counts;
  for (const auto& c : counts5) counts.push_back({c[0], c[1], c[2], c[3]});
  const auto a = analyze_windows(counts, ladder_q3, 34.2e-6, n_shot);
  CHECK(a.series.n_shot_per_window == n_shot);
  CHECK(a.stats.mu_t == doctest::Approx(t).epsilon(2e-3));
  CHECK(a.stats.sigma_t == doctest::Approx(0.003233743652731277).epsilon(0.1));
  CHECK(a.net == doctest::Approx(a.stats.sigma_t * std::sqrt(n_shot * 34.2e-6)));
}
