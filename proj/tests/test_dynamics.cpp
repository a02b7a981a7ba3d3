#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include <unsupported/Eigen/MatrixFunctions>

#include "qdial/dynamics.hpp"
#include "qdial/error.hpp"
#include "qdial/synth.hpp"

using namespace qdial;
using namespace qdial::dynamics;

namespace {

DecayRates reference_rates() {
  return DecayRates::from_t1(synth::reference_t1_ge, synth::reference_t1_ef, synth::reference_t1_fh);
}

// Independent oracle: exp(Q t) p0 with a generator built here, not by the library.
Eigen::Vector4d expm_oracle(const DecayRates& r, int level, double t) {
  Eigen::Matrix4d q = Eigen::Matrix4d::Zero();
  q(0, 1) = r.gamma_ge;
  q(1, 1) = -r.gamma_ge;
  q(0, 2) = r.gamma_gf;
  q(1, 2) = r.gamma_ef;
  q(2, 2) = -(r.gamma_gf + r.gamma_ef);
  q(0, 3) = r.gamma_gh;
  q(1, 3) = r.gamma_eh;
  q(2, 3) = r.gamma_fh;
  q(3, 3) = -(r.gamma_gh + r.gamma_eh + r.gamma_fh);
  Eigen::Vector4d p0 = Eigen::Vector4d::Zero();
  p0[level] = 1.0;
  return (q * t).exp() * p0;
}

}  // namespace

TEST_CASE("rates and population vectors") {
  const auto r = reference_rates();
  CHECK(r.sequential());
  CHECK(r.gamma_ge == doctest::Approx(1.0 / 238.22e-9));
  CHECK_THROWS_AS(DecayRates::from_t1(-1.0, 1.0, 1.0), Error);

  PopulationVector p{{0.5, 0.5, 0.0, 0.0}};
  CHECK_NOTHROW(p.validate());
  PopulationVector bad{{0.6, 0.5, 0.0, 0.0}};
  try {
    bad.validate();
    FAIL("expected InvalidPopulations");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InvalidPopulations);
  }
  CHECK(PopulationVector::pure(2).f() == 1.0);
  CHECK(prep_from_label('h') == Prep::h);
  CHECK(prep_label(Prep::f) == 'f');
  CHECK_THROWS_AS(prep_from_label('x'), Error);

  const Eigen::Matrix4d q = rate_matrix(r);
  for (int c = 0; c < 4; ++c) CHECK(std::abs(q.col(c).sum()) < 1e-6);
}

TEST_CASE("closed form against frozen high-precision values") {
  const auto r = reference_rates();
  CHECK(ground_population_closed_form(1.2e-6, r, Prep::h) ==
        doctest::Approx(0.96867009640748513).epsilon(1e-13));
  const auto pf = populations_closed_form(300e-9, r, Prep::f);
  CHECK(pf.g() == doctest::Approx(0.48380940525361119).epsilon(1e-13));
  CHECK(pf.e() == doctest::Approx(0.40460713566541761).epsilon(1e-13));
  CHECK(pf.f() == doctest::Approx(0.1115834590809712).epsilon(1e-13));
  CHECK(pf.h() == 0.0);
  const auto pe = apply_floor(populations_closed_form(1.2e-6, r, Prep::e), 0.985);
  CHECK(pe.g() == doctest::Approx(0.97860650403580144).epsilon(1e-13));
  CHECK(pe.sum() == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(ground_population_closed_form(0.0, r, Prep::h) == 0.0);
}

TEST_CASE("closed form agrees with the matrix exponential") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.2e6, 20e6);
  for (int k = 0; k < 10; ++k) {
    DecayRates r;
    r.gamma_ge = u(rng);
    r.gamma_ef = u(rng);
    r.gamma_fh = u(rng);
    r.gamma_gf = 0.3 * u(rng);
    r.gamma_gh = 0.2 * u(rng);
    r.gamma_eh = 0.1 * u(rng);
    for (double t : {10e-9, 200e-9, 1.5e-6}) {
      for (Prep prep : {Prep::e, Prep::f, Prep::h}) {
        const auto p = populations_closed_form(t, r, prep);
        const auto o = expm_oracle(r, static_cast<int>(prep), t);
        for (int i = 0; i < 4; ++i) CHECK(std::abs(p[i] - o[i]) < 1e-12);
      }
    }
  }
}

TEST_CASE("closed form agrees with the ODE on 1000 random rate triples") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(1e6, 20e6);
  std::vector<double> grid;
  for (int i = 0; i <= 20; ++i) grid.push_back(i * 100e-9);
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    DecayRates r;
    r.gamma_ge = u(rng);
    r.gamma_ef = u(rng);
    r.gamma_fh = u(rng);
    const auto ode = populations_ode(grid, r, PopulationVector::pure(3));
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const auto cf = populations_closed_form(grid[i], r, Prep::h, SolutionMode::sequential);
      for (int l = 0; l < 4; ++l) worst = std::max(worst, std::abs(cf[l] - ode[i][l]));
    }
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("degenerate and near-degenerate rates") {
  const double g = 5e6;
  DecayRates r;
  r.gamma_ge = g;
  r.gamma_ef = g;
  r.gamma_fh = g;
  const double t = 300e-9;
  const double x = g * t;
  // Equal rates: Erlang chain.
  const auto p = populations_closed_form(t, r, Prep::h, SolutionMode::sequential);
  CHECK(p.h() == doctest::Approx(std::exp(-x)).epsilon(1e-13));
  CHECK(p.f() == doctest::Approx(x * std::exp(-x)).epsilon(1e-13));
  CHECK(p.e() == doctest::Approx(0.5 * x * x * std::exp(-x)).epsilon(1e-12));
  CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-14));

  // Continuity as rates merge.
  for (double eps : {1e-4, 1e-7, 1e-10}) {
    DecayRates rn = r;
    rn.gamma_ef = g * (1 + eps);
    rn.gamma_fh = g * (1 + 2 * eps);
    const auto pn = populations_closed_form(t, rn, Prep::h);
    for (int i = 0; i < 4; ++i) CHECK(std::abs(pn[i] - p[i]) < 10 * eps + 1e-12);
  }

  DecayRates ns = r;
  ns.gamma_gf = 1e6;
  CHECK_THROWS_AS(populations_closed_form(t, ns, Prep::f, SolutionMode::sequential), Error);
}

TEST_CASE("averaged pointer signal") {
  const auto r = reference_rates();
  PointerCalibration cal;
  cal.s = {Complex(0, 0), Complex(1, 0), Complex(0, 1), Complex(-1, 0)};
  std::vector<double> grid{0.0, 100e-9, 5e-6};
  const auto s = averaged_signal(grid, r, PopulationVector::pure(3), cal);
  CHECK(std::abs(s[0] - Complex(-1, 0)) < 1e-12);
  const auto p = populations_closed_form(100e-9, r, Prep::h);
  CHECK(std::abs(s[1] - Complex(p.e() - p.h(), p.f())) < 1e-12);
  CHECK(std::abs(s[2]) < 1e-6);

  PointerCalibration flat;
  CHECK_THROWS_AS(averaged_signal(grid, r, PopulationVector::pure(3), flat), Error);
}

TEST_CASE("decay-rate fit") {
  const auto truth = reference_rates();
  std::vector<double> grid;
  for (int i = 0; i < 40; ++i) grid.push_back(i * 30e-9);
  const std::vector<Prep> preps{Prep::e, Prep::f, Prep::h};

  SUBCASE("noiseless data recovers the rates") {
    ResetDataset d;
    for (Prep p : preps)
      for (double t : grid) d.curves[p].push_back({t, populations_closed_form(t, truth, p)});
    const auto fit = fit_decay_rates(d);
    CHECK(fit.rates.gamma_ge == doctest::Approx(truth.gamma_ge).epsilon(1e-6));
    CHECK(fit.rates.gamma_ef == doctest::Approx(truth.gamma_ef).epsilon(1e-6));
    CHECK(fit.rates.gamma_fh == doctest::Approx(truth.gamma_fh).epsilon(1e-6));
    CHECK(fit.t1[0] == doctest::Approx(238.22e-9).epsilon(1e-6));
  }

  SUBCASE("noiseless data with a floor") {
    ResetDataset d;
    for (Prep p : preps)
      for (double t : grid) d.curves[p].push_back({t, apply_floor(populations_closed_form(t, truth, p), 0.985)});
    DecayFitOptions o;
    o.fit_floor = true;
    const auto fit = fit_decay_rates(d, o);
    REQUIRE(fit.floor);
    CHECK(*fit.floor == doctest::Approx(0.985).epsilon(1e-7));
    CHECK(fit.rates.gamma_ge == doctest::Approx(truth.gamma_ge).epsilon(1e-6));
  }

  SUBCASE("shot noise: estimates within a few sigma") {
    const auto d = synth::gen_reset_curves(truth, preps, grid, 20000, std::nullopt, 7);
    const auto fit = fit_decay_rates(d);
    const double got[3] = {fit.rates.gamma_ge, fit.rates.gamma_ef, fit.rates.gamma_fh};
    const double want[3] = {truth.gamma_ge, truth.gamma_ef, truth.gamma_fh};
    for (int k = 0; k < 3; ++k) {
      CHECK(fit.rate_sigma[k] > 0.0);
      CHECK(std::abs(got[k] - want[k]) < 4 * fit.rate_sigma[k]);
      CHECK(fit.t1_sigma[k] == doctest::Approx(fit.rate_sigma[k] / (want[k] * want[k])).epsilon(0.05));
    }
  }

  SUBCASE("input validation") {
    ResetDataset one;
    for (double t : grid) one.curves[Prep::e].push_back({t, populations_closed_form(t, truth, Prep::e)});
    CHECK_THROWS_AS(fit_decay_rates(one), Error);
    ResetDataset shortd;
    for (Prep p : {Prep::e, Prep::f})
      for (int i = 0; i < 3; ++i) shortd.curves[p].push_back({grid[i], populations_closed_form(grid[i], truth, p)});
    CHECK_THROWS_AS(fit_decay_rates(shortd), Error);
  }
}
