#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "qdial/error.hpp"
#include "qdial/fits.hpp"
#include "qdial/synth.hpp"

using namespace qdial;
using namespace qdial::fits;

namespace {

std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> v(n);
  for (int i = 0; i < n; ++i) v[i] = a + (b - a) * i / (n - 1);
  return v;
}

}  // namespace

TEST_CASE("exponential fit") {
  const auto t = linspace(0.0, 5e-6, 60);
  std::vector<double> y;
  for (double x : t) y.push_back(0.8 * std::exp(-x / 1.3e-6) + 0.1);
  const auto r = fit_exponential(t, y);
  CHECK(r.converged);
  CHECK(r.param("A") == doctest::Approx(0.8).epsilon(1e-8));
  CHECK(r.param("tau") == doctest::Approx(1.3e-6).epsilon(1e-8));
  CHECK(r.param("B") == doctest::Approx(0.1).epsilon(1e-7));

  SUBCASE("noisy data: sigma is a fair error bar") {
    int within = 0;
    const int n_rep = 100;
    for (int s = 0; s < n_rep; ++s) {
      std::mt19937_64 rng(100 + s);
      std::normal_distribution<double> n(0.0, 0.01);
      std::vector<double> yn = y;
      for (double& v : yn) v += n(rng);
      const auto rn = fit_exponential(t, yn);
      REQUIRE(rn.has_sigmas());
      if (std::abs(rn.param("tau") - 1.3e-6) < rn.sigma("tau")) ++within;
    }
    CHECK(within > 55);
    CHECK(within < 82);
  }

  SUBCASE("flat trace") {
    std::vector<double> flat(t.size(), 0.4);
    const auto rf = fit_exponential(t, flat);
    CHECK(rf.param("A") == 0.0);
    CHECK(std::isnan(rf.param("tau")));
    CHECK(rf.param("B") == doctest::Approx(0.4));
  }

  CHECK_THROWS_AS(fit_exponential(std::vector<double>{0, 1}, std::vector<double>{1, 0.5}), Error);
}

TEST_CASE("decaying cosine fit") {
  const auto t = linspace(0.0, 10e-6, 201);
  std::vector<double> y;
  const double a = 0.45, f = 1.7e6, phi = 0.6, tau = 4e-6, b = 0.5;
  for (double x : t) y.push_back(a * std::exp(-x / tau) * std::cos(2 * constants::pi * f * x + phi) + b);
  const auto r = fit_decaying_cosine(t, y);
  CHECK(r.param("A") == doctest::Approx(a).epsilon(1e-7));
  CHECK(r.param("f") == doctest::Approx(f).epsilon(1e-8));
  CHECK(r.param("phi") == doctest::Approx(phi).epsilon(1e-6));
  CHECK(r.param("tau") == doctest::Approx(tau).epsilon(1e-7));
  CHECK(r.param("B") == doctest::Approx(b).epsilon(1e-8));

  SUBCASE("negative amplitude is folded into the phase") {
    std::vector<double> yn;
    for (double x : t) yn.push_back(-a * std::exp(-x / tau) * std::cos(2 * constants::pi * f * x) + b);
    const auto rn = fit_decaying_cosine(t, yn);
    CHECK(rn.param("A") > 0.0);
    CHECK(std::abs(std::remainder(rn.param("phi") - constants::pi, 2 * constants::pi)) < 1e-6);
  }

  SUBCASE("no oscillation") {
    std::vector<double> flat(t.size(), 0.5);
    try {
      fit_decaying_cosine(t, flat);
      FAIL("expected NoOscillation");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::NoOscillation);
    }
  }
}

TEST_CASE("stretched exponential fit") {
  const auto t = linspace(0.0, 40e-6, 50);
  std::vector<double> y;
  for (double x : t) y.push_back(std::exp(-std::pow(x / 12e-6, 1.8)));
  const auto r = fit_stretched_exponential(t, y);
  CHECK(r.converged);
  CHECK(r.param("T2DD") == doctest::Approx(12e-6).epsilon(1e-8));
  CHECK(r.param("alpha") == doctest::Approx(1.8).epsilon(1e-8));

  std::vector<double> bad = y;
  bad[3] = 1.2;
  CHECK_THROWS_AS(fit_stretched_exponential(t, bad), Error);
}

TEST_CASE("randomized benchmarking") {
  CHECK(clifford_fidelity(0.995125) == doctest::Approx(0.9987).epsilon(1e-12));
  CHECK(clifford_fidelity(1.0) == 1.0);
  CHECK(clifford_fidelity(0.99, 1.0) == doctest::Approx(0.995));
  CHECK(interleaved_fidelity(0.99, 0.99) == 1.0);
  CHECK(interleaved_fidelity(0.98, 0.99) > 1.0);
  try {
    interleaved_fidelity(0.0, 0.5);
    FAIL("expected DivisionByZero");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DivisionByZero);
  }

  const std::vector<double> m{1, 5, 10, 20, 50, 100, 200, 400};
  std::vector<double> pg;
  for (double x : m) pg.push_back(0.48 * std::pow(0.995125, x) + 0.5);
  const auto r = rb_fit(m, pg);
  CHECK(r.param("p") == doctest::Approx(0.995125).epsilon(1e-9));
  CHECK(r.param("A") == doctest::Approx(0.48).epsilon(1e-7));
  CHECK(r.param("B") == doctest::Approx(0.5).epsilon(1e-7));

  SUBCASE("synthetic shot noise") {
    const auto data = synth::gen_rb_decay(0.995125, 0.48, 0.5, m, 2000, 42);
    const auto rn = rb_fit(data.m, data.p_g);
    REQUIRE(rn.has_sigmas());
    CHECK(std::abs(rn.param("p") - 0.995125) < 4 * rn.sigma("p"));
  }

  SUBCASE("flat survival") {
    std::vector<double> flat(m.size(), 0.7);
    const auto rf = rb_fit(m, flat);
    CHECK(rf.param("p") == 1.0);
    CHECK(rf.rank_deficient);
  }

  CHECK_THROWS_AS(rb_fit(std::vector<double>{1, 1, 2, 2, 3}, std::vector<double>{1, 1, .9, .9, .8}),
                  Error);
}

TEST_CASE("quadratic minimum") {
  const auto x = linspace(-1.0, 2.0, 21);
  std::vector<double> y;
  for (double v : x) y.push_back(3.0 * (v - 0.37) * (v - 0.37) + 1.5);
  const auto q = fit_quadratic_minimum(x, y);
  CHECK(q.x_min == doctest::Approx(0.37).epsilon(1e-12));
  CHECK(q.y_min == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(q.curvature == doctest::Approx(3.0).epsilon(1e-12));

  std::vector<double> neg;
  for (double v : x) neg.push_back(-v * v);
  CHECK_THROWS_AS(fit_quadratic_minimum(x, neg), Error);
}
