#include <doctest.h>

#include <cmath>

#include "starwave/error.hpp"
#include "starwave/evolution.hpp"
#include "starwave/soliton.hpp"

using namespace starwave;

namespace {
// phi for F = -xi^mu and frequency w: [(mu+1) w]^{1/(2 mu)} sech^{1/mu}(mu sqrt(w) x)
double sech_profile(double x, int mu, double w) {
  return std::pow((mu + 1) * w, 0.5 / mu) * std::pow(1.0 / std::cosh(mu * std::sqrt(w) * x), 1.0 / mu);
}
}  // namespace

TEST_SUITE("soliton") {

TEST_CASE("nonlinearity evaluation") {
  const Nonlinearity cubic = Nonlinearity::power(1, -1.0);
  CHECK(eval_F(cubic, 2.0) == -2.0);
  const Nonlinearity nine = Nonlinearity::power(4, -1.0);
  CHECK(eval_F(nine, 1.0) == -1.0);
  CHECK(eval_F_prime(nine, 1.0) == -4.0);
  const Nonlinearity none;
  CHECK(eval_F(none, 3.0) == 0.0);
  CHECK(none.is_zero());

  const Nonlinearity mixed({{1, -1.0}, {2, 0.5}});
  CHECK(mixed.G(2.0) == doctest::Approx(-2.0 + 0.5 * 8.0 / 3.0));
  CHECK(mixed.lowest_degree() == 1);
  CHECK_THROWS_AS(mixed.validate(false), Error);
  CHECK_NOTHROW(mixed.validate(true));
  CHECK_NOTHROW(nine.validate(false));
  CHECK_THROWS_AS(Nonlinearity({{0, 1.0}}), Error);
}

TEST_CASE("effective potential") {
  const Nonlinearity cubic = Nonlinearity::power(1, -1.0);
  // -alpha^2 phi^2 / 8 + phi^4 / 4
  CHECK(potential_U(cubic, 1.0, 2.0) == doctest::Approx(-0.25));
  CHECK(potential_U(cubic, 0.0, 2.0) == 0.0);
}

TEST_CASE("turning point of the profile") {
  CHECK(smallest_positive_root(Nonlinearity::power(1, -1.0), 2.0).phi0 ==
        doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
  CHECK(smallest_positive_root(Nonlinearity::power(4, -1.0), 2.0).phi0 ==
        doctest::Approx(std::pow(5.0, 0.125)).epsilon(1e-12));
  CHECK_THROWS_AS(smallest_positive_root(Nonlinearity::power(1, 1.0), 2.0), Error);
}

TEST_CASE("closed form") {
  CHECK(profile_closed_form(0.0, 1, 1.0) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  CHECK(profile_closed_form(0.0, 4, 1.0) == doctest::Approx(std::pow(5.0, 0.125)).epsilon(1e-15));
  CHECK(profile_closed_form(60.0, 2, 1.0) < 1e-20);
  CHECK_THROWS_AS(profile_closed_form(0.0, 0, 1.0), Error);
}

TEST_CASE("quadrature profile against sech oracle") {
  const StarGrid g = build_star_grid(1, 20.0, 401);
  for (int mu : {1, 2, 4}) {
    const Profile p = profile_quadrature(Nonlinearity::power(mu, -1.0), 2.0, g);
    double err = 0.0;
    for (int m = 0; m < g.samples(); ++m)
      err = std::max(err, std::abs(p.samples[static_cast<std::size_t>(m)] - sech_profile(g.x(m), mu, 1.0)));
    CAPTURE(mu);
    CHECK(err < 1e-8);
  }
}

TEST_CASE("profile equation residual is second order") {
  const Nonlinearity nl = Nonlinearity::power(1, -1.0);
  auto residual = [&](int M) {
    const StarGrid g = build_star_grid(1, 15.0, M);
    const Profile p = profile_quadrature(nl, 2.0, g);
    const double h = g.spacing();
    double r = 0.0;
    for (int m = 1; m + 1 < M; ++m) {
      const auto i = static_cast<std::size_t>(m);
      const double pxx = (p.samples[i + 1] - 2 * p.samples[i] + p.samples[i - 1]) / (h * h);
      r = std::max(r, std::abs(pxx - p.samples[i] + p.samples[i] * p.samples[i] * p.samples[i]));
    }
    return r;
  };
  const double order = std::log2(residual(151) / residual(301));
  CHECK(order == doctest::Approx(2.0).epsilon(0.1));
}

TEST_CASE("discrete profile satisfies the vertex row") {
  const StarGrid g = build_star_grid(3, 40.0, 801);
  const Nonlinearity nl = Nonlinearity::power(1, -1.0);
  const Profile d = discrete_profile(nl, 2.0, g);
  const Profile q = profile_quadrature(nl, 2.0, g);
  const double h = g.spacing();
  CHECK(std::abs(-3 * d.samples[0] + 4 * d.samples[1] - d.samples[2]) / (2 * h) < 1e-10);
  double dev = 0.0;
  for (std::size_t m = 0; m < d.samples.size(); ++m)
    dev = std::max(dev, std::abs(d.samples[m] - q.samples[m]));
  CHECK(dev < 1e-3);
}

TEST_CASE("soliton on the star") {
  const StarGrid g = build_star_grid(3, 40.0, 801);
  const Nonlinearity nl = Nonlinearity::power(1, -1.0);
  const SolitonParams p = SolitonParams::at_rest(2.0);
  const GraphFunction w = soliton_graph(p, nl, g);
  for (int e = 0; e < 3; ++e) CHECK(std::abs(w(e, 0, 0) - std::sqrt(2.0)) < 1e-3);
  CHECK(kirchhoff_residual(w).continuity < 1e-8);
  CHECK(kirchhoff_residual(w).flux < 1e-8);

  // w(t) = e^{-i omega t} w(0) with omega = -1
  const double t = 0.7;
  const GraphFunction wt = soliton_graph(p, nl, g, t);
  CHECK(std::abs(wt(1, 0, 20) - std::exp(cplx(0, t)) * w(1, 0, 20)) < 1e-14);

  // mass 2 N sqrt(w) = 6, d mass / d alpha = N
  CHECK(conserved(w, nl).mass == doctest::Approx(6.0).epsilon(1e-3));
  auto mass = [&](double a) { return conserved(soliton_graph(SolitonParams::at_rest(a), nl, g), nl).mass; };
  CHECK((mass(2.001) - mass(1.999)) / 0.002 == doctest::Approx(3.0).epsilon(1e-3));

  SolitonParams shifted = p;
  shifted.b = 1.0;
  CHECK_THROWS_AS(soliton_graph(shifted, nl, g), Error);
  CHECK_NOTHROW(soliton_graph(shifted, nl, g, 0.0, SolitonOptions{true}));
}

}  // TEST_SUITE
