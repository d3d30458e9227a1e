#include <doctest.h>

#include <cmath>

#include "starwave/error.hpp"
#include "starwave/linearized.hpp"
#include "starwave/modulation.hpp"

using namespace starwave;

namespace {
const Nonlinearity cubic = Nonlinearity::power(1, -1.0);
const cplx I(0.0, 1.0);

GraphFunction even_bump(const StarGrid& g) {
  return enforce_kirchhoff(sample_on_grid(
      [](double x) { return cplx(std::exp(-(x - 2) * (x - 2)), 0.5 * std::exp(-(x - 3) * (x - 3))); },
      g));
}

GraphFunction spinor_noise(const StarGrid& g) {
  std::vector<EdgeFormula> fs;
  for (int e = 0; e < g.n_edges(); ++e)
    for (int c = 0; c < 2; ++c)
      fs.push_back([=](double x) {
        return cplx(std::sin(1.3 * x + e), std::cos(0.7 * x - c)) * std::exp(-0.2 * x * x);
      });
  return sample_on_grid(fs, g, 2);
}
}  // namespace

TEST_SUITE("modulation") {

TEST_CASE("decompose recovers an exact soliton") {
  const StarGrid g = build_star_grid(3, 40.0, 401);
  const ProfileJet jet = profile_jet(cubic, 2.1, g);
  const GraphFunction u = modulated_soliton(0.3, jet, g);
  const DecomposeResult d = decompose(u, SolitonParams::at_rest(2.0, 0.25), cubic);
  CHECK(std::abs(d.sigma.beta - 0.3) < 1e-10);
  CHECK(std::abs(d.sigma.alpha - 2.1) < 1e-10);
  CHECK(d.sigma.omega == doctest::Approx(-2.1 * 2.1 / 4.0).epsilon(1e-12));
  CHECK(l2_norm(d.chi) < 1e-9);
  CHECK(d.residual < 1e-10);
}

TEST_CASE("decompose under a small perturbation") {
  const StarGrid g = build_star_grid(3, 40.0, 401);
  const GraphFunction w = modulated_soliton(0.0, profile_jet(cubic, 2.0, g), g);
  const DecomposeResult d = decompose(w + 0.01 * even_bump(g), SolitonParams::at_rest(2.0), cubic);
  CHECK(d.residual < 1e-10);
  CHECK(std::abs(d.sigma.alpha - 2.0) < 0.05);
  CHECK(std::abs(d.sigma.alpha - 2.0) > 1e-5);

  // Jacobian main term: d R1 / d alpha = -(1/2) d/dalpha sum_j ||phi||^2 = -N/2 for the cubic case
  const StarGrid fine = build_star_grid(3, 40.0, 801);
  const GraphFunction wf = modulated_soliton(0.0, profile_jet(cubic, 2.0, fine), fine);
  const DecomposeResult d0 = decompose(wf, SolitonParams::at_rest(2.0), cubic);
  CHECK(d0.jacobian(0, 1) == doctest::Approx(-1.5).epsilon(1e-3));
  CHECK(std::abs(d0.jacobian(0, 0)) < 1e-8);
}

TEST_CASE("decompose is gauge covariant") {
  const StarGrid g = build_star_grid(3, 40.0, 401);
  const GraphFunction u =
      modulated_soliton(0.1, profile_jet(cubic, 2.0, g), g) + 0.02 * even_bump(g);
  const DecomposeResult a = decompose(u, SolitonParams::at_rest(2.0, 0.1), cubic);
  const double theta = 0.7;
  const DecomposeResult b = decompose(std::exp(I * theta) * u, SolitonParams::at_rest(2.0, 0.1 - theta), cubic);
  CHECK(std::abs(b.sigma.beta - (a.sigma.beta - theta)) < 1e-10);
  CHECK(std::abs(b.sigma.alpha - a.sigma.alpha) < 1e-10);
  CHECK(l2_norm(b.chi) == doctest::Approx(l2_norm(a.chi)).epsilon(1e-10));
}

TEST_CASE("discrete and continuous split") {
  const StarGrid g = build_star_grid(3, 30.0, 301);
  const ProfileJet jet = profile_jet(cubic, 2.0, g);
  GraphFunction xi1(g, 2);
  for (int e = 0; e < 3; ++e)
    for (int m = 0; m < g.samples(); ++m) {
      xi1(e, 0, m) = -I * jet.phi[static_cast<std::size_t>(m)];
      xi1(e, 1, m) = I * jet.phi[static_cast<std::size_t>(m)];
    }
  const DiscreteSplit s1 = split_discrete_continuous(xi1, jet);
  CHECK(std::abs(s1.k1 - 1.0) < 1e-12);
  CHECK(std::abs(s1.k2) < 1e-12);
  CHECK(l2_norm(s1.h) < 1e-12);

  const GraphFunction f = spinor_noise(g);
  const DiscreteSplit s = split_discrete_continuous(f, jet);
  const DiscreteSplit sh = split_discrete_continuous(s.h, jet);
  CHECK(std::abs(sh.k1) < 1e-12);
  CHECK(std::abs(sh.k2) < 1e-12);
  CHECK(l2_norm(sh.h - s.h) < 1e-12);

  GraphFunction xi2(g, 2);
  for (int e = 0; e < 3; ++e)
    for (int m = 0; m < g.samples(); ++m)
      xi2(e, 0, m) = xi2(e, 1, m) = jet.phi_a[static_cast<std::size_t>(m)];
  const GraphFunction back = s.k1 * xi1 + s.k2 * xi2 + s.h;
  CHECK(l2_norm(back - f) < 1e-12);
  CHECK(std::abs(l2_inner(s.h, apply_theta3(xi1))) < 1e-12);
  CHECK(std::abs(l2_inner(s.h, apply_theta3(xi2))) < 1e-12);
}

TEST_CASE("forcing terms") {
  const StarGrid g = build_star_grid(3, 30.0, 301);
  const SolitonParams s = SolitonParams::at_rest(2.0, 0.4);
  const ForcingTerms zero = forcing_terms_D(GraphFunction(g, 1), s, s, {}, cubic);
  CHECK(l2_norm(zero.total()) == 0.0);

  const GraphFunction gsmall = 1e-3 * even_bump(g);
  const ForcingTerms a = forcing_terms_D(gsmall, s, s, {}, cubic);
  const ForcingTerms b = forcing_terms_D(0.5 * gsmall, s, s, {}, cubic);
  CHECK(l2_norm(a.D0) == 0.0);
  CHECK(l2_norm(a.D1) == 0.0);
  CHECK(l2_norm(a.D2) == 0.0);
  CHECK(l2_norm(a.D3) == 0.0);
  CHECK(l2_norm(a.D4) / l2_norm(b.D4) == doctest::Approx(4.0).epsilon(1e-2));

  // |D0| <= (|gamma'| + |omega'|) max(||phi||_inf, (2/alpha) ||phi_alpha||_inf)
  const ModulationRates r{0.03, -0.02};
  const ProfileJet jet = profile_jet(cubic, 2.0, g);
  double c = 0.0;
  for (std::size_t m = 0; m < jet.phi.size(); ++m)
    c = std::max({c, std::abs(jet.phi[m]), std::abs(jet.phi_a[m])});
  const ForcingTerms d = forcing_terms_D(gsmall, s, s, r, cubic);
  CHECK(sup_norm(d.D0) <= (0.03 + 0.02) * c);
  CHECK(sup_norm(d.D0) > 0.0);

  CHECK_THROWS_AS(forcing_terms_D(GraphFunction(g, 2), s, s, {}, cubic), Error);
}

TEST_CASE("diagnostics") {
  const StarGrid g = build_star_grid(3, 30.0, 301);
  const ProfileJet jet = profile_jet(cubic, 2.0, g);
  const GraphFunction f = 0.01 * spinor_noise(g);
  const DiscreteSplit s = split_discrete_continuous(f, jet);
  const DiagnosticsM d1 = diagnostics(1.0, 2.1, 2.0, s, f, {});
  CHECK(d1.M0 == doctest::Approx(2.1 * 2.1 - 4.0));
  CHECK(d1.M2 <= l2_norm(s.h));
  CHECK(d1.sup1 == doctest::Approx(std::pow(2.0, 1.5) * d1.M1));
  const DiagnosticsM d2 = diagnostics(2.0, 2.0, 2.0, split_discrete_continuous(0.1 * f, jet), 0.1 * f, d1);
  CHECK(d2.sup0 == d1.sup0);
  CHECK(d2.sup1 >= d1.sup1);
  CHECK(d2.sup2 >= d1.sup2);
  CHECK(d2.sup3 >= d1.sup3);
}

TEST_CASE("unperturbed soliton: diagnostics at the splitting error") {
  // The exact discrete soliton is a fixed point of each substep but not of the
  // Strang composition, so the remainder is O(dt^2) rather than round-off.
  const StarGrid g = build_star_grid(3, 40.0, 401);
  auto run = [&](double dt) {
    EvolutionConfig cfg;
    cfg.nonlinearity = cubic;
    cfg.dt = dt;
    cfg.T = 2.0;
    cfg.record_stride = static_cast<int>(std::lround(0.2 / dt));
    return track_modulation(modulated_soliton(0.0, profile_jet(cubic, 2.0, g), g), cfg, {});
  };
  const ModulationTrack coarse = run(0.01), fine = run(0.005);
  REQUIRE(coarse.states.size() == 11);
  double m2c = 0.0, m2f = 0.0;
  for (std::size_t i = 0; i < coarse.states.size(); ++i) {
    const auto& st = coarse.states[i];
    CHECK(st.M.M0 < 1e-5);
    CHECK(st.M.M1 < 1e-6);
    CHECK(st.M.M2 < 1e-4);
    CHECK(std::abs(st.gamma) < 1e-5);
    CHECK(st.ortho_residual < 1e-10);
    m2c = std::max(m2c, st.M.M2);
    m2f = std::max(m2f, fine.states[i].M.M2);
  }
  CHECK(m2c / m2f == doctest::Approx(4.0).epsilon(0.15));
  const std::string csv = modulation_csv(coarse);
  CHECK(csv.rfind("t,beta,omega,alpha,gamma,k1_re,k1_im,k2_re,k2_im,M0,M1,M2,M3,sup1,sup2,sup3,"
                  "ortho_residual\n", 0) == 0);
}

TEST_CASE("power-law tails") {
  std::vector<double> t, y;
  for (int i = 0; i < 40; ++i) {
    t.push_back(5.0 + i);
    y.push_back(2.0 + 3.0 * std::pow(5.0 + i, -1.5));
  }
  const PowerLawFit f = fit_power_law_tail(t, y);
  CHECK(f.limit == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(f.exponent == doctest::Approx(1.5).epsilon(1e-10));
  CHECK(f.amplitude == doctest::Approx(3.0).epsilon(1e-8));

  const std::vector<double> x = {1, 2, 4, 8}, sq = {1, 4, 16, 64};
  CHECK(fit_log_slope(x, sq) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("limit trajectory of synthetic series") {
  std::vector<double> t, w, gam, beta, alpha;
  const double T = 40.0;
  for (int i = 0; i <= 390; ++i) {
    const double s = 1.0 + 0.1 * i;
    t.push_back(s);
    w.push_back(-1.0 + 1.0 / (s * s));
    gam.push_back(0.2);
    beta.push_back(-s + 0.2);
    alpha.push_back(2.0);
  }
  const LimitTrajectory lim = limit_trajectory(t, w, gam, beta, alpha, 10.0);
  CHECK(std::abs(lim.omega_plus + 1.0) < 1e-4);
  CHECK(lim.tail_integral == doctest::Approx(1.0 / T).epsilon(1e-3));
  CHECK(lim.has_limit);
  CHECK(lim.alpha_plus == doctest::Approx(2.0).epsilon(1e-4));

  std::vector<double> wc(t.size(), -1.0);
  const LimitTrajectory flat = limit_trajectory(t, wc, gam, beta, alpha, 10.0);
  CHECK(flat.has_limit);
  CHECK(flat.omega_plus == doctest::Approx(-1.0).epsilon(1e-14));
  CHECK(flat.gamma_plus == doctest::Approx(0.2).epsilon(1e-12));
  for (double d : flat.defects) CHECK(d < 1e-10);

  const std::vector<double> few(10, 1.0);
  CHECK_THROWS_AS(limit_trajectory(few, few, few, few, few), Error);
}

TEST_CASE("perturbation norm") {
  // chi = e^{-x^2} per edge: ||(1+x^2) chi||^2 = (27/16) sqrt(pi/8), ||chi'||^2 = sqrt(pi/8)
  const StarGrid g = build_star_grid(3, 10.0, 2001);
  const GraphFunction chi = sample_on_grid([](double x) { return cplx(std::exp(-x * x)); }, g);
  const double c = std::sqrt(std::acos(-1.0) / 8.0);
  const double expected = std::sqrt(3 * 27.0 / 16.0 * c) + std::sqrt(3 * c);
  CHECK(perturbation_norm(chi) == doctest::Approx(expected).epsilon(1e-5));
}

TEST_CASE("asymptotic profile without forcing") {
  const StarGrid g = build_star_grid(3, 20.0, 201);
  const LinearizedOperator H = assemble_H(2.0, cubic, g);
  const GraphFunction h0 = spinor_noise(g);
  const std::vector<double> times = {0.0, 0.5, 1.0};
  const std::vector<GraphFunction> D(3, GraphFunction(g, 2));
  GraphFunction hT = h0;
  LinearizedPropagator(H.op, 0.01).advance(hT, 1.0);
  const AsymptoticProfile ap = asymptotic_profile(h0, times, D, hT, H, 0.01);
  CHECK(l2_norm(ap.h_inf - project_continuous(h0, root_basis(H, false))) < 1e-12);
}

}  // TEST_SUITE
