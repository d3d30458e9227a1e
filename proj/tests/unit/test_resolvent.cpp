#include <doctest.h>

#include <cmath>

#include "starwave/error.hpp"
#include "starwave/resolvent.hpp"

using namespace starwave;

namespace {
const Nonlinearity cubic = Nonlinearity::power(1, -1.0);

GraphFunction spinor_bump(const StarGrid& g, double x0) {
  std::vector<EdgeFormula> fs;
  for (int e = 0; e < g.n_edges(); ++e)
    for (int c = 0; c < 2; ++c)
      fs.push_back([=](double x) {
        const double s = x - x0 - 0.4 * e;
        return cplx(0.7 - 0.2 * e, 0.3 + 0.4 * c) * std::exp(-s * s);
      });
  return sample_on_grid(fs, g, 2);
}
}  // namespace

TEST_SUITE("resolvent") {

TEST_CASE("branches") {
  CHECK(branch_sqrt(cplx(-4.0, 0.0), 1) == cplx(0.0, 2.0));
  CHECK(branch_sqrt(cplx(-4.0, 0.0), -1) == cplx(0.0, -2.0));
  CHECK_THROWS_AS(branch_sqrt(cplx(-4.0, 0.0), 0), Error);
  CHECK(branch_sqrt(cplx(-3.0, -1e-3), 0).real() >= 0.0);

  const double h = 0.05;
  for (cplx k2 : {cplx(1.5, 0.0), cplx(-2.0, 0.7), cplx(0.3, -2.0)}) {
    const cplx z = lattice_root(k2, h, 0);
    CHECK(std::abs(z) < 1.0);
    CHECK(std::abs(z + 1.0 / z - 2.0 - k2 * h * h) < 1e-13);
  }
  const cplx zp = lattice_root(cplx(-1.0, 0.0), h, 1), zm = lattice_root(cplx(-1.0, 0.0), h, -1);
  CHECK(std::abs(std::abs(zp) - 1.0) < 1e-12);
  CHECK(zp == std::conj(zm));
  CHECK(SpectralPoint::on_axis(0.5, 1.0).lambda == cplx(1.25, 0.0));
  CHECK(SpectralPoint::on_axis(-0.5, 1.0).im_sign() == -1);
}

TEST_CASE("half-line kernel is the image formula") {
  const std::vector<double> alphas = {2.0};
  const SpectralPoint pt = SpectralPoint::off_axis(cplx(-0.5, 0.0));
  const auto co = free_resolvent_coefficients(pt, alphas);
  const double k1 = std::sqrt(1.5), k2 = std::sqrt(0.5);
  for (double x : {0.0, 0.3, 2.0})
    for (double y : {0.0, 1.1, 4.0}) {
      const double i1 = (std::exp(-k1 * std::abs(x - y)) + std::exp(-k1 * (x + y))) / (2 * k1);
      const double i2 = (std::exp(-k2 * std::abs(x - y)) + std::exp(-k2 * (x + y))) / (2 * k2);
      CHECK(std::abs(free_resolvent_kernel(co, 0, 0, 0, x, y) + i1) < 1e-10);
      CHECK(std::abs(free_resolvent_kernel(co, 1, 0, 0, x, y) - i2) < 1e-10);
    }
}

TEST_CASE("free resolvent paths") {
  const StarGrid g = build_star_grid(3, 20.0, 401);
  const std::vector<double> alphas(3, 2.0);
  const StarOperator J = assemble_J(alphas, g);
  const GraphFunction f = spinor_bump(g, 3.0);
  for (cplx l : {cplx(-0.5, 0.0), cplx(1.3, 0.8), cplx(-2.0, -1.5)}) {
    const SpectralPoint pt = SpectralPoint::off_axis(l);
    CAPTURE(l);
    CHECK(resolvent_residual(pt, free_resolvent_apply(pt, f, alphas), f, J, 1.0, true) < 1e-12);
    CHECK(l2_norm(free_resolvent_apply(pt, GraphFunction(g, 2), alphas)) == 0.0);
  }
  // continuum kernel against the discrete rows: O(h^2)
  auto residual = [&](int M) {
    const StarGrid gm = build_star_grid(3, 20.0, M);
    const SpectralPoint pt = SpectralPoint::off_axis(cplx(0.4, 1.0));
    const GraphFunction fm = spinor_bump(gm, 3.0);
    return resolvent_residual(pt, free_resolvent_apply(pt, fm, alphas, FreeKernel::Continuum), fm,
                              assemble_J(alphas, gm), 1.0, true);
  };
  CHECK(std::log2(residual(201) / residual(401)) == doctest::Approx(2.0).epsilon(0.25));
}

TEST_CASE("direct solve and resolvent identity") {
  const StarGrid g = build_star_grid(3, 40.0, 401);
  const LinearizedOperator H = assemble_H(2.0, cubic, g);
  const GraphFunction f = spinor_bump(g, 2.0);
  const SpectralPoint a = SpectralPoint::off_axis(cplx(-0.5, 0.0));
  const SpectralPoint b = SpectralPoint::off_axis(cplx(0.3, 0.9));
  const GraphFunction ua = kirchhoff_resolvent_direct(a, f, H);
  const GraphFunction ub = kirchhoff_resolvent_direct(b, f, H);
  CHECK(resolvent_residual(a, ua, f, H.op, 1.0) < 1e-10);
  CHECK(resolvent_residual(b, ub, f, H.op, 1.0) < 1e-10);
  const GraphFunction rab = kirchhoff_resolvent_direct(a, ub, H);
  CHECK(l2_norm(ua - ub - (b.lambda - a.lambda) * rab) < 1e-8 * l2_norm(ua));
  CHECK(l2_norm(kirchhoff_resolvent_direct(a, GraphFunction(g, 2), H)) == 0.0);
}

TEST_CASE("resolvent blows up at the root space") {
  const StarGrid g = build_star_grid(3, 40.0, 401);
  const LinearizedOperator H = assemble_H(2.0, cubic, g);
  const std::vector<double> d = {0.2, 0.3, 0.4};
  const double p = pole_order_probe(H, spinor_bump(g, 1.0), d);
  CHECK(p < -0.8);
  CHECK(p > -2.3);
}

TEST_CASE("born series") {
  const StarGrid g = build_star_grid(3, 40.0, 401);
  const GraphFunction f = spinor_bump(g, 2.0);
  const SpectralPoint pt = SpectralPoint::on_axis(6.0, 1.0);

  AssembleOptions off;
  off.coupling = 0.0;
  const LinearizedOperator H0 = assemble_H(2.0, cubic, g, off);
  const BornResult b0 = born_series_apply(pt, f, H0, 4);
  const std::vector<double> alphas(3, 2.0);
  CHECK(l2_norm(b0.approx - free_resolvent_apply(pt, f, alphas)) == 0.0);
  for (std::size_t n = 1; n < b0.term_norms.size(); ++n) CHECK(b0.term_norms[n] == 0.0);

  const LinearizedOperator H = assemble_H(2.0, cubic, g);
  const BornResult b = born_series_apply(pt, f, H, 8);
  const GraphFunction ref = kirchhoff_resolvent_direct(pt, f, H);
  CHECK(l2_norm(b.approx - ref) / l2_norm(ref) < 1e-4);
  CHECK(b.ratio < 0.5);
}

TEST_CASE("jost data of the free problem") {
  const StarGrid g = build_star_grid(1, 40.0, 801);
  JostOptions o;
  o.coupling = 0.0;
  const JostSolutions js = jost_solve(0.7, 2.0, cubic, g, o);
  CHECK(std::abs(js.s - 1.0) < 1e-9);
  CHECK(std::abs(js.r) < 1e-9);
  CHECK(std::abs(js.h) < 1e-9);
  for (int m : {0, 100, 400}) {
    const double x = g.x(m);
    CHECK(std::abs(js.Yp[static_cast<std::size_t>(m)][0] - std::exp(cplx(0, 0.7 * x))) < 1e-9);
    CHECK(std::abs(js.Yp[static_cast<std::size_t>(m)][1]) < 1e-9);
  }
}

TEST_CASE("scattering data of the soliton potential") {
  const StarGrid g = build_star_grid(3, 40.0, 801);
  for (double k : {0.1, 0.7, 2.0}) {
    const JostSolutions js = jost_solve(k, 2.0, cubic, g);
    CAPTURE(k);
    CHECK(std::abs(std::norm(js.s) + std::norm(js.r) - 1.0) < 1e-6);
    CHECK(std::abs(js.r * std::conj(js.s) + js.s * std::conj(js.r)) < 1e-6);
  }
}

TEST_CASE("spectral jump from two sides") {
  const StarGrid g = build_star_grid(3, 40.0, 801);
  for (double coupling : {0.0, 1.0}) {
    JostOptions o;
    o.coupling = coupling;
    const JostSolutions p = jost_solve(0.7, 2.0, cubic, g, o);
    const JostSolutions m = jost_solve(-0.7, 2.0, cubic, g, o);
    const GreenKernelData gp = green_kernel_data(p, cubic, 10.0, coupling);
    const GreenKernelData gm = green_kernel_data(m, cubic, 10.0, coupling);
    for (auto [x, y] : {std::pair{20, 40}, std::pair{60, 10}, std::pair{0, 0}}) {
      CAPTURE(coupling);
      CHECK(spectral_jump(x, y, p, m, gp, gm).difference < 1e-4);
    }
  }
}

TEST_CASE("scattering-form resolvent") {
  const StarGrid g = build_star_grid(3, 40.0, 801);
  const JostSolutions js = jost_solve(0.5, 2.0, cubic, g);
  KirchhoffResolventSolve info;
  const GraphFunction z = kirchhoff_resolvent_scattering(GraphFunction(g, 2), js, cubic, &info);
  CHECK(l2_norm(z) == 0.0);
  CHECK(info.coefficients.cwiseAbs().maxCoeff() == 0.0);
  CHECK(std::abs(info.W) > 1e-10);

  const GraphFunction f = spinor_bump(g, 2.0);
  const GraphFunction u = kirchhoff_resolvent_scattering(f, js, cubic);
  const GraphFunction ref =
      kirchhoff_resolvent_direct(SpectralPoint::on_axis(0.5, 1.0), f, assemble_H(2.0, cubic, g));
  CHECK(l2_norm(u - ref) / l2_norm(ref) < 1e-3);
}

TEST_CASE("literal determinants vanish already without potential") {
  const StarGrid g = build_star_grid(3, 40.0, 801);
  const HypothesisCReport free = hypothesis_C_check(2.0, cubic, g, 1e-2, 8, 0.0);
  CHECK(std::abs(free.det_values) < 1e-12);
  CHECK_FALSE(free.pass);
  const HypothesisCReport rep = hypothesis_C_check(2.0, cubic, g, 1e-2, 8);
  CHECK(std::abs(rep.det_outgoing_values) > 1e-6);
  CHECK(rep.min_W > 0.0);
}

TEST_CASE("spectral windows") {
  CHECK(smooth_window(0.5, 1.0, 2.0) == 0.0);
  CHECK(smooth_window(2.5, 1.0, 2.0) == 1.0);
  CHECK(smooth_window(1.5, 1.0, 2.0) == doctest::Approx(0.5));

  const StarGrid g = build_star_grid(3, 20.0, 101);
  const LinearizedOperator H = assemble_H(2.0, cubic, g);
  const SpectralFilter filt(H);
  GraphFunction f = spinor_bump(g, 2.0);
  f = enforce_kirchhoff(f);
  using W = SpectralFilter::Window;
  const GraphFunction sum = filt.apply(W::High, 1.5, f) + filt.apply(W::Low, 1.5, f) +
                            filt.apply(W::Root, 1.5, f);
  CHECK(interior_l2_norm(sum - f) < 1e-8 * l2_norm(f));
}

}  // TEST_SUITE
