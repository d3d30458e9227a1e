#include <doctest.h>

#include <cmath>

#include "starwave/error.hpp"
#include "starwave/linearized.hpp"

using namespace starwave;

namespace {
const Nonlinearity cubic = Nonlinearity::power(1, -1.0);

GraphFunction spinor_bump(const StarGrid& g, double x0) {
  std::vector<EdgeFormula> fs;
  for (int e = 0; e < g.n_edges(); ++e)
    for (int c = 0; c < 2; ++c)
      fs.push_back([=](double x) {
        const double s = x - x0 - 0.3 * e;
        return cplx(1.0 + 0.2 * e, 0.5 * c - 0.1) * std::exp(-s * s);
      });
  return sample_on_grid(fs, g, 2);
}
}  // namespace

TEST_SUITE("linearized") {

TEST_CASE("potential blocks") {
  const StarGrid g = build_star_grid(3, 40.0, 401);
  const LinearizedOperator H = assemble_H(2.0, cubic, g);
  const std::vector<double> alphas(3, 2.0);
  const StarOperator J = assemble_J(alphas, g);
  const Eigen::Matrix2cd t3 = PauliLikeMatrices::theta3();
  double sym = 0.0, far = 0.0;
  for (int e = 0; e < 3; ++e)
    for (int m = 0; m < g.samples(); ++m) {
      const Eigen::Matrix2cd& B = H.op.potential(e, m);
      sym = std::max(sym, (t3 * B * t3 - B.adjoint()).cwiseAbs().maxCoeff());
      if (g.x(m) > 20.0) far = std::max(far, (B - J.potential(e, m)).cwiseAbs().maxCoeff());
    }
  CHECK(sym < 1e-14);
  CHECK(far < 1e-12);
}

TEST_CASE("J with zero alphas is J0") {
  const StarGrid g = build_star_grid(2, 5.0, 51);
  const std::vector<double> zeros(2, 0.0);
  const SparseMatrixC a = assemble_J(zeros, g).reduced_matrix();
  const SparseMatrixC b = assemble_J0(g).reduced_matrix();
  CHECK(Eigen::MatrixXcd(a - b).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("free spectra") {
  const StarGrid g = build_star_grid(2, 10.0, 41);
  const std::vector<double> alphas(2, 2.0);
  const DenseSpectrum sJ = dense_spectrum(assemble_J(alphas, g).reduced_matrix(), false);
  double lowest = 1e300, imag = 0.0;
  for (const cplx& l : sJ.values) {
    lowest = std::min(lowest, std::abs(l.real()));
    imag = std::max(imag, std::abs(l.imag()));
  }
  CHECK(lowest >= 1.0 - 1e-10);
  CHECK(imag < 1e-8);

  // J0 spectrum is symmetric under lambda -> -lambda
  const DenseSpectrum s0 = dense_spectrum(assemble_J0(g).reduced_matrix(), false);
  double worst = 0.0;
  for (const cplx& l : s0.values) {
    double best = 1e300;
    for (const cplx& m : s0.values) best = std::min(best, std::abs(l + m));
    worst = std::max(worst, best);
  }
  CHECK(worst < 1e-8);
}

TEST_CASE("generalized eigenfunctions and the vertex condition") {
  const StarGrid g = build_star_grid(3, 20.0, 401);
  const LinearizedOperator H = assemble_H(2.0, cubic, g);
  const auto E = generalized_eigenfunctions(2.0, cubic, g);
  const double phi0 = H.profile.samples[0];
  for (int e = 0; e < 3; ++e) CHECK(std::abs(E.E1(e, 0, 0) - cplx(0, -phi0)) < 1e-14);

  CHECK(interior_l2_norm(H.apply(E.E1)) < 1e-10);
  CHECK(interior_l2_norm(H.apply(E.E2) - cplx(0, 1) * E.E1) < 1e-6);

  CHECK(kirchhoff_admissible(E.E1).admissible);
  CHECK(kirchhoff_admissible(E.E2).admissible);
  const auto r3 = kirchhoff_admissible(E.E3);
  const auto r4 = kirchhoff_admissible(E.E4);
  CHECK_FALSE(r3.admissible);
  CHECK_FALSE(r4.admissible);
  // phi_yy(0) = alpha^2 phi(0)/4 + F(phi(0)^2) phi(0) = -sqrt 2 and d/dy (y phi)(0) = phi(0);
  // the one-sided flux stencil is off by O(h^2)
  CHECK(r3.flux == doctest::Approx(3.0 * std::sqrt(2.0)).epsilon(1e-2));
  CHECK(r4.flux == doctest::Approx(1.5 * std::sqrt(2.0)).epsilon(1e-2));
}

TEST_CASE("chain residuals of the exact profile are second order") {
  auto residuals = [](int M) {
    const StarGrid g = build_star_grid(3, 20.0, M);
    AssembleOptions o;
    o.discrete_profile = false;
    const LinearizedOperator H = assemble_H(2.0, cubic, g, o);
    const auto E = generalized_eigenfunctions(2.0, cubic, g, ProfileSource::Continuum);
    return std::pair{interior_l2_norm(H.apply(E.E1)),
                     interior_l2_norm(H.apply(E.E2) - cplx(0, 1) * E.E1)};
  };
  const auto [a1, a2] = residuals(201);
  const auto [b1, b2] = residuals(401);
  CHECK(std::log2(a1 / b1) == doctest::Approx(2.0).epsilon(0.25));
  CHECK(std::log2(a2 / b2) == doctest::Approx(2.0).epsilon(0.25));
}

TEST_CASE("root space on a coarse grid") {
  const StarGrid g = build_star_grid(3, 20.0, 101);
  const RootSpace rs = discrete_root_space(assemble_H(2.0, cubic, g));
  CHECK(rs.dimension == 2);

  AssembleOptions dir;
  dir.vertex = VertexCondition::Dirichlet;
  CHECK(discrete_root_space(assemble_H(2.0, cubic, g, dir)).dimension != 2);

  AssembleOptions free;
  free.coupling = 0.0;
  CHECK(discrete_root_space(assemble_H(2.0, cubic, g, free)).gap_eigenvalues.empty());
}

TEST_CASE("continuous projection") {
  const StarGrid g = build_star_grid(3, 20.0, 401);
  const LinearizedOperator H = assemble_H(2.0, cubic, g);
  for (bool asym : {false, true}) {
    const RootBasis rb = root_basis(H, asym);
    CAPTURE(asym);
    CHECK(rb.vectors.size() == (asym ? 6u : 2u));
    for (const auto& v : rb.vectors) CHECK(l2_norm(project_continuous(v, rb)) < 1e-10 * l2_norm(v));
    const GraphFunction f = spinor_bump(g, 2.0);
    const GraphFunction p = project_continuous(f, rb);
    CHECK(l2_norm(project_continuous(p, rb) - p) < 1e-12 * l2_norm(f));
    for (const auto& v : rb.vectors) CHECK(std::abs(l2_inner(p, apply_theta3(v))) < 1e-12);
  }
  // (E1, theta3 E2) = (4i/alpha) sum_j int phi phi_alpha = (2i/alpha) N d/dalpha (alpha) = 3i
  const RootBasis rb = root_basis(H, false);
  CHECK(std::abs(rb.gram(0, 1) - cplx(0, 3)) < 1e-3);
}

TEST_CASE("linearized flow on the root space") {
  const StarGrid g = build_star_grid(3, 20.0, 201);
  const LinearizedOperator H = assemble_H(2.0, cubic, g);
  const RootBasis rb = root_basis(H, false);
  const auto E = generalized_eigenfunctions(2.0, cubic, g);

  std::vector<GraphFunction> snaps;
  evolve_linearized(E.E1, H.op, 10.0, 0.01, 1.0, &snaps);
  double leak = 0.0;
  for (const auto& s : snaps) leak = std::max(leak, l2_norm(project_continuous(s, rb)));
  CHECK(leak < 1e-6 * l2_norm(E.E1));

  // e^{-iHt} E2 = E2 - i t H E2 = E2 + t E1
  GraphFunction f = E.E2;
  const LinearizedPropagator U(H.op, 0.01);
  U.advance(f, 1.0);
  CHECK(l2_norm(f - (E.E2 + E.E1)) < 1e-4 * l2_norm(E.E2));
}

TEST_CASE("phase transform") {
  const StarGrid g = build_star_grid(2, 5.0, 51);
  const GraphFunction f = spinor_bump(g, 1.0);
  CHECK(l2_norm(phase_transform(f, 0.0) - f) == 0.0);
  CHECK(l2_norm(phase_transform(phase_transform(f, 0.4), 0.9) - phase_transform(f, 1.3)) < 1e-14);
  CHECK(l2_norm(phase_transform(f, 2.1)) == doctest::Approx(l2_norm(f)).epsilon(1e-14));
  CHECK(phase_transform(f, 0.5)(1, 1, 7) == std::exp(cplx(0, -0.5)) * f(1, 1, 7));
}

TEST_CASE("scattering limit without potential") {
  const StarGrid g = build_star_grid(3, 20.0, 201);
  AssembleOptions free;
  free.coupling = 0.0;
  const LinearizedOperator H = assemble_H(2.0, cubic, g, free);
  const std::vector<double> ts = {0, 1, 2, 3, 4};
  const auto rep = scattering_limit_check(spinor_bump(g, 3.0), H, ts, 2.0, 0.01);
  CHECK(rep.defect < 1e-12);
  for (double inc : rep.increments) CHECK(inc < 1e-12);
}

}  // TEST_SUITE
