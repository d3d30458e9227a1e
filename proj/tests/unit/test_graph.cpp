#include <doctest.h>

#include <cmath>
#include <limits>

#include "starwave/error.hpp"
#include "starwave/graph.hpp"
#include "starwave/io.hpp"

using namespace starwave;

namespace {
const double inf = std::numeric_limits<double>::infinity();

GraphFunction per_edge_constants(const StarGrid& g, std::vector<double> values) {
  GraphFunction u(g, 1);
  for (int e = 0; e < g.n_edges(); ++e)
    for (int m = 0; m < g.samples(); ++m) u(e, 0, m) = values[static_cast<std::size_t>(e)];
  return u;
}
}  // namespace

TEST_SUITE("graph_core") {

TEST_CASE("grid spacing and preconditions") {
  CHECK(build_star_grid(3, 40.0, 401).spacing() == doctest::Approx(0.1).epsilon(1e-15));
  const StarGrid half = build_star_grid(1, 10.0, 101);
  CHECK(half.n_edges() == 1);
  CHECK(half.spacing() == doctest::Approx(0.1).epsilon(1e-15));
  CHECK_THROWS_AS(build_star_grid(4, 40.0, 7), Error);
  CHECK_THROWS_AS(build_star_grid(0, 40.0, 101), Error);
  CHECK_THROWS_AS(build_star_grid(2, -1.0, 101), Error);
}

TEST_CASE("trapezoid weights integrate constants and linears exactly") {
  const StarGrid g = build_star_grid(2, 3.0, 31);
  const Eigen::VectorXd w = trapezoid_weights(g);
  double s0 = 0.0, s1 = 0.0;
  for (int m = 0; m < g.samples(); ++m) s0 += w[m], s1 += w[m] * g.x(m);
  CHECK(s0 == doctest::Approx(3.0).epsilon(1e-14));
  CHECK(s1 == doctest::Approx(4.5).epsilon(1e-14));
}

TEST_CASE("inner products") {
  const StarGrid unit = build_star_grid(3, 1.0, 11);
  const GraphFunction one = per_edge_constants(unit, {1, 1, 1});
  CHECK(l2_inner(one, one).real() == doctest::Approx(3.0).epsilon(1e-14));
  CHECK(std::abs(l2_inner(one, GraphFunction(unit, 1))) == 0.0);

  // sum over 3 edges of int_0^inf e^{-2x} = 3/2, trapezoid error O(h^2)
  const StarGrid g = build_star_grid(3, 30.0, 3001);
  const GraphFunction u = sample_on_grid([](double x) { return cplx(std::exp(-x)); }, g);
  CHECK(l2_inner(u, u).real() == doctest::Approx(1.5).epsilon(1e-4));

  // conjugate-linear in the second slot
  const GraphFunction iu = cplx(0, 1) * u;
  CHECK(std::abs(l2_inner(u, iu) - cplx(0, -1) * l2_inner(u, u)) < 1e-12);
}

TEST_CASE("norm conventions") {
  const StarGrid g = build_star_grid(3, 30.0, 3001);
  const GraphFunction u = sample_on_grid([](double x) { return cplx(std::exp(-x)); }, g);
  // per-edge sqrt(1/2), summed over edges
  CHECK(graph_norm(u, LpNorm{2.0}) == doctest::Approx(3.0 * std::sqrt(0.5)).epsilon(1e-4));
  CHECK(graph_norm(u, LpNorm{2.0}, EdgeCombine::PowerMean) ==
        doctest::Approx(std::sqrt(1.5)).epsilon(1e-4));
  CHECK(l2_norm(u) == doctest::Approx(std::sqrt(1.5)).epsilon(1e-4));

  const GraphFunction c = per_edge_constants(build_star_grid(3, 1.0, 11), {1, 2, 3});
  CHECK(graph_norm(c, LpNorm{inf}) == 3.0);
  CHECK(graph_norm(c, LpNorm{inf}, EdgeCombine::Max) == 3.0);
  CHECK(graph_norm(c, LpNorm{inf}, EdgeCombine::Sum) == 6.0);
  CHECK(sup_norm(c) == 3.0);

  const GraphFunction zero(g, 2);
  CHECK(graph_norm(zero, LpNorm{2.0}) == 0.0);
  CHECK(graph_norm(zero, SobolevNorm{2}) == 0.0);
  CHECK(graph_norm(zero, WeightedNorm{2, 2.0}) == 0.0);
  CHECK_THROWS_AS(graph_norm(u, LpNorm{0.5}), Error);
  CHECK_THROWS_AS(graph_norm(u, SobolevNorm{3}), Error);
}

TEST_CASE("H1 norm of e^{-x}") {
  // ||u||^2 + ||u'||^2 = 1 per edge
  const StarGrid g = build_star_grid(2, 30.0, 3001);
  const GraphFunction u = sample_on_grid([](double x) { return cplx(std::exp(-x)); }, g);
  CHECK(graph_norm(u, SobolevNorm{1}) == doctest::Approx(2.0).epsilon(1e-4));
}

TEST_CASE("weight profile") {
  const StarGrid g = build_star_grid(1, 7.0, 8);
  const WeightProfile w = weight_profile(g, 2);
  REQUIRE(w.samples.size() == 8);
  for (int m = 0; m < 8; ++m)
    CHECK(w.samples[static_cast<std::size_t>(m)] ==
          doctest::Approx(1.0 / ((1.0 + m) * (1.0 + m))).epsilon(1e-15));
}

TEST_CASE("derivatives are second order") {
  auto err = [](int M) {
    const StarGrid g = build_star_grid(2, 3.0, M);
    const GraphFunction u = sample_on_grid([](double x) { return cplx(std::sin(x)); }, g);
    const GraphFunction d = derivative(u), dd = second_derivative(u);
    double e1 = 0.0, e2 = 0.0;
    for (int m = 0; m < M; ++m) {
      e1 = std::max(e1, std::abs(d(1, 0, m) - std::cos(g.x(m))));
      e2 = std::max(e2, std::abs(dd(1, 0, m) + std::sin(g.x(m))));
    }
    return std::pair{e1, e2};
  };
  const auto [a1, a2] = err(61);
  const auto [b1, b2] = err(121);
  CHECK(std::log2(a1 / b1) == doctest::Approx(2.0).epsilon(0.1));
  CHECK(std::log2(a2 / b2) == doctest::Approx(2.0).epsilon(0.1));
}

TEST_CASE("kirchhoff residuals") {
  const StarGrid g = build_star_grid(3, 2.0, 21);
  const GraphFunction one = sample_on_grid([](double) { return cplx(1.0); }, g);
  CHECK(kirchhoff_residual(one).continuity == 0.0);
  CHECK(kirchhoff_residual(one).flux == doctest::Approx(0.0));

  // u_j(x) = x on three edges: each derivative is 1 at the vertex
  const GraphFunction lin = sample_on_grid([](double x) { return cplx(x); }, g);
  CHECK(kirchhoff_residual(lin).continuity == 0.0);
  CHECK(kirchhoff_residual(lin).flux == doctest::Approx(3.0).epsilon(1e-12));

  GraphFunction spike(g, 1);
  spike(0, 0, 0) = 1.0;
  CHECK(kirchhoff_residual(spike).continuity == 1.0);

  const GraphFunction fixed = enforce_kirchhoff(lin);
  CHECK(kirchhoff_residual(fixed).continuity == 0.0);
  CHECK(kirchhoff_residual(fixed).flux < 1e-12);
}

TEST_CASE("sampling") {
  const StarGrid g = build_star_grid(3, 5.0, 51);
  const GraphFunction s = sample_on_grid([](double x) { return cplx(1.0 / std::cosh(x)); }, g);
  for (int e = 0; e < 3; ++e) CHECK(s(e, 0, 0) == cplx(1.0));
  const GraphFunction z = sample_on_grid([](double) { return cplx(0.0); }, g);
  CHECK(l2_norm(z) == 0.0);
  std::vector<EdgeFormula> two(2, [](double x) { return cplx(std::exp(-x)); });
  CHECK_THROWS_AS(sample_on_grid(two, g), Error);

  const GraphFunction sp = complexify(cplx(0, 1) * s);
  CHECK(sp.is_spinor());
  CHECK(sp(2, 1, 3) == std::conj(sp(2, 0, 3)));
}

TEST_CASE("arithmetic requires matching grids") {
  const GraphFunction a(build_star_grid(2, 1.0, 11), 1);
  const GraphFunction b(build_star_grid(3, 1.0, 11), 1);
  CHECK_THROWS_AS(a + b, Error);
  CHECK_THROWS_AS(a - GraphFunction(a.grid(), 2), Error);
}

}  // TEST_SUITE

TEST_SUITE("io") {

TEST_CASE("json round trip is exact") {
  const StarGrid g = build_star_grid(2, 3.0, 17);
  std::vector<EdgeFormula> fs;
  for (int k = 0; k < 4; ++k)
    fs.push_back([k](double x) { return cplx(std::sin(x + k) / 3.0, std::exp(-x * k) * 0.1); });
  const GraphFunction u = sample_on_grid(fs, g, 2);
  const GraphFunction v = graph_function_from_json(nlohmann::json::parse(to_json(u).dump()));
  CHECK(v.grid() == g);
  CHECK(v.components() == 2);
  CHECK((v.data() - u.data()).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(graph_function_from_json(nlohmann::json{{"n_edges", 2}}), Error);
}

TEST_CASE("shortest round-trip doubles") {
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(1.0) == "1");
  CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
  CHECK(std::stod(format_double(-2.5e-300)) == -2.5e-300);
}

TEST_CASE("csv layout") {
  const StarGrid g = build_star_grid(1, 1.0, 8);
  GraphFunction u(g, 1);
  u(0, 0, 1) = cplx(0.5, -0.25);
  const std::string csv = to_csv(u);
  CHECK(csv.rfind("edge,component,x,re,im\n", 0) == 0);
  CHECK(csv.find("0,0,0.14285714285714285,0.5,-0.25\n") != std::string::npos);
  CHECK(csv.find('\r') == std::string::npos);

  CsvTable t({"a", "b"});
  t.row(std::vector<double>{1.0, 2.5});
  CHECK(t.str() == "a,b\n1,2.5\n");
  CHECK_THROWS_AS(t.row(std::vector<double>{1.0}), Error);
}

}  // TEST_SUITE
