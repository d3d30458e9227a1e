#include "starwave/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "starwave/error.hpp"

namespace starwave {

StarGrid::StarGrid(int n_edges, double edge_length, int samples_per_edge)
    : n_edges_(n_edges), edge_length_(edge_length), samples_(samples_per_edge) {
  if (n_edges < 1) throw config_error("star grid needs at least one edge");
  if (samples_per_edge < 8) throw config_error("star grid needs at least 8 samples per edge");
  if (!(edge_length > 0.0)) throw config_error("edge length must be positive");
  spacing_ = edge_length / (samples_per_edge - 1);
}

StarGrid build_star_grid(int n_edges, double edge_length, int samples_per_edge) {
  return StarGrid(n_edges, edge_length, samples_per_edge);
}

GraphFunction::GraphFunction(const StarGrid& grid, int components)
    : grid_(grid), components_(components) {
  if (components != 1 && components != 2) throw config_error("components must be 1 or 2");
  data_ = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(grid.n_edges()) * components *
                                 grid.samples());
}

GraphFunction::GraphFunction(const StarGrid& grid, int components, Eigen::VectorXcd data)
    : GraphFunction(grid, components) {
  if (data.size() != data_.size()) throw numeric_error("graph function data has wrong size");
  data_ = std::move(data);
}

void require_compatible(const GraphFunction& a, const GraphFunction& b) {
  if (!(a.grid() == b.grid()) || a.components() != b.components())
    throw numeric_error("graph functions live on different grids or component counts");
}

GraphFunction& GraphFunction::operator+=(const GraphFunction& o) {
  require_compatible(*this, o);
  data_ += o.data_;
  return *this;
}

GraphFunction& GraphFunction::operator-=(const GraphFunction& o) {
  require_compatible(*this, o);
  data_ -= o.data_;
  return *this;
}

GraphFunction& GraphFunction::operator*=(cplx s) {
  data_ *= s;
  return *this;
}

GraphFunction operator+(GraphFunction a, const GraphFunction& b) { return a += b; }
GraphFunction operator-(GraphFunction a, const GraphFunction& b) { return a -= b; }
GraphFunction operator*(cplx s, GraphFunction a) { return a *= s; }

GraphFunction conj(const GraphFunction& u) {
  return GraphFunction(u.grid(), u.components(), u.data().conjugate());
}

Eigen::VectorXd trapezoid_weights(const StarGrid& grid) {
  Eigen::VectorXd w = Eigen::VectorXd::Constant(grid.samples(), grid.spacing());
  w[0] *= 0.5;
  w[grid.samples() - 1] *= 0.5;
  return w;
}

cplx l2_inner_weighted(const GraphFunction& u, const GraphFunction& v, std::span<const double> w) {
  require_compatible(u, v);
  const auto& g = u.grid();
  Eigen::VectorXd tw = trapezoid_weights(g);
  if (!w.empty()) {
    if (static_cast<int>(w.size()) != g.samples()) throw numeric_error("weight has wrong length");
    for (int m = 0; m < g.samples(); ++m) tw[m] *= w[m];
  }
  cplx sum = 0.0;
  for (int e = 0; e < g.n_edges(); ++e)
    for (int c = 0; c < u.components(); ++c)
      for (int m = 0; m < g.samples(); ++m) sum += tw[m] * u(e, c, m) * std::conj(v(e, c, m));
  return sum;
}

cplx l2_inner(const GraphFunction& u, const GraphFunction& v) { return l2_inner_weighted(u, v, {}); }

WeightProfile weight_profile(const StarGrid& grid, int exponent) {
  WeightProfile w{exponent, std::vector<double>(grid.samples())};
  for (int m = 0; m < grid.samples(); ++m) w.samples[m] = std::pow(1.0 + grid.x(m), -exponent);
  return w;
}

namespace {

// Pointwise modulus of the spinor (or scalar) value on one edge.
std::vector<double> edge_modulus(const GraphFunction& u, int e) {
  std::vector<double> out(u.grid().samples());
  for (int m = 0; m < u.grid().samples(); ++m) {
    double s = 0.0;
    for (int c = 0; c < u.components(); ++c) s += std::norm(u(e, c, m));
    out[m] = std::sqrt(s);
  }
  return out;
}

double edge_lp(const std::vector<double>& mod, const Eigen::VectorXd& tw, double p) {
  if (std::isinf(p)) return *std::max_element(mod.begin(), mod.end());
  double s = 0.0;
  for (std::size_t m = 0; m < mod.size(); ++m) s += tw[m] * std::pow(mod[m], p);
  return std::pow(s, 1.0 / p);
}

double combine_edges(const std::vector<double>& per_edge, double p, EdgeCombine how) {
  if (how == EdgeCombine::Default) how = std::isinf(p) ? EdgeCombine::Max : EdgeCombine::Sum;
  switch (how) {
    case EdgeCombine::Max:
      return *std::max_element(per_edge.begin(), per_edge.end());
    case EdgeCombine::Sum: {
      double s = 0.0;
      for (double v : per_edge) s += v;
      return s;
    }
    case EdgeCombine::PowerMean: {
      if (std::isinf(p)) return *std::max_element(per_edge.begin(), per_edge.end());
      double s = 0.0;
      for (double v : per_edge) s += std::pow(v, p);
      return std::pow(s, 1.0 / p);
    }
    default:
      return 0.0;
  }
}

}  // namespace

double graph_norm(const GraphFunction& u, const NormKind& kind, EdgeCombine combine) {
  const auto& g = u.grid();
  const Eigen::VectorXd tw = trapezoid_weights(g);
  std::vector<double> per_edge(g.n_edges());
  double p = 2.0;

  if (const auto* lp = std::get_if<LpNorm>(&kind)) {
    p = lp->p;
    if (!(p >= 1.0)) throw config_error("L^p norm needs p >= 1");
    for (int e = 0; e < g.n_edges(); ++e) per_edge[e] = edge_lp(edge_modulus(u, e), tw, p);
  } else if (const auto* hm = std::get_if<SobolevNorm>(&kind)) {
    if (hm->order < 0 || hm->order > 2) throw config_error("H^m norm supports m in {0,1,2}");
    std::vector<GraphFunction> ders{u};
    if (hm->order >= 1) ders.push_back(derivative(u));
    if (hm->order >= 2) ders.push_back(second_derivative(u));
    for (int e = 0; e < g.n_edges(); ++e) {
      double s = 0.0;
      for (const auto& d : ders) {
        double l2 = edge_lp(edge_modulus(d, e), tw, 2.0);
        s += l2 * l2;
      }
      per_edge[e] = std::sqrt(s);
    }
  } else {
    const auto& wn = std::get<WeightedNorm>(kind);
    p = wn.p;
    if (!(p >= 1.0)) throw config_error("weighted norm needs p >= 1");
    const auto rho = weight_profile(g, wn.exponent);
    for (int e = 0; e < g.n_edges(); ++e) {
      auto mod = edge_modulus(u, e);
      for (int m = 0; m < g.samples(); ++m) mod[m] *= rho.samples[m];
      per_edge[e] = edge_lp(mod, tw, p);
    }
  }
  return combine_edges(per_edge, p, combine);
}

double l2_norm(const GraphFunction& u) { return std::sqrt(std::max(0.0, l2_inner(u, u).real())); }

double interior_l2_norm(const GraphFunction& u) {
  const auto& g = u.grid();
  double s = 0.0;
  for (int e = 0; e < g.n_edges(); ++e)
    for (int c = 0; c < u.components(); ++c)
      for (int m = 1; m < g.samples() - 1; ++m) s += std::norm(u(e, c, m));
  return std::sqrt(s * g.spacing());
}

double sup_norm(const GraphFunction& u) {
  return graph_norm(u, LpNorm{std::numeric_limits<double>::infinity()}, EdgeCombine::Max);
}

GraphFunction derivative(const GraphFunction& u) {
  const auto& g = u.grid();
  const int M = g.samples();
  const double h = g.spacing();
  GraphFunction d(g, u.components());
  for (int e = 0; e < g.n_edges(); ++e)
    for (int c = 0; c < u.components(); ++c) {
      auto in = u.channel(e, c);
      auto out = d.channel(e, c);
      out[0] = (-3.0 * in[0] + 4.0 * in[1] - in[2]) / (2.0 * h);
      for (int m = 1; m < M - 1; ++m) out[m] = (in[m + 1] - in[m - 1]) / (2.0 * h);
      out[M - 1] = (3.0 * in[M - 1] - 4.0 * in[M - 2] + in[M - 3]) / (2.0 * h);
    }
  return d;
}

GraphFunction second_derivative(const GraphFunction& u) {
  const auto& g = u.grid();
  const int M = g.samples();
  const double h2 = g.spacing() * g.spacing();
  GraphFunction d(g, u.components());
  for (int e = 0; e < g.n_edges(); ++e)
    for (int c = 0; c < u.components(); ++c) {
      auto in = u.channel(e, c);
      auto out = d.channel(e, c);
      out[0] = (2.0 * in[0] - 5.0 * in[1] + 4.0 * in[2] - in[3]) / h2;
      for (int m = 1; m < M - 1; ++m) out[m] = (in[m + 1] - 2.0 * in[m] + in[m - 1]) / h2;
      out[M - 1] = (2.0 * in[M - 1] - 5.0 * in[M - 2] + 4.0 * in[M - 3] - in[M - 4]) / h2;
    }
  return d;
}

cplx vertex_derivative(const GraphFunction& u, int edge, int comp) {
  return (-3.0 * u(edge, comp, 0) + 4.0 * u(edge, comp, 1) - u(edge, comp, 2)) /
         (2.0 * u.grid().spacing());
}

KirchhoffResidual kirchhoff_residual(const GraphFunction& u) {
  KirchhoffResidual r;
  const int N = u.grid().n_edges();
  for (int c = 0; c < u.components(); ++c) {
    cplx flux = 0.0;
    for (int i = 0; i < N; ++i) {
      flux += vertex_derivative(u, i, c);
      for (int j = i + 1; j < N; ++j)
        r.continuity = std::max(r.continuity, std::abs(u(i, c, 0) - u(j, c, 0)));
    }
    r.flux = std::max(r.flux, std::abs(flux));
  }
  return r;
}

GraphFunction enforce_kirchhoff(GraphFunction u) {
  const int N = u.grid().n_edges();
  for (int c = 0; c < u.components(); ++c) {
    cplx v = 0.0;
    for (int i = 0; i < N; ++i) v += 4.0 * u(i, c, 1) - u(i, c, 2);
    v /= 3.0 * N;
    for (int i = 0; i < N; ++i) u(i, c, 0) = v;
  }
  return u;
}

GraphFunction sample_on_grid(std::span<const EdgeFormula> formulas, const StarGrid& grid,
                             int components) {
  if (static_cast<int>(formulas.size()) != grid.n_edges() * components)
    throw config_error("need one formula per edge and component");
  GraphFunction u(grid, components);
  for (int e = 0; e < grid.n_edges(); ++e)
    for (int c = 0; c < components; ++c) {
      const auto& f = formulas[e * components + c];
      for (int m = 0; m < grid.samples(); ++m) u(e, c, m) = f(grid.x(m));
    }
  return u;
}

GraphFunction sample_on_grid(const EdgeFormula& formula, const StarGrid& grid, int components) {
  std::vector<EdgeFormula> all(grid.n_edges() * components, formula);
  return sample_on_grid(all, grid, components);
}

GraphFunction complexify(const GraphFunction& scalar) {
  if (scalar.components() != 1) throw numeric_error("complexify expects a scalar function");
  const auto& g = scalar.grid();
  GraphFunction s(g, 2);
  for (int e = 0; e < g.n_edges(); ++e) {
    s.channel(e, 0) = scalar.channel(e, 0);
    s.channel(e, 1) = scalar.channel(e, 0).conjugate();
  }
  return s;
}

}  // namespace starwave
