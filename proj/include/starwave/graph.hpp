#pragma once

#include <complex>
#include <functional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace starwave {

using cplx = std::complex<double>;

/// N half-lines glued at one vertex, each truncated to [0, L] with M uniform samples.
/// Sample 0 of every edge sits on the vertex.
class StarGrid {
 public:
  StarGrid(int n_edges, double edge_length, int samples_per_edge);

  int n_edges() const { return n_edges_; }
  double edge_length() const { return edge_length_; }
  int samples() const { return samples_; }
  double spacing() const { return spacing_; }
  double x(int m) const { return spacing_ * m; }

  bool operator==(const StarGrid& other) const = default;

 private:
  int n_edges_;
  double edge_length_;
  int samples_;
  double spacing_;
};

StarGrid build_star_grid(int n_edges, double edge_length, int samples_per_edge);

/// Complex samples on every edge; one component (scalar) or two (spinor).
/// Storage is edge -> component -> sample, which for spinors reproduces the
/// (u_{1,1}, u_{1,2}, ..., u_{N,1}, u_{N,2}) stacking.
class GraphFunction {
 public:
  GraphFunction(const StarGrid& grid, int components);
  GraphFunction(const StarGrid& grid, int components, Eigen::VectorXcd data);

  const StarGrid& grid() const { return grid_; }
  int components() const { return components_; }
  bool is_spinor() const { return components_ == 2; }

  Eigen::Index index(int edge, int comp, int m) const {
    return (static_cast<Eigen::Index>(edge) * components_ + comp) * grid_.samples() + m;
  }
  cplx& operator()(int edge, int comp, int m) { return data_[index(edge, comp, m)]; }
  cplx operator()(int edge, int comp, int m) const { return data_[index(edge, comp, m)]; }

  /// Contiguous samples of one (edge, component) channel.
  auto channel(int edge, int comp) { return data_.segment(index(edge, comp, 0), grid_.samples()); }
  auto channel(int edge, int comp) const {
    return data_.segment(index(edge, comp, 0), grid_.samples());
  }

  Eigen::VectorXcd& data() { return data_; }
  const Eigen::VectorXcd& data() const { return data_; }

  GraphFunction& operator+=(const GraphFunction& o);
  GraphFunction& operator-=(const GraphFunction& o);
  GraphFunction& operator*=(cplx s);

 private:
  StarGrid grid_;
  int components_;
  Eigen::VectorXcd data_;
};

GraphFunction operator+(GraphFunction a, const GraphFunction& b);
GraphFunction operator-(GraphFunction a, const GraphFunction& b);
GraphFunction operator*(cplx s, GraphFunction a);
GraphFunction conj(const GraphFunction& u);

void require_compatible(const GraphFunction& a, const GraphFunction& b);

/// Trapezoid weights for one edge.
Eigen::VectorXd trapezoid_weights(const StarGrid& grid);

/// sum_i int u^i conj(v^i) dx, summed over components as well.
cplx l2_inner(const GraphFunction& u, const GraphFunction& v);

/// Pointwise-weighted variant: sum_i int w(x) u^i conj(v^i) dx.
cplx l2_inner_weighted(const GraphFunction& u, const GraphFunction& v, std::span<const double> w);

struct LpNorm {
  double p = 2.0;  // std::numeric_limits<double>::infinity() for sup
};
struct SobolevNorm {
  int order = 1;  // 0, 1 or 2
};
/// || u rho^exponent ||_p with rho(x) = (1+|x|)^{-1}.
struct WeightedNorm {
  int exponent = 2;
  double p = 2.0;
};
using NormKind = std::variant<LpNorm, SobolevNorm, WeightedNorm>;

/// How per-edge norms are combined.  `Default` sums edge norms for p < inf and
/// takes the sup over edges for L^inf; `PowerMean` is (sum ||u^i||^p)^{1/p}.
enum class EdgeCombine { Default, Sum, Max, PowerMean };

double graph_norm(const GraphFunction& u, const NormKind& kind,
                  EdgeCombine combine = EdgeCombine::Default);

double l2_norm(const GraphFunction& u);
/// L^2 norm over samples 1..M-2 only: the rows where a discretized equation is imposed.
double interior_l2_norm(const GraphFunction& u);
double sup_norm(const GraphFunction& u);

/// rho(x)^exponent sampled on one edge.
struct WeightProfile {
  int exponent;
  std::vector<double> samples;
};
WeightProfile weight_profile(const StarGrid& grid, int exponent);

/// First derivative along every channel: centered inside, 3-point one-sided at both ends.
GraphFunction derivative(const GraphFunction& u);
/// Second derivative: centered inside, 4-point one-sided at both ends.
GraphFunction second_derivative(const GraphFunction& u);

/// One-sided second-order derivative at the vertex of a channel.
cplx vertex_derivative(const GraphFunction& u, int edge, int comp);

struct KirchhoffResidual {
  double continuity = 0.0;
  double flux = 0.0;
};
KirchhoffResidual kirchhoff_residual(const GraphFunction& u);

/// Replaces the vertex samples by the common value that zeroes the discrete
/// flux, u(0) = sum_i (4 u_i(h) - u_i(2h)) / (3N), per component.
GraphFunction enforce_kirchhoff(GraphFunction u);

using EdgeFormula = std::function<cplx(double)>;

/// One formula per (edge, component), ordered edge-major.
GraphFunction sample_on_grid(std::span<const EdgeFormula> formulas, const StarGrid& grid,
                             int components = 1);
/// The same formula on every edge and component.
GraphFunction sample_on_grid(const EdgeFormula& formula, const StarGrid& grid, int components = 1);

/// Spinor (v, conj v) stacked per edge from a scalar function.
GraphFunction complexify(const GraphFunction& scalar);

}  // namespace starwave
