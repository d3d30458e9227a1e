#pragma once

#include <array>
#include <memory>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "starwave/graph.hpp"

namespace starwave {

enum class VertexCondition { Kirchhoff, Dirichlet };

using SparseMatrixC = Eigen::SparseMatrix<cplx>;

/// Edge-wise operator  u -> -s_c u_c'' + Q(x) u  on a star grid, with the
/// vertex closed either by the Kirchhoff rows (continuity and zero one-sided
/// flux) or by u(0) = 0.  The far end is homogeneous Dirichlet.
///
/// Unknowns of the linear algebra are the samples m = 1..M-2 of every
/// (edge, component); vertex samples are eliminated through
///   u(0) = sum_i (4 u_i(h) - u_i(2h)) / (3N),
/// which is continuity plus the 3-point flux row solved for the vertex value.
class StarOperator {
 public:
  StarOperator(const StarGrid& grid, int components, std::array<double, 2> laplacian_sign,
               VertexCondition vertex = VertexCondition::Kirchhoff);

  const StarGrid& grid() const { return grid_; }
  int components() const { return components_; }
  VertexCondition vertex_condition() const { return vertex_; }
  Eigen::Index reduced_size() const {
    return static_cast<Eigen::Index>(grid_.n_edges()) * components_ * (grid_.samples() - 2);
  }
  Eigen::Index reduced_index(int edge, int comp, int m) const {
    return (static_cast<Eigen::Index>(edge) * components_ + comp) * (grid_.samples() - 2) + m - 1;
  }

  /// Potential block at (edge, sample); only the top-left entry is used for scalars.
  Eigen::Matrix2cd& potential(int edge, int m) { return potential_[edge * grid_.samples() + m]; }
  const Eigen::Matrix2cd& potential(int edge, int m) const {
    return potential_[edge * grid_.samples() + m];
  }
  /// Adds q(x_m) times the identity on every edge and component.
  void add_scalar_potential(std::span<const cplx> q);

  /// Far-end closure u(M-1) = z_c u(M-2) per component.  Zero is Dirichlet;
  /// the outgoing lattice root makes the truncation transparent.
  void set_far_closure(std::array<cplx, 2> z) { far_closure_ = z; }
  std::array<cplx, 2> far_closure() const { return far_closure_; }

  Eigen::VectorXcd restrict(const GraphFunction& u) const;
  /// Rebuilds the vertex and far-end samples from interior unknowns.
  GraphFunction prolong(const Eigen::VectorXcd& r) const;

  SparseMatrixC reduced_matrix() const;
  /// Pointwise action on all samples, with one-sided second derivatives at both ends.
  GraphFunction apply(const GraphFunction& u) const;

 private:
  StarGrid grid_;
  int components_;
  std::array<double, 2> sign_;
  VertexCondition vertex_;
  std::vector<Eigen::Matrix2cd> potential_;
  std::array<cplx, 2> far_closure_{0.0, 0.0};
};

/// Quadratic complex-potential ramp W(x) >= 0 on the last `fraction` of each edge.
std::vector<double> absorbing_profile(const StarGrid& grid, double fraction, double strength);

/// Crank-Nicolson propagator for i v_t = A v.
class CrankNicolson {
 public:
  CrankNicolson(const SparseMatrixC& A, double dt);
  void step(Eigen::VectorXcd& v) const;
  double dt() const { return dt_; }

 private:
  double dt_;
  SparseMatrixC explicit_part_;
  std::unique_ptr<Eigen::SparseLU<SparseMatrixC>> lu_;
};

/// Factorization of (lambda I - A) for repeated solves.
class ShiftedSolver {
 public:
  ShiftedSolver(const SparseMatrixC& A, cplx lambda);
  Eigen::VectorXcd solve(const Eigen::VectorXcd& rhs) const;
  cplx lambda() const { return lambda_; }

 private:
  cplx lambda_;
  std::unique_ptr<Eigen::SparseLU<SparseMatrixC>> lu_;
};

}  // namespace starwave
