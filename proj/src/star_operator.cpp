#include "starwave/star_operator.hpp"

#include <cmath>

#include "starwave/error.hpp"

namespace starwave {

StarOperator::StarOperator(const StarGrid& grid, int components,
                           std::array<double, 2> laplacian_sign, VertexCondition vertex)
    : grid_(grid),
      components_(components),
      sign_(laplacian_sign),
      vertex_(vertex),
      potential_(static_cast<std::size_t>(grid.n_edges()) * grid.samples(),
                 Eigen::Matrix2cd::Zero()) {
  if (components != 1 && components != 2) throw config_error("components must be 1 or 2");
}

void StarOperator::add_scalar_potential(std::span<const cplx> q) {
  if (static_cast<int>(q.size()) != grid_.samples()) throw numeric_error("potential length");
  for (int e = 0; e < grid_.n_edges(); ++e)
    for (int m = 0; m < grid_.samples(); ++m)
      potential(e, m) += q[m] * Eigen::Matrix2cd::Identity();
}

Eigen::VectorXcd StarOperator::restrict(const GraphFunction& u) const {
  Eigen::VectorXcd r(reduced_size());
  for (int e = 0; e < grid_.n_edges(); ++e)
    for (int c = 0; c < components_; ++c)
      for (int m = 1; m < grid_.samples() - 1; ++m) r[reduced_index(e, c, m)] = u(e, c, m);
  return r;
}

GraphFunction StarOperator::prolong(const Eigen::VectorXcd& r) const {
  GraphFunction u(grid_, components_);
  for (int e = 0; e < grid_.n_edges(); ++e)
    for (int c = 0; c < components_; ++c)
      for (int m = 1; m < grid_.samples() - 1; ++m) u(e, c, m) = r[reduced_index(e, c, m)];
  for (int e = 0; e < grid_.n_edges(); ++e)
    for (int c = 0; c < components_; ++c)
      u(e, c, grid_.samples() - 1) = far_closure_[c] * u(e, c, grid_.samples() - 2);
  if (vertex_ == VertexCondition::Kirchhoff) return enforce_kirchhoff(std::move(u));
  return u;
}

SparseMatrixC StarOperator::reduced_matrix() const {
  const int N = grid_.n_edges();
  const int M = grid_.samples();
  const double h2 = grid_.spacing() * grid_.spacing();
  std::vector<Eigen::Triplet<cplx>> t;
  t.reserve(static_cast<std::size_t>(reduced_size()) * (3 + components_) + 4 * N * N);

  for (int e = 0; e < N; ++e)
    for (int c = 0; c < components_; ++c) {
      const double s = sign_[c] / h2;
      for (int m = 1; m < M - 1; ++m) {
        const auto row = reduced_index(e, c, m);
        t.emplace_back(row, row, 2.0 * s);
        for (int c2 = 0; c2 < components_; ++c2) {
          const cplx q = potential(e, m)(c, c2);
          if (q != cplx(0.0)) t.emplace_back(row, reduced_index(e, c2, m), q);
        }
        if (m + 1 < M - 1) t.emplace_back(row, reduced_index(e, c, m + 1), -s);
        if (m == M - 2 && far_closure_[c] != cplx(0.0)) t.emplace_back(row, row, -s * far_closure_[c]);
        if (m - 1 >= 1) t.emplace_back(row, reduced_index(e, c, m - 1), -s);
        if (m == 1 && vertex_ == VertexCondition::Kirchhoff)
          for (int j = 0; j < N; ++j) {
            t.emplace_back(row, reduced_index(j, c, 1), -s * 4.0 / (3.0 * N));
            t.emplace_back(row, reduced_index(j, c, 2), s / (3.0 * N));
          }
      }
    }
  SparseMatrixC A(reduced_size(), reduced_size());
  A.setFromTriplets(t.begin(), t.end());
  return A;
}

GraphFunction StarOperator::apply(const GraphFunction& u) const {
  if (!(u.grid() == grid_) || u.components() != components_)
    throw numeric_error("operator and function shapes differ");
  GraphFunction d2 = second_derivative(u);
  GraphFunction out(grid_, components_);
  for (int e = 0; e < grid_.n_edges(); ++e)
    for (int m = 0; m < grid_.samples(); ++m)
      for (int c = 0; c < components_; ++c) {
        cplx v = -sign_[c] * d2(e, c, m);
        for (int c2 = 0; c2 < components_; ++c2) v += potential(e, m)(c, c2) * u(e, c2, m);
        out(e, c, m) = v;
      }
  return out;
}

std::vector<double> absorbing_profile(const StarGrid& grid, double fraction, double strength) {
  std::vector<double> w(grid.samples(), 0.0);
  const double L = grid.edge_length();
  const double start = L * (1.0 - fraction);
  for (int m = 0; m < grid.samples(); ++m) {
    const double x = grid.x(m);
    if (x > start) {
      const double s = (x - start) / (L - start);
      w[m] = strength * s * s;
    }
  }
  return w;
}

namespace {

SparseMatrixC identity(Eigen::Index n) {
  SparseMatrixC I(n, n);
  I.setIdentity();
  return I;
}

std::unique_ptr<Eigen::SparseLU<SparseMatrixC>> factorize(const SparseMatrixC& K) {
  auto lu = std::make_unique<Eigen::SparseLU<SparseMatrixC>>();
  lu->analyzePattern(K);
  lu->factorize(K);
  if (lu->info() != Eigen::Success) throw numeric_error("sparse LU factorization failed");
  return lu;
}

}  // namespace

CrankNicolson::CrankNicolson(const SparseMatrixC& A, double dt) : dt_(dt) {
  if (!(dt > 0.0)) throw config_error("time step must be positive");
  const cplx half(0.0, 0.5 * dt);
  const SparseMatrixC I = identity(A.rows());
  explicit_part_ = I - half * A;
  lu_ = factorize(SparseMatrixC(I + half * A));
}

void CrankNicolson::step(Eigen::VectorXcd& v) const {
  Eigen::VectorXcd rhs = explicit_part_ * v;
  v = lu_->solve(rhs);
}

ShiftedSolver::ShiftedSolver(const SparseMatrixC& A, cplx lambda) : lambda_(lambda) {
  lu_ = factorize(SparseMatrixC(lambda * identity(A.rows()) - A));
}

Eigen::VectorXcd ShiftedSolver::solve(const Eigen::VectorXcd& rhs) const {
  Eigen::VectorXcd x = lu_->solve(rhs);
  if (lu_->info() != Eigen::Success) throw numeric_error("shifted solve failed");
  return x;
}

}  // namespace starwave
