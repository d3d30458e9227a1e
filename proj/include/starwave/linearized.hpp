#pragma once

#include <optional>
#include <vector>

#include "starwave/graph.hpp"
#include "starwave/soliton.hpp"
#include "starwave/star_operator.hpp"

namespace starwave {

struct PauliLikeMatrices {
  static Eigen::Matrix2cd theta2() {
    Eigen::Matrix2cd m;
    m << 0.0, cplx(0.0, -1.0), cplx(0.0, 1.0), 0.0;
    return m;
  }
  static Eigen::Matrix2cd theta3() {
    Eigen::Matrix2cd m;
    m << 1.0, 0.0, 0.0, -1.0;
    return m;
  }
};

/// (f_1, -f_2) on every edge.
GraphFunction apply_theta3(const GraphFunction& f);

/// H(alpha) = (-Delta + alpha^2/4) theta3 + V on a spinor star grid.
struct LinearizedOperator {
  double alpha;
  Nonlinearity nonlinearity;
  Profile profile;  // the profile the potential is built from
  StarOperator op;

  const StarGrid& grid() const { return op.grid(); }
  double spectrum_edge() const { return alpha * alpha / 4.0; }
  GraphFunction apply(const GraphFunction& f) const { return op.apply(f); }
};

struct AssembleOptions {
  VertexCondition vertex = VertexCondition::Kirchhoff;
  bool discrete_profile = true;  // false: sampled quadrature profile
  double absorbing_fraction = 0.0;
  double absorbing_strength = 0.0;
  double coupling = 1.0;  // scales V, for control experiments
};

LinearizedOperator assemble_H(double alpha, const Nonlinearity& nl, const StarGrid& grid,
                              AssembleOptions opts = {});

/// Free spinor operator (-Delta + w_j) theta3 with w_j = alpha_j^2 / 4 per edge.
StarOperator assemble_J(std::span<const double> alphas, const StarGrid& grid,
                        double absorbing_fraction = 0.0, double absorbing_strength = 0.0);
/// diag(-Delta, Delta).
StarOperator assemble_J0(const StarGrid& grid, double absorbing_fraction = 0.0,
                         double absorbing_strength = 0.0);

/// The four edge-symmetric generalized eigenfunctions: phase, scaling,
/// translation and boost modes.  With `Discrete`, E1 and E2 come from the
/// discrete profile and satisfy the discrete vertex rows exactly; with
/// `Continuum` every mode samples the exact profile (used for truncation-order
/// checks).  E3 and E4 always sample the exact profile.
enum class ProfileSource { Discrete, Continuum };

struct GeneralizedEigenfunctions {
  GraphFunction E1, E2, E3, E4;
};
GeneralizedEigenfunctions generalized_eigenfunctions(
    double alpha, const Nonlinearity& nl, const StarGrid& grid,
    ProfileSource source = ProfileSource::Discrete, double rel_step = 1e-4);

struct AdmissibilityReport {
  bool admissible;
  double continuity;
  double flux;
};
/// Pass iff both residuals are below tol * ||E||_inf.
AdmissibilityReport kirchhoff_admissible(const GraphFunction& E, double tol = 1e-6);

/// Basis of the generalized kernel used for projections: E1, E2 from the
/// discrete profile, plus for N >= 2 the translation and boost modes with
/// edge weights summing to zero (these satisfy the vertex condition).
struct RootBasis {
  std::vector<GraphFunction> vectors;
  Eigen::MatrixXcd gram;  // (xi_a, theta3 xi_b)
  std::size_t symmetric_count = 2;
};
RootBasis root_basis(const LinearizedOperator& H, bool include_asymmetric = true,
                     double rel_step = 1e-4);

/// Continuous-part projection: f - sum c_a xi_a with (P_c f, theta3 xi_b) = 0.
GraphFunction project_continuous(const GraphFunction& f, const RootBasis& rs);
Eigen::VectorXcd root_coefficients(const GraphFunction& f, const RootBasis& rs);

struct GapEigenvalue {
  cplx lambda;
  double residual;
};

struct RootSpace {
  std::vector<GapEigenvalue> gap_eigenvalues;  // |Re| < w and |Im| < w
  std::vector<GapEigenvalue> cluster;          // |lambda| < cluster_radius
  int dimension = 0;
  double gap_margin = 0.0;                     // min |lambda| outside the cluster
  double continuum_edge = 0.0;                 // min |Re lambda| of the remaining spectrum
  Eigen::MatrixXcd pairing_gram;
};

/// Dense eigen-decomposition of the reduced H; the zero cluster is read off
/// with algebraic multiplicity.
RootSpace discrete_root_space(const LinearizedOperator& H, double cluster_radius = 0.05);

/// All eigenvalues of a reduced operator (dense LAPACK), with optional right eigenvectors.
struct DenseSpectrum {
  Eigen::VectorXcd values;
  Eigen::MatrixXcd vectors;  // columns, empty unless requested
};
DenseSpectrum dense_spectrum(const SparseMatrixC& A, bool vectors);

/// Crank-Nicolson for i f_t = H f on the reduced system.
class LinearizedPropagator {
 public:
  LinearizedPropagator(const StarOperator& op, double dt);
  void advance(GraphFunction& f, double t) const;
  double dt() const { return cn_.dt(); }

 private:
  const StarOperator* op_;
  CrankNicolson cn_;
};

struct LinearizedSample {
  double t;
  double l2;
  double weighted_l2;  // || rho^2 f ||_2
  double sup;
};

std::vector<LinearizedSample> evolve_linearized(const GraphFunction& f0, const StarOperator& op,
                                                double T, double dt, double record_every,
                                                std::vector<GraphFunction>* snapshots = nullptr);

/// Multiplies the first spinor component by e^{i rho} and the second by e^{-i rho}.
GraphFunction phase_transform(const GraphFunction& f, double rho);

struct ScatteringLimitReport {
  std::vector<double> times;
  std::vector<double> increments;  // || h(t_{m+1}) - h(t_m) ||_2
  double defect = 0.0;             // || e^{-iHT} f - e^{-iJT} f_plus ||_2
  double weighted_decay_slope = 0.0;
  bool decay_observed = true;
  std::optional<GraphFunction> f_plus;
};

/// h(t) = e^{iJt} e^{-iHt} f at checkpoints; f_plus is taken from the
/// checkpoint `extraction_time` and compared at the final time.
ScatteringLimitReport scattering_limit_check(const GraphFunction& f, const LinearizedOperator& H,
                                             std::span<const double> checkpoints,
                                             double extraction_time, double dt,
                                             double absorbing_fraction = 0.0,
                                             double absorbing_strength = 0.0);

}  // namespace starwave
