#include "starwave/linearized.hpp"

#include <algorithm>
#include <cmath>

#include <lapacke.h>

#include "starwave/error.hpp"

namespace starwave {

GraphFunction apply_theta3(const GraphFunction& f) {
  if (!f.is_spinor()) throw numeric_error("theta3 acts on spinors");
  GraphFunction g = f;
  for (int e = 0; e < f.grid().n_edges(); ++e) g.channel(e, 1) *= -1.0;
  return g;
}

namespace {

void add_absorbing(StarOperator& op, double fraction, double strength) {
  if (fraction <= 0.0 || strength <= 0.0) return;
  const auto w = absorbing_profile(op.grid(), fraction, strength);
  std::vector<cplx> q(w.size());
  for (std::size_t m = 0; m < w.size(); ++m) q[m] = cplx(0.0, -w[m]);
  op.add_scalar_potential(q);
}

std::vector<double> sampled_profile(const Nonlinearity& nl, double alpha, const StarGrid& grid) {
  return profile_quadrature(nl, alpha, grid).samples;
}

}  // namespace

LinearizedOperator assemble_H(double alpha, const Nonlinearity& nl, const StarGrid& grid,
                              AssembleOptions opts) {
  Profile prof = opts.discrete_profile ? discrete_profile(nl, alpha, grid)
                                       : profile_quadrature(nl, alpha, grid);
  StarOperator op(grid, 2, {1.0, -1.0}, opts.vertex);
  const double w = alpha * alpha / 4.0;
  for (int e = 0; e < grid.n_edges(); ++e)
    for (int m = 0; m < grid.samples(); ++m) {
      const double p2 = prof.samples[m] * prof.samples[m];
      const double a = opts.coupling * (nl.F(p2) + nl.F_prime(p2) * p2);
      const double b = opts.coupling * nl.F_prime(p2) * p2;
      Eigen::Matrix2cd q;
      q << w + a, b, -b, -(w + a);
      op.potential(e, m) = q;
    }
  add_absorbing(op, opts.absorbing_fraction, opts.absorbing_strength);
  return {alpha, nl, std::move(prof), std::move(op)};
}

StarOperator assemble_J(std::span<const double> alphas, const StarGrid& grid,
                        double absorbing_fraction, double absorbing_strength) {
  if (static_cast<int>(alphas.size()) != grid.n_edges())
    throw config_error("need one alpha per edge");
  StarOperator op(grid, 2, {1.0, -1.0});
  for (int e = 0; e < grid.n_edges(); ++e) {
    const double w = alphas[e] * alphas[e] / 4.0;
    for (int m = 0; m < grid.samples(); ++m) op.potential(e, m) = w * PauliLikeMatrices::theta3();
  }
  add_absorbing(op, absorbing_fraction, absorbing_strength);
  return op;
}

StarOperator assemble_J0(const StarGrid& grid, double absorbing_fraction,
                         double absorbing_strength) {
  std::vector<double> zeros(grid.n_edges(), 0.0);
  return assemble_J(zeros, grid, absorbing_fraction, absorbing_strength);
}

GeneralizedEigenfunctions generalized_eigenfunctions(double alpha, const Nonlinearity& nl,
                                                     const StarGrid& grid, ProfileSource source,
                                                     double rel_step) {
  const auto phi = sampled_profile(nl, alpha, grid);
  std::vector<double> phi12, dphi_alpha;
  if (source == ProfileSource::Discrete) {
    phi12 = discrete_profile(nl, alpha, grid).samples;
    dphi_alpha = profile_alpha_derivative(nl, alpha, grid, rel_step);
  } else {
    phi12 = phi;
    const double d = rel_step * alpha;
    const auto up = sampled_profile(nl, alpha + d, grid);
    const auto dn = sampled_profile(nl, alpha - d, grid);
    dphi_alpha.resize(up.size());
    for (std::size_t m = 0; m < up.size(); ++m) dphi_alpha[m] = (up[m] - dn[m]) / (2.0 * d);
  }
  const int M = grid.samples();
  GraphFunction v1(grid, 1), v2(grid, 1), v3(grid, 1), v4(grid, 1);
  for (int e = 0; e < grid.n_edges(); ++e)
    for (int m = 0; m < M; ++m) {
      const double x = grid.x(m);
      // phi' = -sqrt(-2U(phi)) on x > 0 from the first integral.
      const double dphi =
          m == 0 ? 0.0 : -std::sqrt(std::max(0.0, -2.0 * potential_U(nl, phi[m], alpha)));
      v1(e, 0, m) = cplx(0.0, -phi12[m]);
      v2(e, 0, m) = -(2.0 / alpha) * dphi_alpha[m];
      v3(e, 0, m) = -dphi;
      v4(e, 0, m) = cplx(0.0, 0.5 * x * phi[m]);
    }
  return {complexify(v1), complexify(v2), complexify(v3), complexify(v4)};
}

AdmissibilityReport kirchhoff_admissible(const GraphFunction& E, double tol) {
  const auto r = kirchhoff_residual(E);
  const double scale = std::max(sup_norm(E), 1e-300);
  return {r.continuity < tol * scale && r.flux < tol * scale, r.continuity, r.flux};
}

RootBasis root_basis(const LinearizedOperator& H, bool include_asymmetric, double rel_step) {
  const auto& grid = H.grid();
  const double alpha = H.alpha;
  const int N = grid.n_edges();
  const auto gen = generalized_eigenfunctions(alpha, H.nonlinearity, grid,
                                              ProfileSource::Discrete, rel_step);
  RootBasis rb;
  rb.vectors = {gen.E1, gen.E2};
  rb.symmetric_count = 2;
  if (include_asymmetric && N >= 2) {
    for (const GraphFunction* mode : {&gen.E3, &gen.E4})
      for (int k = 1; k < N; ++k) {
        GraphFunction v(grid, 2);
        for (int c = 0; c < 2; ++c) {
          v.channel(0, c) = mode->channel(0, c);
          v.channel(k, c) = -mode->channel(k, c);
        }
        rb.vectors.push_back(std::move(v));
      }
  }
  const auto n = static_cast<Eigen::Index>(rb.vectors.size());
  rb.gram.resize(n, n);
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = 0; b < n; ++b)
      rb.gram(a, b) = l2_inner(rb.vectors[a], apply_theta3(rb.vectors[b]));
  return rb;
}

Eigen::VectorXcd root_coefficients(const GraphFunction& f, const RootBasis& rs) {
  const auto n = static_cast<Eigen::Index>(rs.vectors.size());
  Eigen::VectorXcd rhs(n);
  for (Eigen::Index b = 0; b < n; ++b) rhs[b] = l2_inner(f, apply_theta3(rs.vectors[b]));
  Eigen::FullPivLU<Eigen::MatrixXcd> lu(rs.gram.transpose());
  if (lu.rank() < n) throw hypothesis_error("root-space pairing matrix is singular");
  return lu.solve(rhs);
}

GraphFunction project_continuous(const GraphFunction& f, const RootBasis& rs) {
  const Eigen::VectorXcd c = root_coefficients(f, rs);
  GraphFunction out = f;
  for (Eigen::Index a = 0; a < c.size(); ++a) out.data() -= c[a] * rs.vectors[a].data();
  return out;
}

DenseSpectrum dense_spectrum(const SparseMatrixC& A, bool vectors) {
  const auto n = static_cast<lapack_int>(A.rows());
  const Eigen::MatrixXcd dense = Eigen::MatrixXcd(A);
  DenseSpectrum out;
  const char jobvr = vectors ? 'V' : 'N';
  if (dense.imag().cwiseAbs().maxCoeff() == 0.0) {
    Eigen::MatrixXd a = dense.real();
    Eigen::VectorXd wr(n), wi(n);
    Eigen::MatrixXd vr(vectors ? n : 1, vectors ? n : 1);
    double vl_dummy = 0.0;
    const lapack_int info = LAPACKE_dgeev(LAPACK_COL_MAJOR, 'N', jobvr, n, a.data(), n, wr.data(),
                                          wi.data(), &vl_dummy, 1, vr.data(), vectors ? n : 1);
    if (info != 0) throw numeric_error("dgeev failed");
    out.values.resize(n);
    for (lapack_int i = 0; i < n; ++i) out.values[i] = cplx(wr[i], wi[i]);
    if (vectors) {
      out.vectors.resize(n, n);
      for (lapack_int j = 0; j < n; ++j) {
        if (wi[j] != 0.0 && j + 1 < n) {
          out.vectors.col(j) = vr.col(j).cast<cplx>() + cplx(0.0, 1.0) * vr.col(j + 1).cast<cplx>();
          out.vectors.col(j + 1) = out.vectors.col(j).conjugate();
          ++j;
        } else {
          out.vectors.col(j) = vr.col(j).cast<cplx>();
        }
      }
    }
  } else {
    Eigen::MatrixXcd a = dense;
    Eigen::VectorXcd w(n);
    Eigen::MatrixXcd vr(vectors ? n : 1, vectors ? n : 1);
    lapack_complex_double vl_dummy{};
    const lapack_int info = LAPACKE_zgeev(
        LAPACK_COL_MAJOR, 'N', jobvr, n, reinterpret_cast<lapack_complex_double*>(a.data()), n,
        reinterpret_cast<lapack_complex_double*>(w.data()), &vl_dummy, 1,
        reinterpret_cast<lapack_complex_double*>(vr.data()), vectors ? n : 1);
    if (info != 0) throw numeric_error("zgeev failed");
    out.values = w;
    if (vectors) out.vectors = vr;
  }
  return out;
}

RootSpace discrete_root_space(const LinearizedOperator& H, double cluster_radius) {
  const SparseMatrixC A = H.op.reduced_matrix();
  const DenseSpectrum spec = dense_spectrum(A, true);
  const double w = H.spectrum_edge();
  RootSpace rs;
  rs.gap_margin = std::numeric_limits<double>::infinity();
  rs.continuum_edge = std::numeric_limits<double>::infinity();
  std::vector<Eigen::Index> cluster_idx;
  for (Eigen::Index i = 0; i < spec.values.size(); ++i) {
    const cplx lam = spec.values[i];
    const Eigen::VectorXcd v = spec.vectors.col(i);
    const double res = (A * v - lam * v).norm() / std::max(v.norm(), 1e-300);
    const bool in_gap = std::abs(lam.real()) < w && std::abs(lam.imag()) < w;
    if (std::abs(lam) < cluster_radius) {
      rs.cluster.push_back({lam, res});
      cluster_idx.push_back(i);
    } else {
      rs.gap_margin = std::min(rs.gap_margin, std::abs(lam));
    }
    if (in_gap) rs.gap_eigenvalues.push_back({lam, res});
    if (!in_gap) rs.continuum_edge = std::min(rs.continuum_edge, std::abs(lam.real()));
  }
  rs.dimension = static_cast<int>(rs.cluster.size());
  const auto n = static_cast<Eigen::Index>(cluster_idx.size());
  rs.pairing_gram.resize(n, n);
  std::vector<GraphFunction> vecs;
  for (auto i : cluster_idx) vecs.push_back(H.op.prolong(spec.vectors.col(i)));
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = 0; b < n; ++b)
      rs.pairing_gram(a, b) = l2_inner(vecs[a], apply_theta3(vecs[b]));
  auto by_modulus = [](const GapEigenvalue& a, const GapEigenvalue& b) {
    return std::abs(a.lambda) < std::abs(b.lambda);
  };
  std::sort(rs.gap_eigenvalues.begin(), rs.gap_eigenvalues.end(), by_modulus);
  std::sort(rs.cluster.begin(), rs.cluster.end(), by_modulus);
  return rs;
}

LinearizedPropagator::LinearizedPropagator(const StarOperator& op, double dt)
    : op_(&op), cn_(op.reduced_matrix(), dt) {}

void LinearizedPropagator::advance(GraphFunction& f, double t) const {
  const int n = static_cast<int>(std::llround(t / cn_.dt()));
  if (std::abs(n * cn_.dt() - t) > 1e-9 * std::max(1.0, t))
    throw numeric_error("advance time is not a multiple of the step");
  Eigen::VectorXcd r = op_->restrict(f);
  for (int i = 0; i < n; ++i) cn_.step(r);
  f = op_->prolong(r);
}

namespace {

double rho2_norm(const GraphFunction& f) {
  const auto rho = weight_profile(f.grid(), 4);
  return std::sqrt(std::max(0.0, l2_inner_weighted(f, f, rho.samples).real()));
}

}  // namespace

std::vector<LinearizedSample> evolve_linearized(const GraphFunction& f0, const StarOperator& op,
                                                double T, double dt, double record_every,
                                                std::vector<GraphFunction>* snapshots) {
  if (!f0.is_spinor()) throw numeric_error("linearized evolution acts on spinors");
  const auto k = kirchhoff_residual(f0);
  if (k.continuity > 1e-8 * std::max(1.0, sup_norm(f0)))
    throw config_error("initial spinor is not continuous at the vertex");
  const LinearizedPropagator prop(op, dt);
  GraphFunction f = f0;
  std::vector<LinearizedSample> out;
  auto record = [&](double t) {
    out.push_back({t, l2_norm(f), rho2_norm(f), sup_norm(f)});
    if (snapshots) snapshots->push_back(f);
  };
  record(0.0);
  const int blocks = static_cast<int>(std::llround(T / record_every));
  for (int b = 1; b <= blocks; ++b) {
    prop.advance(f, record_every);
    record(b * record_every);
  }
  return out;
}

GraphFunction phase_transform(const GraphFunction& f, double rho) {
  if (!f.is_spinor()) throw numeric_error("phase transform acts on spinors");
  GraphFunction g = f;
  for (int e = 0; e < f.grid().n_edges(); ++e) {
    g.channel(e, 0) *= std::polar(1.0, rho);
    g.channel(e, 1) *= std::polar(1.0, -rho);
  }
  return g;
}

ScatteringLimitReport scattering_limit_check(const GraphFunction& f, const LinearizedOperator& H,
                                             std::span<const double> checkpoints,
                                             double extraction_time, double dt,
                                             double absorbing_fraction,
                                             double absorbing_strength) {
  if (checkpoints.size() < 2) throw config_error("scattering check needs two checkpoints");
  const auto& grid = H.grid();
  std::vector<double> alphas(grid.n_edges(), H.alpha);
  const StarOperator J = assemble_J(alphas, grid, absorbing_fraction, absorbing_strength);
  const LinearizedPropagator UH(H.op, dt), UJ(J, dt);

  ScatteringLimitReport rep;
  GraphFunction u = f;
  double t = 0.0;
  std::optional<GraphFunction> prev, at_extraction;
  double t_extraction = 0.0;
  std::vector<double> weighted;
  for (double tc : checkpoints) {
    UH.advance(u, tc - t);
    if (prev) {
      // || h(t_{m+1}) - h(t_m) || = || u(t_{m+1}) - e^{-iJ(t_{m+1}-t_m)} u(t_m) ||
      GraphFunction free_step = *prev;
      UJ.advance(free_step, tc - t);
      rep.increments.push_back(l2_norm(u - free_step));
    }
    if (!at_extraction && tc >= extraction_time - 1e-12) {
      at_extraction = u;
      t_extraction = tc;
    }
    const auto rho = weight_profile(grid, 4);
    weighted.push_back(std::sqrt(std::max(0.0, l2_inner_weighted(u, u, rho.samples).real())));
    rep.times.push_back(tc);
    prev = u;
    t = tc;
  }
  if (!at_extraction) throw config_error("extraction time lies past the last checkpoint");
  GraphFunction pushed = *at_extraction;
  UJ.advance(pushed, t - t_extraction);
  rep.defect = l2_norm(u - pushed);

  // Weighted decay over the second half of the checkpoints.
  const std::size_t n = rep.times.size(), lo = n / 2;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int cnt = 0;
  for (std::size_t i = lo; i < n; ++i) {
    if (rep.times[i] <= 0.0 || weighted[i] <= 0.0) continue;
    const double x = std::log(rep.times[i]), y = std::log(weighted[i]);
    sx += x, sy += y, sxx += x * x, sxy += x * y, ++cnt;
  }
  if (cnt >= 2) rep.weighted_decay_slope = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
  rep.decay_observed = rep.weighted_decay_slope < 0.0;

  if (absorbing_fraction <= 0.0) {
    // f_plus = e^{iJ t_e} u(t_e): backward free flow is stable without absorption.
    StarOperator neg(grid, 2, {-1.0, 1.0});
    for (int e = 0; e < grid.n_edges(); ++e)
      for (int m = 0; m < grid.samples(); ++m) neg.potential(e, m) = -J.potential(e, m);
    GraphFunction fp = *at_extraction;
    if (t_extraction > 0.0) LinearizedPropagator(neg, dt).advance(fp, t_extraction);
    rep.f_plus = std::move(fp);
  }
  return rep;
}

}  // namespace starwave
