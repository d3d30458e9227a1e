#include "starwave/resolvent.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/numeric/odeint.hpp>

#include "starwave/error.hpp"

namespace starwave {

namespace {

constexpr cplx I1(0.0, 1.0);

void check_branch(cplx kappa) {
  if (kappa.real() < -1e-14) throw numeric_error("branch convention violated: Re sqrt < 0");
}

// Full Gauss-Legendre rule on [0, 1].
struct Rule {
  std::vector<double> x, w;
};
const Rule& unit_rule() {
  static const Rule rule = [] {
    using G = boost::math::quadrature::gauss<double, 20>;
    Rule r;
    const auto& a = G::abscissa();
    const auto& wt = G::weights();
    for (std::size_t i = 0; i < a.size(); ++i) {
      for (double sgn : {-1.0, 1.0}) {
        if (a[i] == 0.0 && sgn > 0) continue;
        r.x.push_back(0.5 * (1.0 + sgn * a[i]));
        r.w.push_back(0.5 * wt[i]);
      }
    }
    return r;
  }();
  return rule;
}

// Cubic Lagrange basis on nodes 0, 1, 2, 3 (unit spacing).
double lagrange(int q, double t) {
  double v = 1.0;
  for (int r = 0; r < 4; ++r)
    if (r != q) v *= (t - r) / static_cast<double>(q - r);
  return v;
}

// Particular solution and vertex data for one (edge, component) channel of
// u'' - kappa^2 u = sigma f.
struct Channel {
  std::vector<cplx> p;
  cplx flux_p;    // flux functional of p at the vertex
  cplx hom_flux;  // flux functional of the homogeneous solution (value 1 at 0)
  cplx z;         // lattice root, or e^{-kappa h}
  cplx kappa;
};

Channel lattice_channel(std::span<const cplx> f, double sigma, cplx kappa2, double h,
                        int im_sign) {
  const int M = static_cast<int>(f.size());
  Channel ch;
  ch.z = lattice_root(kappa2, h, im_sign);
  ch.kappa = std::sqrt(kappa2);
  const cplx z = ch.z;
  const cplx C = h / (z - 1.0 / z);
  std::vector<cplx> fwd(M, 0.0), bwd(M, 0.0);
  auto g = [&](int n) { return (n >= 1 && n <= M - 2) ? sigma * f[n] : cplx(0.0); };
  for (int m = 1; m < M; ++m) fwd[m] = z * fwd[m - 1] + g(m);
  for (int m = M - 2; m >= 0; --m) bwd[m] = z * (bwd[m + 1] + g(m + 1));
  ch.p.resize(M);
  for (int m = 0; m < M; ++m) ch.p[m] = h * C * (fwd[m] + bwd[m]);
  ch.flux_p = -3.0 * ch.p[0] + 4.0 * ch.p[1] - ch.p[2];
  ch.hom_flux = -3.0 + 4.0 * z - z * z;
  return ch;
}

Channel continuum_channel(std::span<const cplx> f, double sigma, cplx kappa, double h) {
  const int M = static_cast<int>(f.size());
  Channel ch;
  ch.kappa = kappa;
  ch.z = std::exp(-kappa * h);
  const Rule& rule = unit_rule();
  // Weights per stencil offset o (interval [o, o+1] inside nodes 0..3).
  std::array<std::array<cplx, 4>, 3> wf{}, wb{};
  for (int o = 0; o < 3; ++o)
    for (int q = 0; q < 4; ++q) {
      cplx sf = 0.0, sb = 0.0;
      for (std::size_t i = 0; i < rule.x.size(); ++i) {
        const double t = rule.x[i];
        const double l = lagrange(q, o + t) * rule.w[i] * h;
        sf += std::exp(-kappa * h * (1.0 - t)) * l;
        sb += std::exp(-kappa * h * t) * l;
      }
      wf[o][q] = sf;
      wb[o][q] = sb;
    }
  auto stencil = [&](int n) { return std::clamp(n - 1, 0, M - 4); };
  std::vector<cplx> If(M, 0.0), Ib(M, 0.0);
  for (int n = 0; n + 1 < M; ++n) {
    const int st = stencil(n);
    const int o = n - st;
    cplx lf = 0.0;
    for (int q = 0; q < 4; ++q) lf += wf[o][q] * f[st + q];
    If[n + 1] = ch.z * If[n] + lf;
  }
  for (int n = M - 2; n >= 0; --n) {
    const int st = stencil(n);
    const int o = n - st;
    cplx lb = 0.0;
    for (int q = 0; q < 4; ++q) lb += wb[o][q] * f[st + q];
    Ib[n] = ch.z * Ib[n + 1] + lb;
  }
  const cplx s = -sigma / (2.0 * kappa);
  ch.p.resize(M);
  for (int m = 0; m < M; ++m) ch.p[m] = s * (If[m] + Ib[m]);
  ch.flux_p = kappa * ch.p[0];
  ch.hom_flux = -kappa;
  return ch;
}

// Solves continuity + flux for the homogeneous amplitudes.
Eigen::VectorXcd vertex_amplitudes(const std::vector<Channel>& ch) {
  const int N = static_cast<int>(ch.size());
  Eigen::MatrixXcd A = Eigen::MatrixXcd::Zero(N, N);
  Eigen::VectorXcd rhs(N);
  for (int j = 1; j < N; ++j) {
    A(j - 1, j) = 1.0;
    A(j - 1, 0) = -1.0;
    rhs[j - 1] = ch[0].p[0] - ch[j].p[0];
  }
  cplx flux = 0.0;
  for (int j = 0; j < N; ++j) {
    A(N - 1, j) = ch[j].hom_flux;
    flux += ch[j].flux_p;
  }
  rhs[N - 1] = -flux;
  Eigen::FullPivLU<Eigen::MatrixXcd> lu(A);
  if (!lu.isInvertible()) throw numeric_error("singular vertex system in the free resolvent");
  return lu.solve(rhs);
}

std::vector<double> edge_weights(std::span<const double> alphas) {
  std::vector<double> w;
  for (double a : alphas) w.push_back(a * a / 4.0);
  return w;
}

}  // namespace

SpectralPoint SpectralPoint::on_axis(double k, double w) {
  if (k == 0.0) throw config_error("k = 0 is excluded");
  return {cplx(w + k * k, 0.0), k > 0 ? Side::PlusI0 : Side::MinusI0};
}

cplx branch_sqrt(cplx z, int im_sign) {
  if (z.imag() == 0.0 && z.real() < 0.0) {
    if (im_sign == 0) throw config_error("spectral point on the continuous spectrum needs a side");
    const double r = std::sqrt(-z.real());
    return im_sign > 0 ? cplx(0.0, r) : cplx(0.0, -r);
  }
  const cplx s = std::sqrt(z);
  check_branch(s);
  return s;
}

cplx lattice_root(cplx kappa2, double h, int im_sign) {
  const cplx beta = 2.0 + kappa2 * h * h;
  const cplx disc = std::sqrt(beta * beta - 4.0);
  cplx z = 0.5 * (beta - disc);
  if (std::abs(z) > 1.0) z = 1.0 / z;
  if (std::abs(std::abs(z) - 1.0) < 1e-12) {
    if (im_sign == 0) throw config_error("spectral point on the lattice continuum needs a side");
    // kappa2 + i0*im_sign moves the decaying root to Im z of sign -im_sign.
    if ((im_sign > 0 && z.imag() > 0) || (im_sign < 0 && z.imag() < 0)) z = std::conj(z);
  }
  return z;
}

GraphFunction free_resolvent_apply(const SpectralPoint& pt, const GraphFunction& f,
                                   std::span<const double> alphas, FreeKernel kernel) {
  const StarGrid& grid = f.grid();
  if (f.components() != 2) throw config_error("free resolvent acts on spinors");
  if (static_cast<int>(alphas.size()) != grid.n_edges()) throw config_error("need one alpha per edge");
  const auto w = edge_weights(alphas);
  const int N = grid.n_edges();
  const int s = pt.im_sign();
  GraphFunction u(grid, 2);
  for (int c = 0; c < 2; ++c) {
    const double sigma = c == 0 ? 1.0 : -1.0;
    std::vector<Channel> ch;
    for (int j = 0; j < N; ++j) {
      // First component: kappa^2 = w - lambda (vanishing part -i0*s); second: w + lambda.
      const cplx kappa2 = c == 0 ? w[j] - pt.lambda : w[j] + pt.lambda;
      const int ks = c == 0 ? -s : s;
      const auto seg = f.channel(j, c);
      const std::vector<cplx> fj(seg.begin(), seg.end());
      if (kernel == FreeKernel::Lattice)
        ch.push_back(lattice_channel(fj, sigma, kappa2, grid.spacing(), ks));
      else
        ch.push_back(continuum_channel(fj, sigma, branch_sqrt(kappa2, ks), grid.spacing()));
    }
    const Eigen::VectorXcd a = vertex_amplitudes(ch);
    for (int j = 0; j < N; ++j) {
      cplx hom = 1.0;
      for (int m = 0; m < grid.samples(); ++m) {
        u(j, c, m) = ch[j].p[m] + a[j] * hom;
        hom *= ch[j].z;
      }
    }
  }
  return u;
}

FreeResolventCoefficients free_resolvent_coefficients(const SpectralPoint& pt,
                                                      std::span<const double> alphas) {
  const auto w = edge_weights(alphas);
  const int N = static_cast<int>(w.size());
  const int s = pt.im_sign();
  FreeResolventCoefficients co;
  co.a.resize(N, N);
  co.b.resize(N, N);
  for (int c = 0; c < 2; ++c) {
    std::vector<cplx> kappa(N);
    for (int j = 0; j < N; ++j)
      kappa[j] = c == 0 ? branch_sqrt(w[j] - pt.lambda, -s) : branch_sqrt(w[j] + pt.lambda, s);
    for (int j = 0; j < N; ++j) {
      // Unit source on edge j seen from the vertex: value s_c, flux kappa_j s_c.
      std::vector<Channel> ch(N);
      for (int i = 0; i < N; ++i) {
        const cplx sc = (c == 0 ? -1.0 : 1.0) / (2.0 * kappa[i]);
        ch[i].p = {i == j ? sc : cplx(0.0)};
        ch[i].flux_p = kappa[i] * ch[i].p[0];
        ch[i].hom_flux = -kappa[i];
      }
      const Eigen::VectorXcd a = vertex_amplitudes(ch);
      (c == 0 ? co.a : co.b).col(j) = a;
    }
    (c == 0 ? co.kappa1 : co.kappa2) = kappa;
  }
  return co;
}

cplx free_resolvent_kernel(const FreeResolventCoefficients& co, int comp, int i, int j, double x,
                           double y) {
  const auto& kappa = comp == 0 ? co.kappa1 : co.kappa2;
  const auto& A = comp == 0 ? co.a : co.b;
  cplx v = A(i, j) * std::exp(-kappa[i] * x - kappa[j] * y);
  if (i == j) v += (comp == 0 ? -1.0 : 1.0) / (2.0 * kappa[i]) * std::exp(-kappa[i] * std::abs(x - y));
  return v;
}

StarOperator with_outgoing_closure(const StarOperator& op, const SpectralPoint& pt, double w,
                                   bool transparent_off_axis) {
  StarOperator out = op;
  if (pt.side == Side::Off && !transparent_off_axis) {
    out.set_far_closure({0.0, 0.0});
    return out;
  }
  const double h = op.grid().spacing();
  const int s = pt.im_sign();
  out.set_far_closure({lattice_root(w - pt.lambda, h, -s), lattice_root(w + pt.lambda, h, s)});
  return out;
}

double resolvent_residual(const SpectralPoint& pt, const GraphFunction& u, const GraphFunction& f,
                          const StarOperator& op, double w, bool transparent_off_axis) {
  const StarOperator closed = with_outgoing_closure(op, pt, w, transparent_off_axis);
  const SparseMatrixC A = closed.reduced_matrix();
  const Eigen::VectorXcd ur = closed.restrict(u);
  const Eigen::VectorXcd fr = closed.restrict(f);
  const Eigen::VectorXcd r = pt.lambda * ur - A * ur - fr;
  return r.norm() / fr.norm();
}

GraphFunction kirchhoff_resolvent_direct(const SpectralPoint& pt, const GraphFunction& f,
                                         const LinearizedOperator& H) {
  const StarOperator op = with_outgoing_closure(H.op, pt, H.spectrum_edge());
  try {
    ShiftedSolver solver(op.reduced_matrix(), pt.lambda);
    return op.prolong(solver.solve(op.restrict(f)));
  } catch (const Error&) {
    throw numeric_error("direct resolvent solve failed at lambda = (" +
                        std::to_string(pt.lambda.real()) + ", " +
                        std::to_string(pt.lambda.imag()) + ")");
  }
}

double pole_order_probe(const LinearizedOperator& H, const GraphFunction& f,
                        std::span<const double> distances) {
  std::vector<double> lx, ly;
  for (double d : distances) {
    const GraphFunction u = kirchhoff_resolvent_direct(SpectralPoint::off_axis(d), f, H);
    lx.push_back(std::log(d));
    ly.push_back(std::log(l2_norm(u)));
  }
  const double n = static_cast<double>(lx.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sx += lx[i];
    sy += ly[i];
    sxx += lx[i] * lx[i];
    sxy += lx[i] * ly[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

BornResult born_series_apply(const SpectralPoint& pt, const GraphFunction& f,
                             const LinearizedOperator& H, int n_max, FreeKernel kernel) {
  if (n_max < 0) throw config_error("n_max must be non-negative");
  const StarGrid& grid = H.grid();
  const std::vector<double> alphas(grid.n_edges(), H.alpha);
  const double w = H.spectrum_edge();
  const Eigen::Matrix2cd J = w * PauliLikeMatrices::theta3();

  BornResult out{free_resolvent_apply(pt, f, alphas, kernel), {}, 0.0};
  GraphFunction term = out.approx;
  out.term_norms.push_back(l2_norm(term));
  for (int n = 1; n <= n_max; ++n) {
    GraphFunction vt(grid, 2);
    for (int e = 0; e < grid.n_edges(); ++e)
      for (int m = 0; m < grid.samples(); ++m) {
        const Eigen::Matrix2cd V = H.op.potential(e, m) - J;
        const Eigen::Vector2cd t(term(e, 0, m), term(e, 1, m));
        const Eigen::Vector2cd r = V * t;
        vt(e, 0, m) = r[0];
        vt(e, 1, m) = r[1];
      }
    term = free_resolvent_apply(pt, vt, alphas, kernel);
    out.approx += term;
    out.term_norms.push_back(l2_norm(term));
    const double ratio = out.term_norms[n] / out.term_norms[n - 1];
    if (n >= 2) out.ratio = std::max(out.ratio, ratio);
    if (out.term_norms[0] == 0.0) break;
  }
  if (out.ratio >= 1.0)
    throw numeric_error("Born series diverges at lambda = " + std::to_string(pt.lambda.real()) +
                        " (term ratio " + std::to_string(out.ratio) + ")");
  return out;
}

// ---------------------------------------------------------------------------
// Jost solutions

namespace {

using State = std::vector<double>;

struct SpinorSystem {
  const Nonlinearity* nl;
  double w, k2, coupling;
  int nsol;

  // Layout: nsol solutions as (u1, u2, u1', u2'), then (phi, phi').
  void operator()(const State& y, State& dy, double) const {
    const double phi = y[4 * nsol];
    const double p2 = phi * phi;
    const double a = coupling * (nl->F(p2) + nl->F_prime(p2) * p2);
    const double b = coupling * nl->F_prime(p2) * p2;
    for (int s = 0; s < nsol; ++s) {
      const double* u = &y[4 * s];
      double* d = &dy[4 * s];
      d[0] = u[2];
      d[1] = u[3];
      d[2] = (a - k2) * u[0] + b * u[1];
      d[3] = (2.0 * w + k2 + a) * u[1] + b * u[0];
    }
    dy[4 * nsol] = y[4 * nsol + 1];
    dy[4 * nsol + 1] = (w + nl->F(p2)) * phi;
  }
};

// Integrates and returns the state at each requested abscissa (in order).
std::vector<State> integrate_to(const SpinorSystem& sys, State y0, const std::vector<double>& xs,
                                double tol) {
  namespace odeint = boost::numeric::odeint;
  std::vector<State> out;
  out.reserve(xs.size());
  if (xs.size() == 1) return {y0};
  const double dx = (xs[1] - xs[0]) / 4.0;
  auto stepper = odeint::make_dense_output(tol, tol, odeint::runge_kutta_dopri5<State>());
  odeint::integrate_times(stepper, sys, y0, xs.begin(), xs.end(), dx,
                          [&](const State& y, double) { out.push_back(y); });
  return out;
}

double profile_at(const Nonlinearity& nl, double alpha, double x) {
  if (nl.is_zero()) return 0.0;
  const std::vector<double> xs{x};
  return profile_values(nl, alpha, xs)[0];
}

double profile_slope(const Nonlinearity& nl, double alpha, double phi) {
  if (nl.is_zero()) return 0.0;
  return -std::sqrt(std::max(0.0, -2.0 * potential_U(nl, phi, alpha)));
}

}  // namespace

Eigen::Matrix2cd JostSolutions::F1(int m) const {
  Eigen::Matrix2cd F;
  F.col(0) = Yp[m];
  F.col(1) = Y1[m];
  return F;
}

Eigen::Matrix2cd JostSolutions::F1_prime(int m) const {
  Eigen::Matrix2cd F;
  F.col(0) = dYp[m];
  F.col(1) = dY1[m];
  return F;
}

JostSolutions jost_solve(double k, double alpha, const Nonlinearity& nl, const StarGrid& grid,
                         JostOptions opts) {
  if (k == 0.0) throw config_error("k = 0 is excluded");
  const double w = alpha * alpha / 4.0;
  JostSolutions J{k, alpha, w, std::sqrt(2.0 * w + k * k), grid, {}, {}, {}, {}, {}, {}, {}, {}, {}, {}, {}};
  const int M = grid.samples();
  const int ms = std::max(2, static_cast<int>(opts.start_fraction * (M - 1)));
  const double xs = grid.x(ms);

  const SpinorSystem sys{&nl, J.w, k * k, opts.coupling, 3};
  // Real solutions: cos(kx) e1, sin(kx) e1, e^{-mu x} e2.
  State y0(14, 0.0);
  y0[0] = std::cos(k * xs);
  y0[2] = -k * std::sin(k * xs);
  y0[4] = std::sin(k * xs);
  y0[6] = k * std::cos(k * xs);
  y0[9] = std::exp(-J.mu * xs);
  y0[11] = -J.mu * std::exp(-J.mu * xs);
  y0[12] = profile_at(nl, alpha, xs);
  y0[13] = profile_slope(nl, alpha, y0[12]);

  std::vector<double> times;
  for (int m = ms; m >= 0; --m) times.push_back(grid.x(m));
  const auto states = integrate_to(sys, y0, times, opts.tolerance);
  if (static_cast<int>(states.size()) != ms + 1) throw numeric_error("Jost integration incomplete");

  J.Yp.resize(M);
  J.dYp.resize(M);
  J.Ym.resize(M);
  J.dYm.resize(M);
  J.Y1.resize(M);
  J.dY1.resize(M);
  for (int m = 0; m < M; ++m) {
    Eigen::Vector2cd c, dc, s, ds, d, dd;
    if (m <= ms) {
      const State& y = states[ms - m];
      c << y[0], y[1];
      dc << y[2], y[3];
      s << y[4], y[5];
      ds << y[6], y[7];
      d << y[8], y[9];
      dd << y[10], y[11];
    } else {
      const double x = grid.x(m);
      c << std::cos(k * x), 0.0;
      dc << -k * std::sin(k * x), 0.0;
      s << std::sin(k * x), 0.0;
      ds << k * std::cos(k * x), 0.0;
      d << 0.0, std::exp(-J.mu * x);
      dd << 0.0, -J.mu * std::exp(-J.mu * x);
    }
    J.Yp[m] = c + I1 * s;
    J.dYp[m] = dc + I1 * ds;
    J.Ym[m] = c - I1 * s;
    J.dYm[m] = dc - I1 * ds;
    J.Y1[m] = d;
    J.dY1[m] = dd;
  }

  // C^1 matching of the even continuation at 0, unknowns (s, c, r, a3).
  Eigen::Matrix4cd A;
  Eigen::Vector4cd rhs;
  A.block<2, 1>(0, 0) = J.Yp[0];
  A.block<2, 1>(0, 1) = J.Y1[0];
  A.block<2, 1>(0, 2) = -J.Yp[0];
  A.block<2, 1>(0, 3) = -J.Y1[0];
  A.block<2, 1>(2, 0) = J.dYp[0];
  A.block<2, 1>(2, 1) = J.dY1[0];
  A.block<2, 1>(2, 2) = J.dYp[0];
  A.block<2, 1>(2, 3) = J.dY1[0];
  rhs.head<2>() = J.Ym[0];
  rhs.tail<2>() = -J.dYm[0];
  Eigen::FullPivLU<Eigen::Matrix4cd> lu(A);
  if (!lu.isInvertible()) throw numeric_error("singular Jost matching system");
  const Eigen::Vector4cd sol = lu.solve(rhs);
  J.s = sol[0];
  J.c = sol[1];
  J.r = sol[2];
  J.a3 = sol[3];
  if (std::abs(J.s) < 1e-8) throw numeric_error("transmission coefficient vanishes");
  J.h = J.c / J.s;
  return J;
}

GreenKernelData green_kernel_data(const JostSolutions& jost, const Nonlinearity& nl, double y_max,
                                  double coupling) {
  GreenKernelData g;
  g.jost = &jost;
  const StarGrid& grid = jost.grid;
  g.m_max = std::min(grid.samples() - 1,
                     static_cast<int>(std::ceil(y_max / grid.spacing())));
  // G2(x) = F1(-x): initial data (F1(0), -F1'(0)); four real solutions.
  const SpinorSystem sys{&nl, jost.w, jost.k * jost.k, coupling, 4};
  const Eigen::Matrix2cd F0 = jost.F1(0), dF0 = jost.F1_prime(0);
  State y0(18, 0.0);
  for (int col = 0; col < 2; ++col)
    for (int part = 0; part < 2; ++part) {
      const int s = 2 * col + part;
      auto pick = [&](cplx v) { return part == 0 ? v.real() : v.imag(); };
      y0[4 * s + 0] = pick(F0(0, col));
      y0[4 * s + 1] = pick(F0(1, col));
      y0[4 * s + 2] = -pick(dF0(0, col));
      y0[4 * s + 3] = -pick(dF0(1, col));
    }
  y0[16] = nl.is_zero() ? 0.0 : smallest_positive_root(nl, jost.alpha).phi0;
  y0[17] = 0.0;
  std::vector<double> times;
  for (int m = 0; m <= g.m_max; ++m) times.push_back(grid.x(m));
  const auto states = integrate_to(sys, y0, times, 1e-14);
  g.G2.resize(g.m_max + 1);
  g.dG2.resize(g.m_max + 1);
  for (int m = 0; m <= g.m_max; ++m) {
    const State& y = states[m];
    for (int col = 0; col < 2; ++col) {
      const int re = 4 * (2 * col), im = 4 * (2 * col + 1);
      g.G2[m](0, col) = cplx(y[re + 0], y[im + 0]);
      g.G2[m](1, col) = cplx(y[re + 1], y[im + 1]);
      g.dG2[m](0, col) = cplx(y[re + 2], y[im + 2]);
      g.dG2[m](1, col) = cplx(y[re + 3], y[im + 3]);
    }
  }
  g.X = g.G2[0].transpose() * dF0 - g.dG2[0].transpose() * F0;
  Eigen::FullPivLU<Eigen::Matrix2cd> lu(g.X);
  if (!lu.isInvertible()) throw numeric_error("singular connection matrix in the Green kernel");
  g.X_inv = lu.inverse();
  return g;
}

Eigen::Matrix2cd green_kernel(int mx, int my, const GreenKernelData& g) {
  const Eigen::Matrix2cd t3 = PauliLikeMatrices::theta3();
  const JostSolutions& J = *g.jost;
  if (my <= mx) {
    if (my > g.m_max) throw config_error("green_kernel: y outside the tabulated range");
    return -J.F1(mx) * g.X_inv * g.G2[my].transpose() * t3;
  }
  if (mx > g.m_max) throw config_error("green_kernel: x outside the tabulated range");
  return -g.G2[mx] * g.X_inv.transpose() * J.F1(my).transpose() * t3;
}

namespace {

Eigen::MatrixXcd vertex_matrix(const JostSolutions& J, int N) {
  Eigen::Matrix2cd B0, dB0;
  B0.col(0) = J.scatter_F(0);
  B0.col(1) = J.Y1[0];
  dB0.col(0) = J.scatter_F_prime(0);
  dB0.col(1) = J.dY1[0];
  Eigen::MatrixXcd A = Eigen::MatrixXcd::Zero(2 * N, 2 * N);
  for (int j = 1; j < N; ++j) {
    A.block(2 * (j - 1), 2 * j, 2, 2) = B0;
    A.block(2 * (j - 1), 0, 2, 2) = -B0;
  }
  for (int j = 0; j < N; ++j) A.block(2 * (N - 1), 2 * j, 2, 2) = dB0;
  return A;
}

}  // namespace

cplx scattering_determinant(const JostSolutions& jost, int n_edges) {
  return vertex_matrix(jost, n_edges).determinant();
}

GraphFunction kirchhoff_resolvent_scattering(const GraphFunction& f, const JostSolutions& J,
                                             const Nonlinearity& nl,
                                             KirchhoffResolventSolve* info) {
  const StarGrid& grid = f.grid();
  if (!(grid == J.grid) || f.components() != 2) throw config_error("shape mismatch");
  const int N = grid.n_edges();
  const int M = grid.samples();
  const double h = grid.spacing();
  int m_f = 0;
  for (int e = 0; e < N; ++e)
    for (int c = 0; c < 2; ++c)
      for (int m = 0; m < M; ++m)
        if (f(e, c, m) != cplx(0.0)) m_f = std::max(m_f, m);
  const GreenKernelData g = green_kernel_data(J, nl, grid.x(std::min(M - 1, m_f + 1)));
  const Eigen::Matrix2cd XiT = g.X_inv.transpose();

  // Particular part of (lambda - H)^{-1} = -(H - E)^{-1}:
  //   p(x) = F1(x) X^{-1} I1(x) + G2(x) X^{-T} I2(x),
  //   I1 = int_0^x G2^T theta3 f,  I2 = int_x^L F1^T theta3 f  (trapezoid).
  std::vector<std::vector<Eigen::Vector2cd>> p(N, std::vector<Eigen::Vector2cd>(M));
  std::vector<Eigen::Vector2cd> I2_0(N);
  for (int e = 0; e < N; ++e) {
    auto fv = [&](int m) { return Eigen::Vector2cd(f(e, 0, m), -f(e, 1, m)); };
    std::vector<Eigen::Vector2cd> I1(M, Eigen::Vector2cd::Zero()), I2(M, Eigen::Vector2cd::Zero());
    for (int m = 1; m <= g.m_max; ++m)
      I1[m] = I1[m - 1] + 0.5 * h * (g.G2[m - 1].transpose() * fv(m - 1) + g.G2[m].transpose() * fv(m));
    for (int m = g.m_max + 1; m < M; ++m) I1[m] = I1[g.m_max];
    for (int m = g.m_max - 1; m >= 0; --m)
      I2[m] = I2[m + 1] + 0.5 * h * (J.F1(m).transpose() * fv(m) + J.F1(m + 1).transpose() * fv(m + 1));
    for (int m = 0; m < M; ++m) {
      p[e][m] = J.F1(m) * g.X_inv * I1[m];
      if (m <= g.m_max) p[e][m] += g.G2[m] * XiT * I2[m];
    }
    I2_0[e] = I2[0];
  }

  // Vertex values and derivatives of p (G2(0) = F1(0), G2'(0) = -F1'(0)).
  const Eigen::MatrixXcd A = vertex_matrix(J, N);
  Eigen::VectorXcd Y(2 * N);
  Eigen::Vector2cd flux = Eigen::Vector2cd::Zero();
  const Eigen::Vector2cd p0_first = J.F1(0) * XiT * I2_0[0];
  for (int j = 1; j < N; ++j) Y.segment<2>(2 * (j - 1)) = p0_first - J.F1(0) * XiT * I2_0[j];
  for (int j = 0; j < N; ++j) flux += J.F1_prime(0) * XiT * I2_0[j];
  Y.segment<2>(2 * (N - 1)) = flux;

  const cplx W = A.determinant();
  if (std::abs(W) < 1e-10) throw hypothesis_error("scattering vertex system is near-singular (resonance)");
  const Eigen::VectorXcd coef = A.fullPivLu().solve(Y);

  GraphFunction u(grid, 2);
  for (int e = 0; e < N; ++e)
    for (int m = 0; m < M; ++m) {
      const Eigen::Vector2cd v = coef[2 * e] * J.scatter_F(m) + coef[2 * e + 1] * J.Y1[m] + p[e][m];
      u(e, 0, m) = v[0];
      u(e, 1, m) = v[1];
    }
  if (info) *info = {A, Y, coef, W};
  return u;
}

SpectralJump spectral_jump(int mx, int my, const JostSolutions& plus, const JostSolutions& minus,
                           const GreenKernelData& g_plus, const GreenKernelData& g_minus) {
  const double k = std::abs(plus.k);
  if (k < 1e-3) throw config_error("spectral jump refused for |k| < 1e-3");
  if (!(plus.k > 0 && minus.k < 0)) throw config_error("spectral jump needs Jost data at +k and -k");
  SpectralJump out;
  out.kernel_side = green_kernel(mx, my, g_plus) - green_kernel(mx, my, g_minus);
  const Eigen::Vector2cd Fx = plus.scatter_F(mx), Fy = plus.scatter_F(my);
  const Eigen::Vector2cd Gx = plus.scatter_G(mx), Gy = plus.scatter_G(my);
  const Eigen::Matrix2cd LL = Fx * Fy.adjoint() + Gx * Gy.adjoint();
  out.jost_side = -1.0 / (2.0 * I1 * k) * LL * PauliLikeMatrices::theta3();
  out.difference = (out.kernel_side - out.jost_side).cwiseAbs().maxCoeff();
  return out;
}

HypothesisCReport hypothesis_C_check(double alpha, const Nonlinearity& nl, const StarGrid& grid,
                                     double k_proxy, int sweep_points, double coupling) {
  HypothesisCReport rep;
  rep.k_proxy = k_proxy;
  JostOptions opts;
  opts.coupling = coupling;
  auto dets = [&](double k) {
    const JostSolutions J = jost_solve(k, alpha, nl, grid, opts);
    Eigen::Matrix2cd V, D;
    V.col(0) = J.scatter_F(0);
    V.col(1) = J.scatter_F(0).conjugate();
    D.col(0) = J.scatter_F_prime(0);
    D.col(1) = J.scatter_F_prime(0).conjugate();
    Eigen::Matrix2cd Vo, Do;
    Vo.col(0) = J.scatter_F(0);
    Vo.col(1) = J.Y1[0];
    Do.col(0) = J.scatter_F_prime(0);
    Do.col(1) = J.dY1[0];
    return std::array{V.determinant(), D.determinant(), Vo.determinant(), Do.determinant()};
  };
  // Linear extrapolation to k = 0 from k and 2k.
  const auto a = dets(k_proxy);
  const auto b = dets(2.0 * k_proxy);
  rep.det_values = 2.0 * a[0] - b[0];
  rep.det_derivatives = 2.0 * a[1] - b[1];
  rep.det_outgoing_values = 2.0 * a[2] - b[2];
  rep.det_outgoing_derivatives = 2.0 * a[3] - b[3];
  rep.pass = std::abs(rep.det_values) > rep.threshold && std::abs(rep.det_derivatives) > rep.threshold;
  rep.min_W = std::numeric_limits<double>::infinity();
  for (int i = 1; i <= sweep_points; ++i) {
    const double k = 2.0 * i / sweep_points;
    const double W = std::abs(scattering_determinant(jost_solve(k, alpha, nl, grid, opts), grid.n_edges()));
    if (W < rep.min_W) {
      rep.min_W = W;
      rep.argmin_W = k;
    }
  }
  return rep;
}

double smooth_window(double x, double a, double b) {
  if (x <= a) return 0.0;
  if (x >= b) return 1.0;
  const double t = (x - a) / (b - a);
  return t * t * (3.0 - 2.0 * t);
}

SpectralFilter::SpectralFilter(const LinearizedOperator& H, double cluster_radius)
    : H_(&H), radius_(cluster_radius) {
  if (H.op.reduced_size() > 6000) throw config_error("spectral filter limited to 6000 unknowns");
  DenseSpectrum sp = dense_spectrum(H.op.reduced_matrix(), true);
  values_ = std::move(sp.values);
  vectors_ = std::move(sp.vectors);
  lu_.compute(vectors_);
}

GraphFunction SpectralFilter::apply(Window window, double lambda0, const GraphFunction& f) const {
  Eigen::VectorXcd c = lu_.solve(H_->op.restrict(f));
  for (Eigen::Index i = 0; i < values_.size(); ++i) {
    const bool root = std::abs(values_[i]) < radius_;
    const double chi = smooth_window(std::abs(values_[i].real()), lambda0, 2.0 * lambda0);
    double weight = 0.0;
    if (window == Window::Root) weight = root ? 1.0 : 0.0;
    else if (!root) weight = window == Window::High ? chi : 1.0 - chi;
    c[i] *= weight;
  }
  return H_->op.prolong(vectors_ * c);
}

GraphFunction SpectralFilter::propagate(const GraphFunction& f, double t) const {
  Eigen::VectorXcd c = lu_.solve(H_->op.restrict(f));
  for (Eigen::Index i = 0; i < values_.size(); ++i) c[i] *= std::exp(-I1 * values_[i] * t);
  return H_->op.prolong(vectors_ * c);
}

}  // namespace starwave
