#include "starwave/modulation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "starwave/error.hpp"

namespace starwave {

namespace {

constexpr cplx I{0.0, 1.0};

double edge_dot(const Eigen::VectorXd& w, std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t m = 0; m < a.size(); ++m) s += w[static_cast<Eigen::Index>(m)] * a[m] * b[m];
  return s;
}

GraphFunction scalar_from_edge(const std::vector<double>& v, const StarGrid& grid) {
  GraphFunction out(grid, 1);
  for (int e = 0; e < grid.n_edges(); ++e)
    for (int m = 0; m < grid.samples(); ++m) out(e, 0, m) = v[static_cast<std::size_t>(m)];
  return out;
}

// Centered differences on a nonuniform series, one-sided at the ends.
std::vector<double> series_derivative(const std::vector<double>& t, const std::vector<double>& y) {
  const std::size_t n = t.size();
  std::vector<double> d(n, 0.0);
  if (n < 2) return d;
  d[0] = (y[1] - y[0]) / (t[1] - t[0]);
  d[n - 1] = (y[n - 1] - y[n - 2]) / (t[n - 1] - t[n - 2]);
  for (std::size_t i = 1; i + 1 < n; ++i) d[i] = (y[i + 1] - y[i - 1]) / (t[i + 1] - t[i - 1]);
  return d;
}

}  // namespace

ProfileJet profile_jet(const Nonlinearity& nl, double alpha, const StarGrid& grid,
                       double rel_step) {
  const double d = rel_step * alpha;
  ProfileJet jet{alpha, discrete_profile(nl, alpha, grid).samples, {}, {}};
  const auto up = discrete_profile(nl, alpha + d, grid).samples;
  const auto dn = discrete_profile(nl, alpha - d, grid).samples;
  const std::size_t M = jet.phi.size();
  jet.phi_a.resize(M);
  jet.phi_aa.resize(M);
  for (std::size_t m = 0; m < M; ++m) {
    jet.phi_a[m] = (up[m] - dn[m]) / (2.0 * d);
    jet.phi_aa[m] = (up[m] - 2.0 * jet.phi[m] + dn[m]) / (d * d);
  }
  return jet;
}

GraphFunction modulated_soliton(double beta, const ProfileJet& jet, const StarGrid& grid) {
  GraphFunction w = scalar_from_edge(jet.phi, grid);
  w *= std::exp(-I * beta);
  return w;
}

DecomposeResult decompose(const GraphFunction& u, const SolitonParams& guess,
                          const Nonlinearity& nl, double tol, int max_iter) {
  if (u.is_spinor()) throw config_error("decompose expects a scalar function");
  if (guess.b != 0.0 || guess.v != 0.0)
    throw config_error("decompose works with b = v = 0");
  const StarGrid& grid = u.grid();
  const Eigen::VectorXd wts = trapezoid_weights(grid);
  const int N = grid.n_edges(), M = grid.samples();

  double beta = guess.beta, alpha = guess.alpha;
  DecomposeResult res{SolitonParams::at_rest(alpha, beta), GraphFunction(grid, 1), 0.0, 0, {}, {}};
  std::vector<double> re_v(static_cast<std::size_t>(M)), im_v(static_cast<std::size_t>(M));

  for (int it = 0; it <= max_iter; ++it) {
    if (!(alpha > 0.0)) throw numeric_error("decompose: alpha left the admissible range");
    ProfileJet jet = profile_jet(nl, alpha, grid);
    double R1 = 0, R2 = 0;
    Eigen::Matrix2d Jm = Eigen::Matrix2d::Zero();
    const cplx rot = std::exp(I * beta);
    for (int e = 0; e < N; ++e) {
      for (int m = 0; m < M; ++m) {
        const cplx v = rot * u(e, 0, m);
        re_v[static_cast<std::size_t>(m)] = v.real();
        im_v[static_cast<std::size_t>(m)] = v.imag();
      }
      std::vector<double> re_chi(re_v);
      for (int m = 0; m < M; ++m) re_chi[static_cast<std::size_t>(m)] -= jet.phi[static_cast<std::size_t>(m)];
      R1 += edge_dot(wts, jet.phi, re_chi);
      R2 += edge_dot(wts, jet.phi_a, im_v);
      Jm(0, 0) -= edge_dot(wts, jet.phi, im_v);
      Jm(0, 1) += edge_dot(wts, jet.phi_a, re_chi) - edge_dot(wts, jet.phi, jet.phi_a);
      Jm(1, 0) += edge_dot(wts, jet.phi_a, re_v);
      Jm(1, 1) += edge_dot(wts, jet.phi_aa, im_v);
    }
    res.residual = std::max(std::abs(R1), std::abs(R2));
    res.jacobian = Jm;
    res.iterations = it;
    if (res.residual < tol) {
      res.sigma = SolitonParams::at_rest(alpha, beta);
      res.chi = u - modulated_soliton(beta, jet, grid);
      res.jet = std::move(jet);
      return res;
    }
    const double det = Jm.determinant();
    if (std::abs(det) < 1e-14 * (1.0 + Jm.squaredNorm()))
      throw hypothesis_error("decompose: singular Jacobian (d/dalpha ||phi||^2 vanishes)");
    const Eigen::Vector2d step = Jm.partialPivLu().solve(Eigen::Vector2d(R1, R2));
    beta -= step[0];
    alpha -= step[1];
  }
  throw numeric_error("decompose: Newton did not converge in " + std::to_string(max_iter) +
                      " iterations (residual " + std::to_string(res.residual) + ")");
}

DiscreteSplit split_discrete_continuous(const GraphFunction& g, const ProfileJet& jet) {
  if (!g.is_spinor()) throw config_error("split expects a spinor function");
  const StarGrid& grid = g.grid();
  GraphFunction xi1(grid, 2), xi2(grid, 2);
  for (int e = 0; e < grid.n_edges(); ++e)
    for (int m = 0; m < grid.samples(); ++m) {
      const auto k = static_cast<std::size_t>(m);
      xi1(e, 0, m) = -I * jet.phi[k];
      xi1(e, 1, m) = I * jet.phi[k];
      xi2(e, 0, m) = jet.phi_a[k];
      xi2(e, 1, m) = jet.phi_a[k];
    }
  RootBasis rs{{xi1, xi2}, Eigen::MatrixXcd(2, 2), 2};
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      rs.gram(a, b) = l2_inner(rs.vectors[static_cast<std::size_t>(a)],
                               apply_theta3(rs.vectors[static_cast<std::size_t>(b)]));
  const Eigen::VectorXcd c = root_coefficients(g, rs);
  DiscreteSplit out{c[0], c[1], g};
  out.h.data() -= c[0] * xi1.data() + c[1] * xi2.data();
  return out;
}

ForcingTerms forcing_terms_D(const GraphFunction& g, const SolitonParams& sigma,
                             const SolitonParams& sigma1, const ModulationRates& rates,
                             const Nonlinearity& nl) {
  if (g.is_spinor()) throw config_error("forcing terms act on the first component");
  if (sigma.b != 0.0 || sigma.v != 0.0 || sigma1.b != 0.0 || sigma1.v != 0.0)
    throw config_error("forcing terms assume b = v = 0");
  const StarGrid& grid = g.grid();
  const ProfileJet jet = profile_jet(nl, sigma.alpha, grid);
  const auto phi1 = sigma1.alpha == sigma.alpha ? jet.phi
                                                 : discrete_profile(nl, sigma1.alpha, grid).samples;
  const double Omega = sigma.beta - sigma1.beta;
  const cplx e1 = std::exp(-I * Omega), e2 = std::exp(-2.0 * I * Omega);

  ForcingTerms D{GraphFunction(grid, 1), GraphFunction(grid, 1), GraphFunction(grid, 1),
                 GraphFunction(grid, 1), GraphFunction(grid, 1)};
  for (int e = 0; e < grid.n_edges(); ++e)
    for (int m = 0; m < grid.samples(); ++m) {
      const auto k = static_cast<std::size_t>(m);
      const double p = jet.phi[k], p2 = p * p, q2 = phi1[k] * phi1[k];
      const cplx gv = g(e, 0, m), gb = std::conj(gv);
      const double a = nl.F(p2) + nl.F_prime(p2) * p2, b = nl.F_prime(p2) * p2;
      const double a1 = nl.F(q2) + nl.F_prime(q2) * q2, b1 = nl.F_prime(q2) * q2;

      D.D0(e, 0, m) = -e1 * (rates.gamma_prime * p + (2.0 * I / sigma.alpha) * rates.omega_prime *
                                                        jet.phi_a[k]);
      D.D1(e, 0, m) = b * (e2 - 1.0) * gb;
      D.D2(e, 0, m) = (a - a1) * gv;
      D.D3(e, 0, m) = (b - b1) * gb;
      const cplx chi = std::conj(e1) * gv, z = p + chi;
      const cplx full = nl.F(std::norm(z)) * z - nl.F(p2) * p - a * chi - b * std::conj(chi);
      D.D4(e, 0, m) = e1 * full;
    }
  return D;
}

DiagnosticsM diagnostics(double t, double alpha, double alpha0, const DiscreteSplit& split,
                         const GraphFunction& g, const DiagnosticsM& previous) {
  DiagnosticsM d = previous;
  d.M0 = std::abs(alpha * alpha - alpha0 * alpha0);
  d.M1 = std::sqrt(std::norm(split.k1) + std::norm(split.k2));
  const WeightProfile rho4 = weight_profile(g.grid(), 4);
  d.M2 = std::sqrt(std::max(0.0, l2_inner_weighted(split.h, split.h, rho4.samples).real()));
  d.M3 = sup_norm(g);
  const double w32 = std::pow(1.0 + t, 1.5), w12 = std::sqrt(1.0 + t);
  d.sup0 = std::max(previous.sup0, d.M0);
  d.sup1 = std::max(previous.sup1, w32 * d.M1);
  d.sup2 = std::max(previous.sup2, w32 * d.M2);
  d.sup3 = std::max(previous.sup3, w12 * d.M3);
  return d;
}

double stepper_phase_bias(double alpha, const EvolutionConfig& cfg, const StarGrid& grid) {
  EvolutionConfig c = cfg;
  c.T = 1.0;
  c.record_stride = std::numeric_limits<int>::max();
  c.snapshot_stride = 0;
  const ProfileJet jet = profile_jet(cfg.nonlinearity, alpha, grid);
  const TrajectoryRecord rec = evolve(modulated_soliton(0.0, jet, grid), c);
  const SolitonParams s = SolitonParams::at_rest(alpha);
  const DecomposeResult d =
      decompose(*rec.final_state, SolitonParams::at_rest(alpha, s.omega), cfg.nonlinearity);
  return d.sigma.beta - s.omega;
}

ModulationTrack track_modulation(const GraphFunction& u0, const EvolutionConfig& cfg,
                                 const ModulationOptions& opts) {
  struct Raw {
    double t;
    DecomposeResult dec;
  };
  std::vector<Raw> raw;
  std::vector<GraphFunction> snaps;
  SolitonParams guess = opts.guess;
  double last_t = 0.0;
  std::string failure;

  Observer obs = [&](double t, const GraphFunction& u) {
    if (!failure.empty()) return;
    guess.beta += guess.omega * (t - last_t);
    try {
      DecomposeResult d = decompose(u, guess, cfg.nonlinearity);
      guess = d.sigma;
      last_t = t;
      raw.push_back({t, std::move(d)});
      if (opts.keep_snapshots) snaps.push_back(u);
    } catch (const std::exception& ex) {
      failure = ex.what();
    }
  };
  TrajectoryRecord rec = evolve(u0, cfg, {obs});
  if (raw.empty()) throw numeric_error("track_modulation: first decomposition failed: " + failure);

  ModulationTrack track{{}, {}, {}, {}, 0.0, rec.final_state ? *rec.final_state : u0};
  track.snapshots = std::move(snaps);

  const std::size_t n = raw.size();
  std::vector<double> ts(n), beta(n), omega(n), gamma(n);
  for (std::size_t i = 0; i < n; ++i) {
    ts[i] = raw[i].t;
    beta[i] = raw[i].dec.sigma.beta;
    omega[i] = raw[i].dec.sigma.omega;
  }
  if (opts.calibrate_phase_rate && cfg.dt > 0.0) {
    track.phase_bias = stepper_phase_bias(raw.front().dec.sigma.alpha, cfg, u0.grid());
    for (auto& w : omega) w += track.phase_bias;
  }
  double integral = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0) integral += 0.5 * (omega[i] + omega[i - 1]) * (ts[i] - ts[i - 1]);
    gamma[i] = beta[i] - integral;
  }
  const auto dgamma = series_derivative(ts, gamma);
  const auto domega = series_derivative(ts, omega);
  // Reference soliton: beta1(t) = beta1(0) + (omega1 + bias) t.
  const Raw& ref = opts.reference == ReferenceChoice::FinalState ? raw.back() : raw.front();
  SolitonParams s1 = SolitonParams::at_rest(ref.dec.sigma.alpha);
  s1.beta = ref.dec.sigma.beta - (s1.omega + track.phase_bias) * ref.t;
  track.sigma1 = s1;

  DiagnosticsM running;
  for (std::size_t i = 0; i < n; ++i) {
    const DecomposeResult& d = raw[i].dec;
    const double beta1 = s1.beta + (s1.omega + track.phase_bias) * ts[i];
    GraphFunction g = d.chi;
    g *= std::exp(I * beta1);
    const DiscreteSplit split = split_discrete_continuous(complexify(g), d.jet);
    running = diagnostics(ts[i], d.sigma.alpha, opts.alpha0, split, g, running);

    ModulationState st;
    st.t = ts[i];
    st.sigma = d.sigma;
    st.gamma = gamma[i];
    st.gamma_prime = dgamma[i];
    st.omega_prime = domega[i];
    st.k1 = split.k1;
    st.k2 = split.k2;
    st.ortho_residual = d.residual;
    st.M = running;
    track.states.push_back(st);
    if (opts.keep_snapshots) track.remainders.push_back(std::move(g));
  }
  return track;
}

std::string modulation_csv(const ModulationTrack& track) {
  std::ostringstream os;
  os.precision(12);
  os << "t,beta,omega,alpha,gamma,k1_re,k1_im,k2_re,k2_im,M0,M1,M2,M3,sup1,sup2,sup3,"
        "ortho_residual\n";
  for (const auto& s : track.states)
    os << s.t << ',' << s.sigma.beta << ',' << s.sigma.omega << ',' << s.sigma.alpha << ','
       << s.gamma << ',' << s.k1.real() << ',' << s.k1.imag() << ',' << s.k2.real() << ','
       << s.k2.imag() << ',' << s.M.M0 << ',' << s.M.M1 << ',' << s.M.M2 << ',' << s.M.M3 << ','
       << s.M.sup1 << ',' << s.M.sup2 << ',' << s.M.sup3 << ',' << s.ortho_residual << '\n';
  return os.str();
}

PowerLawFit fit_power_law_tail(std::span<const double> t, std::span<const double> y,
                               double p_min, double p_max) {
  if (t.size() != y.size() || t.size() < 3)
    throw config_error("power-law fit needs at least three samples");
  const auto n = static_cast<double>(t.size());
  PowerLawFit best;
  best.residual = std::numeric_limits<double>::infinity();
  for (double p = p_min; p <= p_max + 1e-12; p += 0.01) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double x = std::pow(t[i], -p);
      sx += x, sy += y[i], sxx += x * x, sxy += x * y[i];
    }
    const double den = n * sxx - sx * sx;
    double a = 0.0, c = sy / n;
    if (std::abs(den) > 1e-300 * n * sxx) {
      a = (n * sxy - sx * sy) / den;
      c = (sy - a * sx) / n;
    }
    double r = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double e = c + a * std::pow(t[i], -p) - y[i];
      r += e * e;
    }
    r = std::sqrt(r / n);
    if (r < best.residual - 1e-15 * (1.0 + std::abs(c))) best = {c, a, p, r};
  }
  return best;
}

double fit_log_slope(std::span<const double> x, std::span<const double> y) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int cnt = 0;
  for (std::size_t i = 0; i < x.size() && i < y.size(); ++i) {
    if (x[i] <= 0.0 || y[i] <= 0.0) continue;
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx, sy += ly, sxx += lx * lx, sxy += lx * ly, ++cnt;
  }
  if (cnt < 2) throw numeric_error("log-log fit needs two positive samples");
  const double den = cnt * sxx - sx * sx;
  if (std::abs(den) < 1e-300) throw numeric_error("log-log fit with coincident abscissae");
  return (cnt * sxy - sx * sy) / den;
}

LimitTrajectory limit_trajectory(std::span<const double> t, std::span<const double> omega,
                                 std::span<const double> gamma, std::span<const double> beta,
                                 std::span<const double> alpha, double t_fit,
                                 double phase_bias) {
  const std::size_t n = t.size();
  if (omega.size() != n || gamma.size() != n || beta.size() != n || alpha.size() != n)
    throw config_error("limit_trajectory: series lengths differ");
  if (t_fit < 0.0 && n > 0) t_fit = 0.5 * t.back();
  std::vector<double> tt, ww, gg;
  for (std::size_t i = 0; i < n; ++i)
    if (t[i] >= t_fit && t[i] > 0.0) {
      tt.push_back(t[i]);
      ww.push_back(omega[i]);
      gg.push_back(gamma[i]);
    }
  if (tt.size() < 20) throw config_error("limit_trajectory: fewer than 20 tail samples");

  LimitTrajectory lim;
  lim.omega_fit = fit_power_law_tail(tt, ww);
  lim.gamma_fit = fit_power_law_tail(tt, gg);
  lim.omega_inf = lim.omega_fit.limit;
  lim.gamma_inf = lim.gamma_fit.limit;
  lim.omega_plus = lim.omega_inf;
  lim.phase_bias = phase_bias;
  lim.gamma_settled = lim.gamma_fit.exponent > 0.25 + 1e-9;

  double integral = 0.0;
  for (std::size_t i = 1; i < n; ++i)
    integral += 0.5 * ((omega[i] - lim.omega_inf) + (omega[i - 1] - lim.omega_inf)) * (t[i] - t[i - 1]);
  const double p = lim.omega_fit.exponent, a = lim.omega_fit.amplitude, T = t.back();
  const double scale = std::max(1e-14, 1e-9 * std::abs(lim.omega_inf));
  const bool decaying_tail = std::abs(a) * std::pow(T, -p) <= scale || p > 1.0;
  if (decaying_tail && p > 1.0) lim.tail_integral = a * std::pow(T, 1.0 - p) / (p - 1.0);
  lim.has_limit = decaying_tail;
  lim.gamma_plus = lim.gamma_inf + integral + lim.tail_integral;
  const double omega_param = lim.omega_plus - phase_bias;
  lim.alpha_plus = omega_param < 0.0 ? 2.0 * std::sqrt(-omega_param) : 0.0;

  for (std::size_t i = 0; i < n; ++i) {
    lim.times.push_back(t[i]);
    const double d = std::abs(beta[i] - lim.beta_plus(t[i])) + std::abs(alpha[i] - lim.alpha_plus);
    lim.defects.push_back(d * t[i]);
  }
  return lim;
}

LimitTrajectory limit_trajectory(const ModulationTrack& track, double t_fit) {
  std::vector<double> t, w, g, b, a;
  for (const auto& s : track.states) {
    t.push_back(s.t);
    w.push_back(s.sigma.omega + track.phase_bias);
    g.push_back(s.gamma);
    b.push_back(s.sigma.beta);
    a.push_back(s.sigma.alpha);
  }
  return limit_trajectory(t, w, g, b, a, t_fit, track.phase_bias);
}

double free_remainder_defect(const GraphFunction& u_te, double te, const GraphFunction& u_T,
                             double T, const LimitTrajectory& lim, const Nonlinearity& nl,
                             Boundary boundary, double dt) {
  if (!(T >= te)) throw config_error("free_remainder_defect: T < te");
  const StarGrid& grid = u_T.grid();
  const auto phi = scalar_from_edge(discrete_profile(nl, lim.alpha_plus, grid).samples, grid);
  GraphFunction r_e = u_te - std::exp(-I * lim.beta_plus(te)) * phi;
  const GraphFunction f = T > te ? free_propagate(r_e, T - te, dt, boundary) : r_e;
  return l2_norm(u_T - std::exp(-I * lim.beta_plus(T)) * phi - f);
}

double perturbation_norm(const GraphFunction& chi) {
  const StarGrid& grid = chi.grid();
  std::vector<double> w(static_cast<std::size_t>(grid.samples()));
  for (int m = 0; m < grid.samples(); ++m) {
    const double x = grid.x(m);
    w[static_cast<std::size_t>(m)] = (1.0 + x * x) * (1.0 + x * x);
  }
  const double weighted = std::sqrt(std::max(0.0, l2_inner_weighted(chi, chi, w).real()));
  return weighted + l2_norm(derivative(chi));
}

AsymptoticProfile asymptotic_profile(const GraphFunction& h0, std::span<const double> times,
                                     std::span<const GraphFunction> D, const GraphFunction& h_T,
                                     const LinearizedOperator& H, double dt) {
  if (times.size() != D.size() || times.empty())
    throw config_error("asymptotic_profile: one forcing sample per time");
  if (std::abs(times.front()) > 1e-12)
    throw config_error("asymptotic_profile: the first checkpoint must be t = 0");
  const StarGrid& grid = H.grid();
  StarOperator back(grid, 2, {-1.0, 1.0});
  for (int e = 0; e < grid.n_edges(); ++e)
    for (int m = 0; m < grid.samples(); ++m) back.potential(e, m) = -H.op.potential(e, m);
  const LinearizedPropagator backward(back, dt);

  // S_m = w_m D_m + e^{iH (t_{m+1} - t_m)} S_{m+1}; the integral is S_0.
  const std::size_t n = times.size();
  auto weight = [&](std::size_t m) {
    double w = 0.0;
    if (m > 0) w += 0.5 * (times[m] - times[m - 1]);
    if (m + 1 < n) w += 0.5 * (times[m + 1] - times[m]);
    return w;
  };
  GraphFunction S = weight(n - 1) * D[n - 1];
  for (std::size_t m = n - 1; m-- > 0;) {
    backward.advance(S, times[m + 1] - times[m]);
    S += weight(m) * D[m];
  }
  const RootBasis rs = root_basis(H, false);
  AsymptoticProfile out{project_continuous(h0 - I * S, rs), 0.0};
  GraphFunction forward = out.h_inf;
  LinearizedPropagator(H.op, dt).advance(forward, times.back());
  out.defect = l2_norm(h_T - forward);
  return out;
}

}  // namespace starwave
