#include "starwave/evolution.hpp"

#include <cmath>

#include "starwave/error.hpp"
#include "starwave/io.hpp"

namespace starwave {

namespace {

StarOperator laplacian(const StarGrid& grid, const Boundary& boundary) {
  StarOperator op(grid, 1, {1.0, 1.0});
  if (boundary.is_absorbing()) {
    const auto w = absorbing_profile(grid, boundary.width_fraction, boundary.strength);
    std::vector<cplx> q(w.size());
    for (std::size_t m = 0; m < w.size(); ++m) q[m] = cplx(0.0, -w[m]);
    op.add_scalar_potential(q);
  }
  return op;
}

int step_count(double T, double dt) {
  const double n = T / dt;
  const int k = static_cast<int>(std::llround(n));
  if (std::abs(n - k) > 1e-9 * std::max(1.0, n)) return static_cast<int>(std::ceil(n));
  return k;
}

}  // namespace

ConservedQuantities conserved(const GraphFunction& u, const Nonlinearity& nl) {
  const auto& g = u.grid();
  const Eigen::VectorXd tw = trapezoid_weights(g);
  const GraphFunction du = derivative(u);
  ConservedQuantities q;
  for (int e = 0; e < g.n_edges(); ++e)
    for (int c = 0; c < u.components(); ++c)
      for (int m = 0; m < g.samples(); ++m) {
        const double a2 = std::norm(u(e, c, m));
        q.mass += tw[m] * a2;
        q.energy += tw[m] * (std::norm(du(e, c, m)) + nl.G(a2));
      }
  return q;
}

double virial_weighted_norm(const GraphFunction& u) {
  const auto& g = u.grid();
  std::vector<double> x2(g.samples());
  for (int m = 0; m < g.samples(); ++m) x2[m] = g.x(m) * g.x(m);
  return std::sqrt(std::max(0.0, l2_inner_weighted(u, u, x2).real()));
}

NlsStepper::NlsStepper(const StarGrid& grid, double dt, Nonlinearity nl, Boundary boundary)
    : op_(laplacian(grid, boundary)), cn_(op_.reduced_matrix(), dt), nl_(std::move(nl)) {}

void NlsStepper::nonlinear_half_step(GraphFunction& u) const {
  if (nl_.is_zero()) return;
  const double half = 0.5 * cn_.dt();
  for (auto& z : u.data()) z *= std::polar(1.0, -nl_.F(std::norm(z)) * half);
}

void NlsStepper::step(GraphFunction& u) const {
  if (u.components() != 1) throw numeric_error("NLS evolution expects a scalar function");
  nonlinear_half_step(u);
  Eigen::VectorXcd r = op_.restrict(u);
  cn_.step(r);
  u = op_.prolong(r);
  nonlinear_half_step(u);
  // The phase rotation moves the vertex off the discrete flux condition by O(dt h^2).
  u = enforce_kirchhoff(std::move(u));
}

GraphFunction step_nls(const GraphFunction& u, const EvolutionConfig& cfg) {
  GraphFunction v = u;
  NlsStepper(u.grid(), cfg.dt, cfg.nonlinearity, cfg.boundary).step(v);
  return v;
}

GraphFunction free_propagate(const GraphFunction& u, double t, double dt, Boundary boundary) {
  if (u.components() != 1) throw numeric_error("free propagation expects a scalar function");
  if (!boundary.is_absorbing()) {
    // Data that does not decay would see the artificial far wall.
    const int M = u.grid().samples();
    double tail = 0.0;
    for (int e = 0; e < u.grid().n_edges(); ++e) tail = std::max(tail, std::abs(u(e, 0, M - 2)));
    if (tail > 1e-6 * std::max(sup_norm(u), 1e-300))
      throw config_error("initial data does not decay; use an absorbing boundary");
  }
  if (t <= 0.0) return u;
  const int n = step_count(t, dt);
  const StarOperator op = laplacian(u.grid(), boundary);
  const CrankNicolson cn(op.reduced_matrix(), t / n);
  Eigen::VectorXcd r = op.restrict(u);
  for (int i = 0; i < n; ++i) cn.step(r);
  return op.prolong(r);
}

TrajectoryRecord evolve(const GraphFunction& u0, const EvolutionConfig& cfg,
                        const std::vector<Observer>& observers) {
  const auto k0 = kirchhoff_residual(u0);
  if (k0.continuity > 1e-6 || k0.flux > 1e-6)
    throw config_error("initial data violates the vertex condition");
  TrajectoryRecord rec;
  GraphFunction u = u0;
  const int n = cfg.T > 0.0 ? step_count(cfg.T, cfg.dt) : 0;
  const double dt = n > 0 ? cfg.T / n : cfg.dt;
  const double mass0 = conserved(u0, cfg.nonlinearity).mass;
  std::optional<NlsStepper> stepper;
  if (n > 0) stepper.emplace(u0.grid(), dt, cfg.nonlinearity, cfg.boundary);

  auto record = [&](int i) {
    const double t = i * dt;
    const auto q = conserved(u, cfg.nonlinearity);
    const auto k = kirchhoff_residual(u);
    rec.rows.push_back({t, q.mass, q.energy, k.continuity, k.flux, virial_weighted_norm(u),
                        sup_norm(u)});
    for (const auto& obs : observers) obs(t, u);
    if (!cfg.boundary.is_absorbing() && mass0 > 0.0 &&
        std::abs(q.mass - mass0) > cfg.mass_guard * mass0)
      throw numeric_error("mass drift exceeded the instability guard at t = " + format_double(t));
  };

  const int stride = std::max(1, cfg.record_stride);
  record(0);
  if (cfg.snapshot_stride > 0) rec.snapshots.emplace_back(0.0, u);
  for (int i = 1; i <= n; ++i) {
    stepper->step(u);
    if (i % stride == 0 || i == n) record(i);
    if (cfg.snapshot_stride > 0 && (i % cfg.snapshot_stride == 0 || i == n))
      rec.snapshots.emplace_back(i * dt, u);
  }
  rec.final_state = u;
  return rec;
}

std::string trajectory_csv(const TrajectoryRecord& rec) {
  CsvTable t({"t", "mass", "energy", "kirchhoff_continuity", "kirchhoff_flux", "virial",
              "sup_norm"});
  for (const auto& r : rec.rows)
    t.row({r.t, r.mass, r.energy, r.kirchhoff_continuity, r.kirchhoff_flux, r.virial, r.sup_norm});
  return t.str();
}

}  // namespace starwave
