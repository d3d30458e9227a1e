#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "starwave/graph.hpp"
#include "starwave/soliton.hpp"
#include "starwave/star_operator.hpp"

namespace starwave {

struct Boundary {
  enum class Kind { Dirichlet, Absorbing };
  Kind kind = Kind::Dirichlet;
  double width_fraction = 0.1;
  double strength = 1.0;

  static Boundary dirichlet() { return {}; }
  static Boundary absorbing(double width_fraction = 0.1, double strength = 1.0) {
    return {Kind::Absorbing, width_fraction, strength};
  }
  bool is_absorbing() const { return kind == Kind::Absorbing; }
};

struct EvolutionConfig {
  double dt = 0.01;
  double T = 10.0;
  Nonlinearity nonlinearity;
  Boundary boundary;
  int record_stride = 10;     // steps between diagnostics rows
  int snapshot_stride = 0;    // steps between stored snapshots, 0 = none
  double mass_guard = 1e-3;   // abort threshold on relative mass drift (Dirichlet only)
};

struct ConservedQuantities {
  double mass = 0.0;
  double energy = 0.0;
};

ConservedQuantities conserved(const GraphFunction& u, const Nonlinearity& nl);

/// || x u ||_2 over the graph.
double virial_weighted_norm(const GraphFunction& u);

/// Strang splitting: exact nonlinear phase half-steps around a Crank-Nicolson
/// step of  i u_t = -u'' (- i W u)  with the Kirchhoff vertex elimination.
class NlsStepper {
 public:
  NlsStepper(const StarGrid& grid, double dt, Nonlinearity nl, Boundary boundary = {});
  void step(GraphFunction& u) const;
  double dt() const { return cn_.dt(); }

 private:
  void nonlinear_half_step(GraphFunction& u) const;

  StarOperator op_;
  CrankNicolson cn_;
  Nonlinearity nl_;
};

GraphFunction step_nls(const GraphFunction& u, const EvolutionConfig& cfg);

/// Linear flow  i u_t = -Delta u  for time t with steps of at most dt.
GraphFunction free_propagate(const GraphFunction& u, double t, double dt = 0.01,
                             Boundary boundary = {});

struct TrajectoryRow {
  double t;
  double mass;
  double energy;
  double kirchhoff_continuity;
  double kirchhoff_flux;
  double virial;
  double sup_norm;
};

struct TrajectoryRecord {
  std::vector<TrajectoryRow> rows;
  std::vector<std::pair<double, GraphFunction>> snapshots;
  std::optional<GraphFunction> final_state;
};

using Observer = std::function<void(double t, const GraphFunction& u)>;

/// Observers run at every recorded time.
TrajectoryRecord evolve(const GraphFunction& u0, const EvolutionConfig& cfg,
                        const std::vector<Observer>& observers = {});

std::string trajectory_csv(const TrajectoryRecord& rec);

}  // namespace starwave
