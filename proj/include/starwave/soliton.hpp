#pragma once

#include <utility>
#include <vector>

#include "starwave/graph.hpp"

namespace starwave {

/// F(xi) = sum_k c_k xi^k as a list of (degree, coefficient) terms.
class Nonlinearity {
 public:
  Nonlinearity() = default;
  explicit Nonlinearity(std::vector<std::pair<int, double>> terms);
  static Nonlinearity power(int degree, double coefficient) { return Nonlinearity({{degree, coefficient}}); }

  double F(double xi) const;
  double F_prime(double xi) const;
  /// G(s) = int_0^s F.
  double G(double s) const;
  int lowest_degree() const;
  bool is_zero() const { return terms_.empty(); }
  const std::vector<std::pair<int, double>>& terms() const { return terms_; }

  /// Enforces the degree gate p >= 4 unless `allow_low_degree`.
  void validate(bool allow_low_degree) const;

 private:
  std::vector<std::pair<int, double>> terms_;
};

double eval_F(const Nonlinearity& nl, double xi);
double eval_F_prime(const Nonlinearity& nl, double xi);

/// U(phi, alpha) = -alpha^2 phi^2 / 8 - G(phi^2) / 2.
double potential_U(const Nonlinearity& nl, double phi, double alpha);
double potential_U_phi(const Nonlinearity& nl, double phi, double alpha);

struct ProfileRoot {
  double phi0;
  double U_phi;
};
ProfileRoot smallest_positive_root(const Nonlinearity& nl, double alpha);

/// [(mu+1) w]^{1/(2mu)} sech^{1/mu}(mu sqrt(w) x), w > 0 the positive frequency alpha^2/4.
double profile_closed_form(double x, int mu, double omega_pos);

struct Profile {
  double alpha;
  std::vector<double> samples;
  double amplitude;
};

/// Profile from the first integral (phi')^2/2 + U(phi) = 0, inverted on the grid.
Profile profile_quadrature(const Nonlinearity& nl, double alpha, const StarGrid& grid);

/// Profile values at arbitrary increasing abscissae (x >= 0).
std::vector<double> profile_values(const Nonlinearity& nl, double alpha, std::span<const double> xs);

/// Solution of the discretized profile equation with the discrete vertex
/// condition, started from the quadrature profile.  Identical on every edge,
/// so the single-edge problem suffices.
Profile discrete_profile(const Nonlinearity& nl, double alpha, const StarGrid& grid);

/// d/d alpha of the discrete profile by a centered difference with relative step.
std::vector<double> profile_alpha_derivative(const Nonlinearity& nl, double alpha,
                                             const StarGrid& grid, double rel_step = 1e-4);

struct SolitonParams {
  double beta = 0.0;
  double omega = 0.0;  // (v^2 - alpha^2) / 4, negative at rest
  double b = 0.0;
  double v = 0.0;
  double alpha = 2.0;

  static SolitonParams at_rest(double alpha, double beta = 0.0) {
    return {beta, -alpha * alpha / 4.0, 0.0, 0.0, alpha};
  }
  double omega_pos() const { return alpha * alpha / 4.0; }
};

struct SolitonOptions {
  bool force = false;  // allow b, v != 0 (not Kirchhoff-admissible)
};

/// w_j = exp(-i beta(t) + i v x / 2) phi(x - b) on every edge with beta(t) = beta + omega t.
GraphFunction soliton_graph(const SolitonParams& p, const Nonlinearity& nl, const StarGrid& grid,
                            double t = 0.0, SolitonOptions opts = {});

/// Same, with a precomputed edge profile.
GraphFunction soliton_from_profile(const Profile& prof, const StarGrid& grid, double phase);

}  // namespace starwave
