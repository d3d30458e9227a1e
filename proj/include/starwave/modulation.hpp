#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "starwave/evolution.hpp"
#include "starwave/graph.hpp"
#include "starwave/linearized.hpp"
#include "starwave/soliton.hpp"

namespace starwave {

/// Discrete profile and its first two alpha-derivatives on one edge.
struct ProfileJet {
  double alpha;
  std::vector<double> phi, phi_a, phi_aa;
};
ProfileJet profile_jet(const Nonlinearity& nl, double alpha, const StarGrid& grid,
                       double rel_step = 1e-3);

/// e^{-i beta} phi_alpha on every edge (b = v = 0).
GraphFunction modulated_soliton(double beta, const ProfileJet& jet, const StarGrid& grid);

struct DecomposeResult {
  SolitonParams sigma;  // beta is the total phase, omega = -alpha^2/4
  GraphFunction chi;    // u - w(sigma)
  double residual = 0.0;
  int iterations = 0;
  Eigen::Matrix2d jacobian;  // d(R1, R2)/d(beta, alpha)
  ProfileJet jet;
};

/// Newton on (beta, alpha) for the two real orthogonality conditions
///   sum_j (Re e^{i beta} chi_j, phi) = 0,  sum_j (Im e^{i beta} chi_j, phi_alpha) = 0.
DecomposeResult decompose(const GraphFunction& u, const SolitonParams& guess,
                          const Nonlinearity& nl, double tol = 1e-12, int max_iter = 25);

struct DiscreteSplit {
  cplx k1, k2;
  GraphFunction h;  // spinor remainder, theta3-orthogonal to both root vectors
};

/// g = k1 (-i phi, i phi) + k2 (phi_alpha, phi_alpha) + h on every edge.
DiscreteSplit split_discrete_continuous(const GraphFunction& g, const ProfileJet& jet);

struct ModulationRates {
  double gamma_prime = 0.0;
  double omega_prime = 0.0;
};

/// The five forcing terms (first spinor components) of i g_t = H g + D g, with
/// Omega = beta - beta1 and the potentials of sigma and sigma1.
struct ForcingTerms {
  GraphFunction D0, D1, D2, D3, D4;
  GraphFunction total() const { return D0 + D1 + D2 + D3 + D4; }
};
ForcingTerms forcing_terms_D(const GraphFunction& g, const SolitonParams& sigma,
                             const SolitonParams& sigma1, const ModulationRates& rates,
                             const Nonlinearity& nl);

struct DiagnosticsM {
  double M0 = 0, M1 = 0, M2 = 0, M3 = 0;
  double sup0 = 0, sup1 = 0, sup2 = 0, sup3 = 0;  // running weighted sups
};

/// Updates the running sups with the instantaneous values at time t.
DiagnosticsM diagnostics(double t, double alpha, double alpha0, const DiscreteSplit& split,
                         const GraphFunction& g, const DiagnosticsM& previous);

struct ModulationState {
  double t = 0.0;
  SolitonParams sigma;
  double gamma = 0.0;
  double gamma_prime = 0.0;
  double omega_prime = 0.0;
  cplx k1, k2;
  double ortho_residual = 0.0;
  DiagnosticsM M;
};

/// Which soliton the remainder g = e^{-i Phi_1} chi is measured against.
enum class ReferenceChoice { FinalState, Initial };

struct ModulationOptions {
  double alpha0 = 2.0;
  SolitonParams guess = SolitonParams::at_rest(2.0);
  ReferenceChoice reference = ReferenceChoice::FinalState;
  bool keep_snapshots = false;
  // Subtract the phase rate the time stepper adds to an exact discrete soliton.
  bool calibrate_phase_rate = true;
};

/// Extra phase rate of the discrete soliton under the stepper of cfg, measured
/// over one time unit: beta(1) - beta(0) = omega + bias.
double stepper_phase_bias(double alpha, const EvolutionConfig& cfg, const StarGrid& grid);

struct ModulationTrack {
  std::vector<ModulationState> states;
  std::vector<GraphFunction> snapshots;  // u at the recorded times, if kept
  std::vector<GraphFunction> remainders; // g at the recorded times, if kept
  SolitonParams sigma1;                  // reference at t = 0 (beta1(t) = beta + omega t)
  double phase_bias = 0.0;               // gamma = beta - int (omega + phase_bias)
  GraphFunction final_state;
};

/// Evolves u0 and decomposes every recorded state (cfg.record_stride steps apart).
ModulationTrack track_modulation(const GraphFunction& u0, const EvolutionConfig& cfg,
                                 const ModulationOptions& opts);

std::string modulation_csv(const ModulationTrack& track);

struct PowerLawFit {
  double limit = 0.0;     // c in c + a t^{-p}
  double amplitude = 0.0;
  double exponent = 0.0;
  double residual = 0.0;  // rms
};
/// c + a t^{-p} by least squares in (c, a) over a grid of p in [p_min, p_max].
PowerLawFit fit_power_law_tail(std::span<const double> t, std::span<const double> y,
                               double p_min = 0.25, double p_max = 4.0);
/// Slope of log y against log x.
double fit_log_slope(std::span<const double> x, std::span<const double> y);

struct LimitTrajectory {
  double omega_inf = 0.0, gamma_inf = 0.0;
  double omega_plus = 0.0, gamma_plus = 0.0, alpha_plus = 0.0;
  double tail_integral = 0.0;  // int_T^inf (omega - omega_inf)
  PowerLawFit omega_fit, gamma_fit;
  double phase_bias = 0.0;     // omega_plus includes it; alpha_plus does not
  bool has_limit = true;
  bool gamma_settled = true;   // false when the gamma fit sits at the smallest exponent
  std::vector<double> times, defects;  // |sigma(t) - sigma_plus(t)| * t
  double beta_plus(double t) const { return omega_plus * t + gamma_plus; }
};

/// Limits from the samples with t >= t_fit (default: second half of the series).
/// omega is the phase rate actually followed, i.e. -alpha^2/4 + phase_bias.
LimitTrajectory limit_trajectory(std::span<const double> t, std::span<const double> omega,
                                 std::span<const double> gamma, std::span<const double> beta,
                                 std::span<const double> alpha, double t_fit = -1.0,
                                 double phase_bias = 0.0);
LimitTrajectory limit_trajectory(const ModulationTrack& track, double t_fit = -1.0);

/// || u(T) - w(sigma_plus(T)) - e^{i Delta (T - te)} (u(te) - w(sigma_plus(te))) ||_2.
double free_remainder_defect(const GraphFunction& u_te, double te, const GraphFunction& u_T,
                             double T, const LimitTrajectory& lim, const Nonlinearity& nl,
                             Boundary boundary, double dt);

/// || (1 + x^2) chi ||_2 + || chi' ||_2.
double perturbation_norm(const GraphFunction& chi);

struct AsymptoticProfile {
  GraphFunction h_inf;
  double defect = 0.0;  // || h(T) - e^{-iHT} h_inf ||_2
};

/// h_inf = P_c(h0 - i int_0^T e^{iH tau} D(tau) dtau) by the trapezoid rule on
/// the checkpoint times (first time 0), with backward linearized propagation.
AsymptoticProfile asymptotic_profile(const GraphFunction& h0, std::span<const double> times,
                                     std::span<const GraphFunction> D, const GraphFunction& h_T,
                                     const LinearizedOperator& H, double dt);

}  // namespace starwave
