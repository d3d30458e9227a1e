#pragma once

#include <vector>

#include <Eigen/Dense>

#include "starwave/graph.hpp"
#include "starwave/linearized.hpp"
#include "starwave/soliton.hpp"
#include "starwave/star_operator.hpp"

namespace starwave {

/// Which boundary value of the resolvent is meant on the continuous spectrum.
enum class Side { Off, PlusI0, MinusI0 };

struct SpectralPoint {
  cplx lambda;
  Side side = Side::Off;

  static SpectralPoint off_axis(cplx lambda) { return {lambda, Side::Off}; }
  /// lambda = w + k^2; k > 0 is the +i0 limit, k < 0 the -i0 limit.
  static SpectralPoint on_axis(double k, double w);
  /// Sign of the infinitesimal imaginary part of lambda (0 off axis).
  int im_sign() const { return side == Side::PlusI0 ? 1 : side == Side::MinusI0 ? -1 : 0; }
};

/// sqrt with Re >= 0.  On the negative real axis the branch follows `im_sign`,
/// the sign of the vanishing imaginary part of z; im_sign = 0 there is an error.
cplx branch_sqrt(cplx z, int im_sign);

/// Root of z + 1/z = 2 + kappa2 h^2 that decays (|z| < 1), or on the unit
/// circle the one selected by the vanishing imaginary part of kappa2.
cplx lattice_root(cplx kappa2, double h, int im_sign);

/// Lattice: exact inverse of the discretized lambda - J on the infinite
/// lattice (same rows as the direct solver).  Continuum: the exact kernel
/// applied to the piecewise-cubic interpolant of f.
enum class FreeKernel { Lattice, Continuum };

/// u = (lambda - J)^{-1} f with J = (-Delta + w_j) theta3 and w_j = alpha_j^2/4.
GraphFunction free_resolvent_apply(const SpectralPoint& pt, const GraphFunction& f,
                                   std::span<const double> alphas,
                                   FreeKernel kernel = FreeKernel::Lattice);

/// Continuum kernel, component c, x on edge i, y on edge j:
///   delta_ij s_c e^{-kappa_i |x-y|} + A_c(i,j) e^{-kappa_i x - kappa_j y},
/// with s_1 = -1/(2 kappa_1), s_2 = 1/(2 kappa_2).
struct FreeResolventCoefficients {
  std::vector<cplx> kappa1, kappa2;  // per edge
  Eigen::MatrixXcd a;                // first component
  Eigen::MatrixXcd b;                // second component
};
FreeResolventCoefficients free_resolvent_coefficients(const SpectralPoint& pt,
                                                      std::span<const double> alphas);
cplx free_resolvent_kernel(const FreeResolventCoefficients& co, int comp, int i, int j, double x,
                           double y);

/// Copy of `op` whose far end is transparent at pt.  Off the axis the far end
/// stays Dirichlet unless `transparent_off_axis`, which closes it with the
/// decaying lattice root (the infinite-lattice problem).
StarOperator with_outgoing_closure(const StarOperator& op, const SpectralPoint& pt, double w,
                                   bool transparent_off_axis = false);

/// ||(lambda - A) u - f|| / ||f|| over the rows of the reduced system.
double resolvent_residual(const SpectralPoint& pt, const GraphFunction& u, const GraphFunction& f,
                          const StarOperator& op, double w, bool transparent_off_axis = false);

/// Direct sparse solve of (lambda - H) u = f.  On the axis the far end
/// carries the outgoing lattice closure.
GraphFunction kirchhoff_resolvent_direct(const SpectralPoint& pt, const GraphFunction& f,
                                         const LinearizedOperator& H);

/// Fitted exponent of ||(lambda - H)^{-1} f|| against the distance of lambda to 0.
double pole_order_probe(const LinearizedOperator& H, const GraphFunction& f,
                        std::span<const double> distances);

struct BornResult {
  GraphFunction approx;
  std::vector<double> term_norms;
  double ratio = 0.0;  // largest ratio of consecutive term norms after the first
};

/// Partial sum of sum_n R0 (V R0)^n f, R0 = (lambda - J)^{-1}, V = H - J.
BornResult born_series_apply(const SpectralPoint& pt, const GraphFunction& f,
                             const LinearizedOperator& H, int n_max,
                             FreeKernel kernel = FreeKernel::Lattice);

struct JostOptions {
  double start_fraction = 0.9;  // backward integration starts at this fraction of L
  double tolerance = 1e-14;
  double coupling = 1.0;
};

/// Right half-line solutions for E = w + k^2 (k signed; k < 0 is the -i0 side)
/// and the two scattering solutions of the even whole-line problem,
///   frak_F = s Y+ + c Y1,   frak_G-type 𝒢 = r Y+ + Y- + a3 Y1   on x >= 0,
/// where Y+- ~ e^{+-ikx}(1,0), Y1 ~ e^{-mu x}(0,1) at infinity.
struct JostSolutions {
  double k = 0.0, alpha = 0.0, w = 0.0, mu = 0.0;
  StarGrid grid;
  cplx s, r, c, a3, h;  // h = c/s, so zeta2 = Y+ + h Y1
  std::vector<Eigen::Vector2cd> Yp, dYp, Ym, dYm, Y1, dY1;

  Eigen::Vector2cd scatter_F(int m) const { return s * Yp[m] + c * Y1[m]; }
  Eigen::Vector2cd scatter_F_prime(int m) const { return s * dYp[m] + c * dY1[m]; }
  Eigen::Vector2cd scatter_G(int m) const { return r * Yp[m] + Ym[m] + a3 * Y1[m]; }
  /// frak G = 𝒢 - (r/s) 𝓕.
  Eigen::Vector2cd frak_G(int m) const { return scatter_G(m) - (r / s) * scatter_F(m); }
  /// Columns (zeta2, zeta1): outgoing and decaying solutions.
  Eigen::Matrix2cd F1(int m) const;
  Eigen::Matrix2cd F1_prime(int m) const;
};

JostSolutions jost_solve(double k, double alpha, const Nonlinearity& nl, const StarGrid& grid,
                         JostOptions opts = {});

/// Whole-line kernel of (H - E)^{-1} for the even potential, E = w + k^2 on the
/// side of jost.k:
///   G(x,y) = -F1(x) X^{-1} G2(y)^T theta3    (y <= x)
///   G(x,y) = -G2(x) X^{-T} F1(y)^T theta3    (y >= x)
/// with G2(x) = F1(-x) and X = G2^T F1' - G2'^T F1 (constant; taken at x = 0).
struct GreenKernelData {
  const JostSolutions* jost = nullptr;
  int m_max = 0;  // G2 is tabulated on samples 0..m_max
  std::vector<Eigen::Matrix2cd> G2, dG2;
  Eigen::Matrix2cd X, X_inv;
};
GreenKernelData green_kernel_data(const JostSolutions& jost, const Nonlinearity& nl, double y_max,
                                  double coupling = 1.0);
/// Kernel at x = x_mx, y = x_my; both indices must be <= m_max on the G2 side.
Eigen::Matrix2cd green_kernel(int mx, int my, const GreenKernelData& g);

struct KirchhoffResolventSolve {
  Eigen::MatrixXcd A;           // 2N x 2N vertex system
  Eigen::VectorXcd Y;           // right side
  Eigen::VectorXcd coefficients;  // (c_j, e_j) per edge on (frak F, zeta1)
  cplx W;                       // det A
};

/// (lambda - H)^{-1} f on the star graph at lambda = w + k^2 on the side of
/// jost.k, as an edge-wise combination of outgoing solutions plus the
/// whole-line kernel integral.
GraphFunction kirchhoff_resolvent_scattering(const GraphFunction& f, const JostSolutions& jost,
                                             const Nonlinearity& nl,
                                             KirchhoffResolventSolve* info = nullptr);

/// Vertex determinant of the scattering system for an N-edge star.
cplx scattering_determinant(const JostSolutions& jost, int n_edges);

struct SpectralJump {
  Eigen::Matrix2cd kernel_side;  // G(E+i0) - G(E-i0)
  Eigen::Matrix2cd jost_side;    // -(1/2ik) Lambda(x) Lambda(y)^* theta3
  double difference = 0.0;       // max entry
};
/// Both sides from Jost data at +|k| and -|k|; x_m, y_m must lie within the G2 tables.
SpectralJump spectral_jump(int mx, int my, const JostSolutions& plus, const JostSolutions& minus,
                           const GreenKernelData& g_plus, const GreenKernelData& g_minus);

struct HypothesisCReport {
  double k_proxy = 0.0;
  cplx det_values;       // det(frak F(0), conj frak F(0)), extrapolated to k = 0
  cplx det_derivatives;  // det(frak F'(0), conj frak F'(0)), extrapolated
  bool pass = false;
  double threshold = 1e-6;
  // Same determinants in the outgoing pair (frak F, zeta1) used by the solver.
  cplx det_outgoing_values;
  cplx det_outgoing_derivatives;
  double min_W = 0.0;  // min |W(k)| over the k sweep
  double argmin_W = 0.0;
};
HypothesisCReport hypothesis_C_check(double alpha, const Nonlinearity& nl, const StarGrid& grid,
                                     double k_proxy = 1e-2, int sweep_points = 40,
                                     double coupling = 1.0);

/// Smooth spectral windows on |Re lambda| built from a full eigen-decomposition.
class SpectralFilter {
 public:
  SpectralFilter(const LinearizedOperator& H, double cluster_radius = 0.05);

  enum class Window { High, Low, Root };
  /// High: weight chi(|Re lambda|), chi = 0 below lambda0 and 1 above 2 lambda0;
  /// Low: 1 - chi; both exclude the root cluster, which Root selects.
  GraphFunction apply(Window window, double lambda0, const GraphFunction& f) const;
  /// e^{-iHt} f through the eigen-decomposition.
  GraphFunction propagate(const GraphFunction& f, double t) const;
  const Eigen::VectorXcd& eigenvalues() const { return values_; }

 private:
  const LinearizedOperator* H_;
  double radius_;
  Eigen::VectorXcd values_;
  Eigen::MatrixXcd vectors_;
  Eigen::PartialPivLU<Eigen::MatrixXcd> lu_;
};

/// C^1 smoothstep window: 0 below a, 1 above b.
double smooth_window(double x, double a, double b);

}  // namespace starwave
