#include "starwave/soliton.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <boost/math/quadrature/gauss.hpp>

#include "starwave/error.hpp"

namespace starwave {

Nonlinearity::Nonlinearity(std::vector<std::pair<int, double>> terms) {
  for (auto [k, c] : terms) {
    if (k < 1) throw config_error("nonlinearity degrees must be >= 1 so that F(0) = 0");
    if (c == 0.0) continue;
    auto it = std::find_if(terms_.begin(), terms_.end(), [k](auto& t) { return t.first == k; });
    if (it != terms_.end())
      it->second += c;
    else
      terms_.emplace_back(k, c);
  }
  std::sort(terms_.begin(), terms_.end());
}

double Nonlinearity::F(double xi) const {
  double s = 0.0;
  for (auto [k, c] : terms_) s += c * std::pow(xi, k);
  return s;
}

double Nonlinearity::F_prime(double xi) const {
  double s = 0.0;
  for (auto [k, c] : terms_) s += c * k * std::pow(xi, k - 1);
  return s;
}

double Nonlinearity::G(double s) const {
  double g = 0.0;
  for (auto [k, c] : terms_) g += c * std::pow(s, k + 1) / (k + 1);
  return g;
}

int Nonlinearity::lowest_degree() const { return terms_.empty() ? 0 : terms_.front().first; }

void Nonlinearity::validate(bool allow_low_degree) const {
  if (!terms_.empty() && lowest_degree() < 4 && !allow_low_degree)
    throw config_error("nonlinearity has lowest degree " + std::to_string(lowest_degree()) +
                       " < 4; set allow_low_degree to run it anyway");
}

double eval_F(const Nonlinearity& nl, double xi) { return nl.F(xi); }
double eval_F_prime(const Nonlinearity& nl, double xi) { return nl.F_prime(xi); }

double potential_U(const Nonlinearity& nl, double phi, double alpha) {
  return -alpha * alpha * phi * phi / 8.0 - 0.5 * nl.G(phi * phi);
}

double potential_U_phi(const Nonlinearity& nl, double phi, double alpha) {
  return -alpha * alpha * phi / 4.0 - nl.F(phi * phi) * phi;
}

ProfileRoot smallest_positive_root(const Nonlinearity& nl, double alpha) {
  if (!(alpha > 0.0)) throw config_error("alpha must be positive");
  // U is negative just above 0; scan geometrically for the first sign change.
  const double lo_end = 1e-8, hi_end = 10.0 * alpha;
  const int steps = 4000;
  const double ratio = std::pow(hi_end / lo_end, 1.0 / steps);
  double a = lo_end, Ua = potential_U(nl, a, alpha);
  for (int i = 0; i < steps; ++i) {
    const double b = a * ratio;
    const double Ub = potential_U(nl, b, alpha);
    if (Ua < 0.0 && Ub >= 0.0) {
      double lo = a, hi = b;
      for (int it = 0; it < 200 && (hi - lo) > 1e-12 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        (potential_U(nl, mid, alpha) < 0.0 ? lo : hi) = mid;
      }
      double phi0 = 0.5 * (lo + hi);
      // Newton polish to machine precision; the root is simple.
      for (int it = 0; it < 5; ++it) {
        const double d = potential_U_phi(nl, phi0, alpha);
        if (d == 0.0) break;
        phi0 -= potential_U(nl, phi0, alpha) / d;
      }
      const double Up = potential_U_phi(nl, phi0, alpha);
      if (std::abs(Up) < 1e-8) throw numeric_error("degenerate root of U: U_phi(phi0) ~ 0");
      return {phi0, Up};
    }
    a = b;
    Ua = Ub;
  }
  throw numeric_error("U(., alpha) has no positive root: the profile does not exist");
}

double profile_closed_form(double x, int mu, double omega_pos) {
  if (mu < 1 || !(omega_pos > 0.0)) throw config_error("closed form needs mu >= 1, omega > 0");
  const double amp = std::pow((mu + 1) * omega_pos, 1.0 / (2.0 * mu));
  const double z = mu * std::sqrt(omega_pos) * std::abs(x);
  // sech^{1/mu}(z) = (2 e^{-z} / (1 + e^{-2z}))^{1/mu}, stable for large z.
  const double ez = std::exp(-z);
  return amp * std::pow(2.0 * ez / (1.0 + ez * ez), 1.0 / mu);
}

namespace {

using Gauss = boost::math::quadrature::gauss<double, 30>;

// Gauss on panels of width <= 0.5; a single rule over a long stretch of the
// tail loses relative accuracy far out.
template <class F>
double integrate_panels(F f, double a, double b) {
  const int n = std::max(1, static_cast<int>(std::ceil(std::abs(b - a) / 0.5)));
  double s = 0.0;
  for (int i = 0; i < n; ++i)
    s += Gauss::integrate(f, a + (b - a) * i / n, a + (b - a) * (i + 1) / n);
  return s;
}

// Inverts x(phi) = int_phi^{phi0} ds / sqrt(-2U).  Near phi0 the variable
// s = phi0 - tau^2 removes the endpoint singularity; below phi0/2 the
// variable s = e^v keeps the exponential tail well scaled.
class ProfileInverter {
 public:
  ProfileInverter(const Nonlinearity& nl, double alpha) : nl_(nl), alpha_(alpha) {
    phi0_ = smallest_positive_root(nl, alpha).phi0;
    build_shifted_polynomial();
    tau_half_ = std::sqrt(0.5 * phi0_);
    x_half_ = Gauss::integrate([this](double t) { return 2.0 / std::sqrt(q(t)); }, 0.0, tau_half_);
    v_half_ = std::log(0.5 * phi0_);
  }

  double phi0() const { return phi0_; }

  // xs must be nonnegative and nondecreasing.
  std::vector<double> values(std::span<const double> xs) const {
    std::vector<double> out(xs.size());
    double tau = 0.0, x_tau = 0.0;
    double v = v_half_, x_v = x_half_;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double x = xs[i];
      if (i > 0 && x < xs[i - 1]) throw numeric_error("profile abscissae must be sorted");
      if (x <= x_half_) {
        double t = tau + (x - x_tau) * std::sqrt(q(tau)) / 2.0;
        for (int it = 0; it < 50; ++it) {
          const double xt = x_tau + Gauss::integrate(
                                        [this](double s) { return 2.0 / std::sqrt(q(s)); }, tau, t);
          const double dt = (xt - x) * std::sqrt(q(t)) / 2.0;
          t -= dt;
          if (std::abs(dt) < 1e-16 * (1.0 + t)) break;
        }
        x_tau += Gauss::integrate([this](double s) { return 2.0 / std::sqrt(q(s)); }, tau, t);
        tau = t;
        out[i] = phi0_ - t * t;
      } else {
        double w = v - (x - x_v) / g(v);
        for (int it = 0; it < 50; ++it) {
          const double xw = x_v + integrate_panels([this](double s) { return g(s); }, w, v);
          const double dw = (xw - x) / g(w);
          w += dw;
          if (std::abs(dw) < 1e-15 * (1.0 + std::abs(w))) break;
        }
        x_v += integrate_panels([this](double s) { return g(s); }, w, v);
        v = w;
        out[i] = std::exp(w);
      }
    }
    return out;
  }

 private:
  // U(phi0 - d) - U(phi0) as a polynomial in d, coefficients of d^n for n >= 1.
  void build_shifted_polynomial() {
    int deg = 2;
    for (auto [k, c] : nl_.terms()) deg = std::max(deg, 2 * k + 2);
    std::vector<double> p(deg + 1, 0.0);
    p[2] = -alpha_ * alpha_ / 8.0;
    for (auto [k, c] : nl_.terms()) p[2 * k + 2] += -c / (2.0 * (k + 1));
    // Taylor coefficients a_n = sum_i p_i C(i,n) phi0^{i-n}.
    shifted_.assign(deg + 1, 0.0);
    for (int n = 1; n <= deg; ++n) {
      double a = 0.0;
      for (int i = n; i <= deg; ++i) {
        double binom = 1.0;
        for (int j = 1; j <= n; ++j) binom = binom * (i - n + j) / j;
        a += p[i] * binom * std::pow(phi0_, i - n);
      }
      shifted_[n] = a;
    }
  }

  // q(tau) = -2 [U(phi0 - tau^2) - U(phi0)] / tau^2, positive on [0, tau_half].
  double q(double tau) const {
    const double t2 = tau * tau;
    double s = 0.0, pw = 1.0;
    for (std::size_t n = 1; n < shifted_.size(); ++n) {
      s += 2.0 * shifted_[n] * ((n % 2 == 1) ? 1.0 : -1.0) * pw;
      pw *= t2;
    }
    return s;
  }

  // d x / d v in the tail variable s = e^v.
  double g(double v) const {
    const double s2 = std::exp(2.0 * v);
    double r = alpha_ * alpha_ / 4.0;
    for (auto [k, c] : nl_.terms()) r += c * std::pow(s2, k) / (k + 1);
    return 1.0 / std::sqrt(r);
  }

  const Nonlinearity& nl_;
  double alpha_;
  double phi0_;
  std::vector<double> shifted_;
  double tau_half_, x_half_, v_half_;
};

}  // namespace

std::vector<double> profile_values(const Nonlinearity& nl, double alpha,
                                   std::span<const double> xs) {
  return ProfileInverter(nl, alpha).values(xs);
}

Profile profile_quadrature(const Nonlinearity& nl, double alpha, const StarGrid& grid) {
  std::vector<double> xs(grid.samples());
  for (int m = 0; m < grid.samples(); ++m) xs[m] = grid.x(m);
  ProfileInverter inv(nl, alpha);
  return {alpha, inv.values(xs), inv.phi0()};
}

Profile discrete_profile(const Nonlinearity& nl, double alpha, const StarGrid& grid) {
  Profile prof = profile_quadrature(nl, alpha, grid);
  const int M = grid.samples();
  const int n = M - 2;
  const double h2 = grid.spacing() * grid.spacing();
  const double w = alpha * alpha / 4.0;
  auto& phi = prof.samples;
  phi[M - 1] = 0.0;

  auto residual = [&](Eigen::VectorXd& R) {
    phi[0] = (4.0 * phi[1] - phi[2]) / 3.0;
    for (int m = 1; m <= n; ++m) {
      const double p = phi[m];
      R[m - 1] = -(phi[m + 1] - 2.0 * p + phi[m - 1]) / h2 + w * p + nl.F(p * p) * p;
    }
  };

  Eigen::VectorXd R(n);
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  // The residual carries round-off of order 1/h^2, so convergence is judged on the update.
  bool converged = false;
  for (int it = 0; it < 30 && !converged; ++it) {
    residual(R);
    std::vector<Eigen::Triplet<double>> t;
    for (int m = 1; m <= n; ++m) {
      const double p2 = phi[m] * phi[m];
      t.emplace_back(m - 1, m - 1, 2.0 / h2 + w + nl.F(p2) + 2.0 * p2 * nl.F_prime(p2));
      if (m + 1 <= n) t.emplace_back(m - 1, m, -1.0 / h2);
      if (m - 1 >= 1) t.emplace_back(m - 1, m - 2, -1.0 / h2);
    }
    t.emplace_back(0, 0, -4.0 / (3.0 * h2));
    t.emplace_back(0, 1, 1.0 / (3.0 * h2));
    Eigen::SparseMatrix<double> J(n, n);
    J.setFromTriplets(t.begin(), t.end());
    lu.compute(J);
    if (lu.info() != Eigen::Success) throw numeric_error("discrete profile Jacobian is singular");
    Eigen::VectorXd d = lu.solve(R);
    for (int m = 1; m <= n; ++m) phi[m] -= d[m - 1];
    converged = d.lpNorm<Eigen::Infinity>() < 1e-14 * prof.amplitude;
  }
  if (!converged) throw numeric_error("discrete profile Newton did not converge");
  phi[0] = (4.0 * phi[1] - phi[2]) / 3.0;
  prof.amplitude = phi[0];
  return prof;
}

std::vector<double> profile_alpha_derivative(const Nonlinearity& nl, double alpha,
                                             const StarGrid& grid, double rel_step) {
  const double d = rel_step * alpha;
  const auto up = discrete_profile(nl, alpha + d, grid).samples;
  const auto dn = discrete_profile(nl, alpha - d, grid).samples;
  std::vector<double> out(up.size());
  for (std::size_t i = 0; i < up.size(); ++i) out[i] = (up[i] - dn[i]) / (2.0 * d);
  return out;
}

GraphFunction soliton_from_profile(const Profile& prof, const StarGrid& grid, double phase) {
  const cplx rot = std::polar(1.0, -phase);
  GraphFunction u(grid, 1);
  for (int e = 0; e < grid.n_edges(); ++e)
    for (int m = 0; m < grid.samples(); ++m) u(e, 0, m) = rot * prof.samples[m];
  return u;
}

GraphFunction soliton_graph(const SolitonParams& p, const Nonlinearity& nl, const StarGrid& grid,
                            double t, SolitonOptions opts) {
  const bool admissible = p.b == 0.0 && p.v == 0.0;
  if (!admissible && !opts.force)
    throw config_error("moving or shifted solitons violate the vertex condition (b = v = 0)");
  const double beta_t = p.beta + p.omega * t;
  if (admissible) return soliton_from_profile(discrete_profile(nl, p.alpha, grid), grid, beta_t);

  // Off-vertex profile phi(|x - b|) evaluated in sorted order.
  std::vector<std::pair<double, int>> order(grid.samples());
  for (int m = 0; m < grid.samples(); ++m) order[m] = {std::abs(grid.x(m) - p.b), m};
  std::sort(order.begin(), order.end());
  std::vector<double> xs(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) xs[i] = order[i].first;
  const auto vals = profile_values(nl, p.alpha, xs);
  GraphFunction u(grid, 1);
  for (std::size_t i = 0; i < order.size(); ++i) {
    const int m = order[i].second;
    const cplx ph = std::polar(1.0, -beta_t + 0.5 * p.v * grid.x(m));
    for (int e = 0; e < grid.n_edges(); ++e) u(e, 0, m) = ph * vals[i];
  }
  return u;
}

}  // namespace starwave
