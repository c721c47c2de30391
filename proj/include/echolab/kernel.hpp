#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "echolab/equilibrium.hpp"
#include "echolab/error.hpp"
#include "echolab/fit.hpp"
#include "echolab/grid.hpp"

namespace echolab {

// Samples of the resolvent G_k(t) of rho + (t mu_hat(k t)) * rho = S.
struct ResolventKernel {
  int k = 0;
  UniformGrid t_grid;
  std::vector<cplx> values;
  double fitted_c1 = 0.0;
  double fitted_theta1 = 0.0;
  double residual = 0.0;

  double rate() const { return fitted_theta1 * std::abs(k); }
  double envelope(double t) const { return fitted_c1 * std::exp(-rate() * t); }
};

struct EnvelopeFit {
  double c1 = 0.0;
  double theta1 = 0.0;
};

// Upper envelope c1 exp(-theta1 |k| t). The rate comes from a least-squares
// fit of the log of the running future maximum, c1 is then the smallest
// constant that bounds every sample.
inline EnvelopeFit fit_envelope(int k, const UniformGrid& grid, std::span<const cplx> values) {
  const std::size_t n = values.size();
  std::vector<double> future(n);
  double m = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    m = std::max(m, std::abs(values[i]));
    future[i] = m;
  }
  EnvelopeFit fit;
  if (n == 0 || future[0] == 0.0) return fit;
  std::size_t peak = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (std::abs(values[i]) > std::abs(values[peak])) peak = i;
  const double floor = 1e-10 * future[peak];
  std::vector<double> x, y;
  for (std::size_t i = peak; i < n; ++i) {
    if (future[i] <= floor || future[i] < std::numeric_limits<double>::min()) break;
    x.push_back(grid[i]);
    y.push_back(std::log(future[i]));
  }
  if (x.size() >= 2) {
    double slope = least_squares_line(x, y).slope;
    fit.theta1 = std::max(0.0, -slope) / std::max(1, std::abs(k));
  }
  const double rate = fit.theta1 * std::abs(k);
  for (std::size_t i = 0; i < n; ++i) fit.c1 = std::max(fit.c1, std::abs(values[i]) * std::exp(rate * grid[i]));
  fit.c1 *= 1.0 + 1e-12;
  return fit;
}

// Forward substitution for G + A * G = -A with A(t) = t mu_hat(k t) and
// fourth-order Gregory convolution weights. A(0) = 0 makes every step explicit.
inline ResolventKernel kernel_volterra(const Equilibrium& eq, int k, const UniformGrid& t_grid,
                                       double growth_bound = 1e6) {
  if (k == 0) throw Error(ErrorKind::validation, "spatial mode k must be nonzero", "k");
  if (t_grid.empty()) throw Error(ErrorKind::validation, "time grid is empty", "t_grid");
  const std::size_t n = t_grid.size;
  const double dt = t_grid.step;
  std::vector<cplx> a(n);
  double sup_a = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double t = t_grid[i];
    a[i] = t * eq.mu_hat(static_cast<double>(k) * t);
    sup_a = std::max(sup_a, std::abs(a[i]));
  }
  ResolventKernel kern;
  kern.k = k;
  kern.t_grid = t_grid;
  kern.values.assign(n, cplx{});
  auto& g = kern.values;
  const double limit = growth_bound * std::max(1.0, sup_a);
  for (std::size_t i = 1; i < n; ++i) {
    g[i] = -a[i] - gregory::convolve_at(a, g, i, dt);
    if (!std::isfinite(g[i].real()) || !std::isfinite(g[i].imag()) || std::abs(g[i]) > limit)
      throw Error(ErrorKind::instability,
                  "Volterra iteration exceeded its growth bound (time step too large or equilibrium unstable)",
                  "dt");
  }
  for (std::size_t i = 0; i < n; ++i)
    kern.residual = std::max(kern.residual, std::abs(g[i] + gregory::convolve_at(a, g, i, dt) + a[i]));
  EnvelopeFit fit = fit_envelope(k, t_grid, g);
  kern.fitted_c1 = fit.c1;
  kern.fitted_theta1 = fit.theta1;
  return kern;
}

// rho(t) = S(t) + int_0^t G(t-s) S(s) ds on the kernel's grid.
inline std::vector<cplx> apply_resolvent(const ResolventKernel& kern, std::span<const cplx> source) {
  if (source.size() != kern.values.size())
    throw Error(ErrorKind::grid_mismatch, "source history length does not match the kernel grid");
  std::vector<cplx> rho(source.size());
  const double dt = kern.t_grid.step;
  for (std::size_t i = 0; i < source.size(); ++i)
    rho[i] = source[i] + gregory::convolve_at(kern.values, source, i, dt);
  return rho;
}

inline std::vector<cplx> apply_resolvent(const ResolventKernel& kern, const UniformGrid& grid,
                                         std::span<const cplx> source) {
  require_same_grid(kern.t_grid, grid, "apply_resolvent");
  return apply_resolvent(kern, source);
}

struct ContourSpec {
  double theta1_prime = 0.0;  // 0 selects min(theta0/2, 0.5)
  double lambda_max = 0.0;    // 0 selects the truncation from the tail estimate
  double dtau = 0.02;
  double tol = 1e-8;
  double kappa_floor = 1e-3;
  int max_backoff = 6;
  int max_doublings = 5;
};

// Inverse Laplace transform of -L/(1+L), L = Laplace[t mu_hat(k t)], along
// Re(lambda) = -theta1' |k|. The leading 1/lambda^2..1/lambda^4 behaviour is
// removed analytically and the remainder is integrated by the trapezoid rule.
class ContourInverter {
 public:
  ContourInverter(const Equilibrium& eq, int k, const ContourSpec& spec = {}) : k_(k) {
    if (k == 0) throw Error(ErrorKind::validation, "spatial mode k must be nonzero", "k");
    const double ak = std::abs(static_cast<double>(k));
    double theta = spec.theta1_prime > 0.0 ? spec.theta1_prime : std::min(eq.theta0() / 2.0, 0.5);
    if (!(theta < eq.theta0()))
      throw Error(ErrorKind::validation, "contour shift must stay below theta0", "theta1_prime");
    auto d = eq.derivatives_at_zero();
    const double kd = static_cast<double>(k);
    const cplx h1 = d[0], h2 = 2.0 * kd * d[1], h3 = 3.0 * kd * kd * d[2];
    const cplx g2 = -h1, g3 = -h2, g4 = h1 * h1 - h3;

    for (int attempt = 0;; ++attempt) {
      if (attempt > spec.max_backoff)
        throw Error(ErrorKind::contour_unsafe,
                    "no safe contour line: 1 + L vanishes or winds on every tried line", "theta1_prime");
      c_ = theta * ak;
      b_ = c_ + ak;
      q2_ = g2;
      q3_ = g3 + 2.0 * b_ * q2_;
      q4_ = g4 + 3.0 * b_ * q3_ - 3.0 * b_ * b_ * q2_;
      double lam = spec.lambda_max > 0.0 ? spec.lambda_max : 20.0 * (1.0 + ak);
      bool safe = true;
      for (int doubling = 0;; ++doubling) {
        sample(eq, lam, spec);
        if (min_symbol_ < spec.kappa_floor || winding_ != 0) {
          safe = false;
          break;
        }
        if (spec.lambda_max > 0.0 || tail_ <= spec.tol) break;
        if (doubling >= spec.max_doublings)
          throw Error(ErrorKind::accuracy, "contour truncation tail above tolerance", "lambda_max");
        lam *= 2.0;
      }
      if (safe) {
        theta1_prime_ = theta;
        return;
      }
      theta /= 2.0;
    }
  }

  cplx operator()(double t) const {
    const double e = std::exp(-b_ * t);
    cplx g = q2_ * t * e + q3_ * (t * t / 2.0) * e + q4_ * (t * t * t / 6.0) * e;
    const std::size_t n = remainder_.size();
    const cplx z = std::polar(1.0, dtau_ * t);
    cplx phase{};
    cplx acc{};
    for (std::size_t m = 0; m < n; ++m) {
      if ((m & 63u) == 0) phase = std::polar(1.0, (-lambda_ + dtau_ * static_cast<double>(m)) * t);
      double w = (m == 0 || m + 1 == n) ? 0.5 : 1.0;
      acc += w * remainder_[m] * phase;
      phase *= z;
    }
    return g + std::exp(-c_ * t) * dtau_ / (2.0 * std::numbers::pi) * acc;
  }

  int k() const { return k_; }
  double shift() const { return c_; }
  double theta1_prime() const { return theta1_prime_; }
  double lambda_max() const { return lambda_; }
  double min_symbol_modulus() const { return min_symbol_; }
  double tail_bound(double t) const { return tail_ * std::exp(-c_ * t); }

 private:
  void sample(const Equilibrium& eq, double lam, const ContourSpec& spec) {
    QuadratureSpec quad;
    quad.tol = spec.tol * 1e-2;
    LaplaceLine line(eq, k_, c_, lam, quad);
    std::vector<cplx> l = line.transform_grid(spec.dtau, lam, dtau_);
    const std::size_t cells = l.size() - 1;
    lambda_ = dtau_ * static_cast<double>(cells / 2);
    remainder_.assign(cells + 1, cplx{});
    min_symbol_ = std::numeric_limits<double>::infinity();
    double turned = 0.0;
    cplx prev{};
    for (std::size_t m = 0; m <= cells; ++m) {
      const double tau = -lambda_ + dtau_ * static_cast<double>(m);
      const cplx lambda(-c_, tau);
      const cplx d = 1.0 + l[m];
      min_symbol_ = std::min(min_symbol_, std::abs(d));
      if (m > 0) turned += std::arg(d / prev);
      prev = d;
      const cplx s = lambda + b_;
      const cplx s2 = s * s;
      const cplx q = q2_ / s2 + q3_ / (s2 * s) + q4_ / (s2 * s2);
      remainder_[m] = -l[m] / d - q;
    }
    winding_ = static_cast<int>(std::lround(turned / (2.0 * std::numbers::pi)));
    const double edge = std::max(std::abs(remainder_.front()), std::abs(remainder_.back()));
    tail_ = edge * lambda_ / 4.0 / std::numbers::pi;
  }

  int k_;
  double c_ = 0.0;
  double b_ = 0.0;
  double theta1_prime_ = 0.0;
  double lambda_ = 0.0;
  double dtau_ = 0.0;
  double min_symbol_ = 0.0;
  int winding_ = 0;
  double tail_ = 0.0;
  cplx q2_{}, q3_{}, q4_{};
  std::vector<cplx> remainder_;
};

inline cplx kernel_contour(const Equilibrium& eq, int k, double t, const ContourSpec& spec = {}) {
  return ContourInverter(eq, k, spec)(t);
}

}  // namespace echolab
