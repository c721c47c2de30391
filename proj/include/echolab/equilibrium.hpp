#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <fstream>
#include <functional>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "echolab/error.hpp"
#include "echolab/fft.hpp"
#include "echolab/grid.hpp"

namespace echolab {

enum class EquilibriumKind { gaussian, two_stream, custom };

inline const char* to_string(EquilibriumKind kind) {
  switch (kind) {
    case EquilibriumKind::gaussian: return "gaussian";
    case EquilibriumKind::two_stream: return "two_stream";
    case EquilibriumKind::custom: return "custom";
  }
  return "unknown";
}

// Background distribution mu(v), held through its Fourier transform
// mu_hat(eta) = int mu(v) exp(-i eta v) dv, with |mu_hat(eta)| <= c0 exp(-theta0 |eta|).
class Equilibrium {
 public:
  using Transform = std::function<cplx(double)>;

  static Equilibrium gaussian(double theta0 = 2.0) {
    check_theta0(theta0);
    Equilibrium eq(EquilibriumKind::gaussian, theta0);
    eq.c0_ = std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * theta0 * theta0);
    eq.fn_ = [](double eta) { return cplx(std::sqrt(2.0 * std::numbers::pi) * std::exp(-0.5 * eta * eta), 0.0); };
    return eq;
  }

  // mu(v) = (exp(-(v-a)^2/2) + exp(-(v+a)^2/2)) / 2
  static Equilibrium two_stream(double a, double theta0 = 2.0) {
    check_theta0(theta0);
    if (!std::isfinite(a)) throw Error(ErrorKind::validation, "two-stream separation must be finite", "a");
    Equilibrium eq(EquilibriumKind::two_stream, theta0);
    eq.separation_ = a;
    eq.c0_ = std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * theta0 * theta0);
    eq.fn_ = [a](double eta) {
      return cplx(std::sqrt(2.0 * std::numbers::pi) * std::exp(-0.5 * eta * eta) * std::cos(a * eta), 0.0);
    };
    return eq;
  }

  // Arbitrary transform with caller-supplied analyticity constants.
  static Equilibrium custom(Transform fn, double c0, double theta0) {
    check_theta0(theta0);
    if (!(c0 >= 0.0)) throw Error(ErrorKind::validation, "c0 must be nonnegative", "c0");
    Equilibrium eq(EquilibriumKind::custom, theta0);
    eq.c0_ = c0;
    eq.fn_ = std::move(fn);
    return eq;
  }

  static Equilibrium zero(double theta0 = 2.0) {
    return custom([](double) { return cplx{}; }, 0.0, theta0);
  }

  // Sampled transform, linearly interpolated, zero outside the table, and
  // symmetrized as (g(eta) + conj(g(-eta))) / 2. c0 is the smallest constant
  // satisfying the bound on the samples.
  static Equilibrium table(std::vector<double> eta, std::vector<cplx> values, double theta0 = 1.0) {
    check_theta0(theta0);
    if (eta.size() != values.size() || eta.size() < 2)
      throw Error(ErrorKind::validation, "table needs at least two (eta, value) rows", "path");
    std::vector<std::size_t> order(eta.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return eta[a] < eta[b]; });
    std::vector<double> xs;
    std::vector<cplx> ys;
    for (auto i : order) {
      if (!std::isfinite(eta[i]) || !std::isfinite(values[i].real()) || !std::isfinite(values[i].imag()))
        throw Error(ErrorKind::validation, "table contains non-finite entries", "path");
      if (!xs.empty() && eta[i] <= xs.back())
        throw Error(ErrorKind::validation, "table eta values must be distinct", "path");
      xs.push_back(eta[i]);
      ys.push_back(values[i]);
    }
    auto raw = [xs, ys](double x) -> cplx {
      if (x < xs.front() || x > xs.back()) return {};
      auto it = std::upper_bound(xs.begin(), xs.end(), x);
      if (it == xs.end()) return ys.back();
      std::size_t hi = static_cast<std::size_t>(it - xs.begin());
      std::size_t lo = hi - 1;
      double a = (x - xs[lo]) / (xs[hi] - xs[lo]);
      return (1.0 - a) * ys[lo] + a * ys[hi];
    };
    Equilibrium eq(EquilibriumKind::custom, theta0);
    eq.fn_ = [raw](double x) { return 0.5 * (raw(x) + std::conj(raw(-x))); };
    double c0 = 0.0;
    for (double x : xs) {
      c0 = std::max(c0, std::abs(eq.fn_(x)) * std::exp(theta0 * std::abs(x)));
      c0 = std::max(c0, std::abs(eq.fn_(-x)) * std::exp(theta0 * std::abs(x)));
    }
    eq.c0_ = c0 * (1.0 + 1e-12);
    return eq;
  }

  // CSV with header and columns eta, re_mu_hat, im_mu_hat.
  static Equilibrium load_table(const std::string& path, double theta0 = 1.0) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::io, "cannot open equilibrium table: " + path, "path");
    std::string line;
    std::vector<double> eta;
    std::vector<cplx> values;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty() || line[0] == '#') continue;
      std::stringstream ss(line);
      std::string cell[3];
      int n = 0;
      while (n < 3 && std::getline(ss, cell[n], ',')) ++n;
      if (n < 3)
        throw Error(ErrorKind::parse, path + ":" + std::to_string(lineno) + ": expected 3 columns", "path");
      try {
        double x = std::stod(cell[0]);
        cplx v(std::stod(cell[1]), std::stod(cell[2]));
        eta.push_back(x);
        values.push_back(v);
      } catch (const std::invalid_argument&) {
        if (eta.empty() && lineno == 1) continue;  // header
        throw Error(ErrorKind::parse, path + ":" + std::to_string(lineno) + ": not a number", "path");
      }
    }
    return table(std::move(eta), std::move(values), theta0);
  }

  cplx mu_hat(double eta) const { return fn_(eta); }
  cplx dv_mu_hat(double eta) const { return cplx(0.0, eta) * fn_(eta); }

  double c0() const { return c0_; }
  double theta0() const { return theta0_; }
  EquilibriumKind kind() const { return kind_; }
  double separation() const { return separation_; }

  // mu_hat and its first two derivatives at eta = 0.
  std::array<cplx, 3> derivatives_at_zero() const {
    if (kind_ == EquilibriumKind::gaussian) {
      double s = std::sqrt(2.0 * std::numbers::pi);
      return {cplx(s), cplx(0.0), cplx(-s)};
    }
    if (kind_ == EquilibriumKind::two_stream) {
      double s = std::sqrt(2.0 * std::numbers::pi);
      return {cplx(s), cplx(0.0), cplx(-s * (1.0 + separation_ * separation_))};
    }
    const double h = 1e-3;
    cplx fm2 = fn_(-2 * h), fm1 = fn_(-h), f0 = fn_(0.0), fp1 = fn_(h), fp2 = fn_(2 * h);
    cplx d1 = (fm2 - 8.0 * fm1 + 8.0 * fp1 - fp2) / (12.0 * h);
    cplx d2 = (-fm2 + 16.0 * fm1 - 30.0 * f0 + 16.0 * fp1 - fp2) / (12.0 * h * h);
    return {f0, d1, d2};
  }

 private:
  Equilibrium(EquilibriumKind kind, double theta0) : kind_(kind), theta0_(theta0) {}

  static void check_theta0(double theta0) {
    if (!(theta0 > 0.0) || !std::isfinite(theta0))
      throw Error(ErrorKind::validation, "theta0 must be positive and finite", "theta0");
  }

  EquilibriumKind kind_;
  double c0_ = 0.0;
  double theta0_;
  double separation_ = 0.0;
  Transform fn_;
};

inline cplx dv_mu_hat(const Equilibrium& eq, double eta) { return eq.dv_mu_hat(eta); }

struct QuadratureSpec {
  double tol = 1e-10;
  double step = 0.0;     // 0 selects the step automatically
  double horizon = 0.0;  // 0 selects the truncation from the analyticity bound
};

// Samples of t mu_hat(k t) exp(c t) on [0, T] with Simpson weights, for
// evaluating the Laplace transform int_0^inf exp(-lambda t) t mu_hat(k t) dt
// along the vertical line Re(lambda) = -c.
class LaplaceLine {
 public:
  LaplaceLine(const Equilibrium& eq, int k, double c, double max_frequency, const QuadratureSpec& quad)
      : c_(c) {
    if (k == 0) throw Error(ErrorKind::validation, "spatial mode k must be nonzero", "k");
    const double ak = std::abs(static_cast<double>(k));
    const double a = eq.theta0() * ak - c;
    if (!(a > 0.0))
      throw Error(ErrorKind::divergence, "Re(lambda) <= -theta0*|k|: Laplace integral diverges", "lambda");
    const double c0 = std::max(eq.c0(), std::numeric_limits<double>::min());
    double T = quad.horizon;
    if (T <= 0.0) {
      T = 1.0 / a;
      while (c0 * T * std::exp(-a * T) / a >= quad.tol / 10.0) T *= 1.1;
    }
    horizon_ = T;
    tail_ = eq.c0() * std::exp(-a * T) * (T / a + 1.0 / (a * a));
    double h = quad.step;
    if (h <= 0.0)
      h = std::min({0.02 / ak, 0.05 / (1.0 + std::abs(max_frequency)), 0.05 / (1.0 + std::abs(c))});
    auto n = static_cast<std::size_t>(std::ceil(T / h));
    n = std::max<std::size_t>(4, (n + 3) / 4 * 4);
    step_ = T / static_cast<double>(n);
    g_.resize(n + 1);
    for (std::size_t j = 0; j <= n; ++j) {
      double t = step_ * static_cast<double>(j);
      g_[j] = std::exp(c * t) * t * eq.mu_hat(static_cast<double>(k) * t);
    }
  }

  // int_0^T exp(-(-c + i tau) t) t mu_hat(k t) dt by Simpson with the given
  // stride (1 = full grid, 2 = every other sample).
  cplx transform(double tau, std::size_t stride = 1) const {
    const std::size_t n = g_.size() - 1;
    const double h = step_ * static_cast<double>(stride);
    const cplx z = std::polar(1.0, -tau * h);
    cplx phase{1.0, 0.0};
    cplx acc{0.0, 0.0};
    std::size_t m = 0;
    for (std::size_t j = 0; j <= n; j += stride, ++m) {
      if ((m & 63u) == 0) phase = std::polar(1.0, -tau * step_ * static_cast<double>(j));
      double w = (j == 0 || j == n) ? 1.0 : ((m & 1u) ? 4.0 : 2.0);
      acc += w * g_[j] * phase;
      phase *= z;
    }
    return acc * (h / 3.0);
  }

  // Transform at tau_m = m * dtau for |m| <= M, dtau <= dtau_max and
  // M * dtau >= tau_max, from one zero-padded FFT. Entry i holds m = i - M.
  std::vector<cplx> transform_grid(double dtau_max, double tau_max, double& dtau) const {
    const std::size_t n = g_.size() - 1;
    const double need = 2.0 * std::numbers::pi / (dtau_max * step_);
    std::size_t size = 1;
    while (static_cast<double>(size) < need || size < 2 * (n + 1)) size *= 2;
    dtau = 2.0 * std::numbers::pi / (static_cast<double>(size) * step_);
    const auto half = static_cast<std::size_t>(std::ceil(tau_max / dtau - 1e-9));
    FftPlan fft(size, FFTW_FORWARD);
    auto buf = fft.data();
    std::fill(buf.begin(), buf.end(), cplx{});
    for (std::size_t j = 0; j <= n; ++j) {
      double w = (j == 0 || j == n) ? 1.0 : ((j & 1u) ? 4.0 : 2.0);
      buf[j] = w * (step_ / 3.0) * g_[j];
    }
    fft.execute();
    std::vector<cplx> out(2 * half + 1);
    for (std::size_t i = 0; i < out.size(); ++i) {
      auto m = static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(half);
      out[i] = buf[static_cast<std::size_t>(m >= 0 ? m : static_cast<std::ptrdiff_t>(size) + m)];
    }
    return out;
  }

  double shift() const { return c_; }
  double horizon() const { return horizon_; }
  double step() const { return step_; }
  double tail_bound() const { return tail_; }

 private:
  double c_;
  double horizon_ = 0.0;
  double step_ = 0.0;
  double tail_ = 0.0;
  std::vector<cplx> g_;
};

struct SymbolValue {
  cplx value;
  double tail_bound = 0.0;
  double error_estimate = 0.0;
  double horizon = 0.0;
  double step = 0.0;
};

// D(lambda, k) = 1 + int_0^inf exp(-lambda t) t mu_hat(k t) dt.
inline SymbolValue laplace_symbol_detail(const Equilibrium& eq, int k, cplx lambda, const QuadratureSpec& quad = {}) {
  if (k == 0) throw Error(ErrorKind::validation, "spatial mode k must be nonzero", "k");
  if (!(lambda.real() > -eq.theta0() * std::abs(k)))
    throw Error(ErrorKind::divergence, "Re(lambda) <= -theta0*|k|: Laplace integral diverges", "lambda");
  QuadratureSpec q = quad;
  const int attempts = quad.step > 0.0 ? 1 : 6;
  for (int attempt = 0; attempt < attempts; ++attempt) {
    LaplaceLine line(eq, k, -lambda.real(), std::abs(lambda.imag()), q);
    cplx fine = line.transform(lambda.imag(), 1);
    cplx coarse = line.transform(lambda.imag(), 2);
    double err = std::abs(fine - coarse) / 15.0;
    if (err <= quad.tol) return {1.0 + fine, line.tail_bound(), err, line.horizon(), line.step()};
    q.step = line.step() / 2.0;
  }
  throw Error(ErrorKind::accuracy, "requested tolerance not reached by the quadrature", "tol");
}

inline cplx laplace_symbol(const Equilibrium& eq, int k, cplx lambda, const QuadratureSpec& quad = {}) {
  return laplace_symbol_detail(eq, k, lambda, quad).value;
}

struct MarginGrid {
  double tau_step = 0.05;
  double resolution_tol = 0.1;  // warn if adjacent samples differ by more
  int k_min = 1;
  bool refine = true;
  QuadratureSpec quad{};
};

struct ModeMargin {
  int k = 0;
  double min_modulus = 0.0;
  double tau_at_min = 0.0;
  int winding = 0;  // winding of D(i tau, k) along the sampled segment
  double max_jump = 0.0;
};

struct MarginReport {
  double margin = std::numeric_limits<double>::infinity();
  int k_at_min = 0;
  double tau_at_min = 0.0;
  bool resolved = true;
  double max_jump = 0.0;
  std::size_t samples = 0;
  std::vector<ModeMargin> per_mode;

  int unstable_modes() const {
    int n = 0;
    for (const auto& m : per_mode) n += m.winding != 0;
    return n;
  }
};

// Minimum of |D(i tau, k)| over k_min <= k <= k_max and |tau| <= tau_max.
// Negative k mirror positive k through D(i tau, -k) = conj D(-i tau, k).
inline MarginReport penrose_margin(const Equilibrium& eq, int k_max, double tau_max, const MarginGrid& grid = {}) {
  if (k_max < 1) throw Error(ErrorKind::validation, "k_max must be at least 1", "k_max");
  if (grid.k_min < 1 || grid.k_min > k_max) throw Error(ErrorKind::validation, "k_min out of range", "k_min");
  if (!(tau_max > 0.0)) throw Error(ErrorKind::validation, "tau_max must be positive", "tau_max");
  if (!(grid.tau_step > 0.0)) throw Error(ErrorKind::validation, "tau_step must be positive", "tau_step");
  MarginReport report;
  auto cells = static_cast<std::size_t>(std::ceil(2.0 * tau_max / grid.tau_step));
  const double dtau = 2.0 * tau_max / static_cast<double>(cells);
  for (int k = grid.k_min; k <= k_max; ++k) {
    LaplaceLine line(eq, k, 0.0, tau_max + dtau, grid.quad);
    auto modulus = [&](double tau) { return std::abs(1.0 + line.transform(tau)); };
    ModeMargin mode;
    mode.k = k;
    mode.min_modulus = std::numeric_limits<double>::infinity();
    double prev_mod = 0.0;
    double turned = 0.0;
    cplx prev{};
    std::size_t at = 0;
    for (std::size_t i = 0; i <= cells; ++i) {
      double tau = -tau_max + dtau * static_cast<double>(i);
      cplx d = 1.0 + line.transform(tau);
      double m = std::abs(d);
      if (i > 0) {
        mode.max_jump = std::max(mode.max_jump, std::abs(m - prev_mod));
        turned += std::arg(d / prev);
      }
      if (m < mode.min_modulus) {
        mode.min_modulus = m;
        mode.tau_at_min = tau;
        at = i;
      }
      prev = d;
      prev_mod = m;
    }
    report.samples += cells + 1;
    mode.winding = static_cast<int>(std::lround(turned / (2.0 * std::numbers::pi)));
    if (grid.refine) {
      double lo = -tau_max + dtau * static_cast<double>(at == 0 ? 0 : at - 1);
      double hi = -tau_max + dtau * static_cast<double>(std::min(at + 1, cells));
      const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
      double x1 = hi - phi * (hi - lo), x2 = lo + phi * (hi - lo);
      double f1 = modulus(x1), f2 = modulus(x2);
      for (int it = 0; it < 60 && hi - lo > 1e-10; ++it) {
        if (f1 < f2) {
          hi = x2; x2 = x1; f2 = f1; x1 = hi - phi * (hi - lo); f1 = modulus(x1);
        } else {
          lo = x1; x1 = x2; f1 = f2; x2 = lo + phi * (hi - lo); f2 = modulus(x2);
        }
      }
      double x = 0.5 * (lo + hi);
      double f = modulus(x);
      if (f < mode.min_modulus) {
        mode.min_modulus = f;
        mode.tau_at_min = x;
      }
    }
    report.max_jump = std::max(report.max_jump, mode.max_jump);
    if (mode.min_modulus < report.margin) {
      report.margin = mode.min_modulus;
      report.k_at_min = k;
      report.tau_at_min = mode.tau_at_min;
    }
    report.per_mode.push_back(mode);
  }
  report.resolved = report.max_jump <= grid.resolution_tol;
  return report;
}

}  // namespace echolab
