#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "echolab/error.hpp"

namespace echolab {

using cplx = std::complex<double>;

struct UniformGrid {
  double start = 0.0;
  double step = 1.0;
  std::size_t size = 0;

  double operator[](std::size_t i) const { return start + step * static_cast<double>(i); }
  double back() const { return (*this)[size == 0 ? 0 : size - 1]; }
  bool empty() const { return size == 0; }

  // Closed grid lo, lo+step, ..., hi. hi - lo must be a multiple of step.
  static UniformGrid closed(double lo, double hi, double step) {
    if (!(step > 0.0)) throw Error(ErrorKind::validation, "grid step must be positive", "step");
    if (!(hi >= lo)) throw Error(ErrorKind::validation, "grid upper end below lower end", "range");
    double cells = (hi - lo) / step;
    auto n = static_cast<std::size_t>(std::llround(cells));
    if (std::abs(cells - static_cast<double>(n)) > 1e-9 * std::max(1.0, cells))
      throw Error(ErrorKind::validation, "grid range is not a multiple of the step", "step");
    return {lo, step, n + 1};
  }

  // Time grid 0, dt, ..., horizon.
  static UniformGrid time(double dt, double horizon) { return closed(0.0, horizon, dt); }

  bool same_as(const UniformGrid& other) const {
    return size == other.size && std::abs(start - other.start) <= 1e-12 * std::max(1.0, std::abs(start)) &&
           std::abs(step - other.step) <= 1e-12 * step;
  }

  std::optional<std::size_t> index_of(double x, double rel_tol = 1e-9) const {
    if (size == 0) return std::nullopt;
    double pos = (x - start) / step;
    double r = std::round(pos);
    if (std::abs(pos - r) > rel_tol * std::max(1.0, std::abs(pos))) return std::nullopt;
    if (r < 0.0 || r > static_cast<double>(size - 1)) return std::nullopt;
    return static_cast<std::size_t>(r);
  }
};

inline void require_same_grid(const UniformGrid& a, const UniformGrid& b, const std::string& what) {
  if (!a.same_as(b)) throw Error(ErrorKind::grid_mismatch, what + ": sample grid does not match");
}

// Gregory end-corrected quadrature on a uniform grid, fourth order.
// Endpoint corrections to the trapezoid-free sum of all samples.
namespace gregory {

inline constexpr std::array<double, 3> corrections{-5.0 / 8.0, 1.0 / 6.0, -1.0 / 24.0};

inline double correction(std::size_t i) { return i < 3 ? corrections[i] : 0.0; }

// Weight of sample j in the integral over [0, n*dt], in units of dt.
inline double weight(std::size_t n, std::size_t j) {
  if (n == 0) return 0.0;
  if (n == 1) return 0.5;
  return 1.0 + correction(j) + correction(n - j);
}

inline std::vector<double> weights(std::size_t n) {
  std::vector<double> w(n + 1);
  for (std::size_t j = 0; j <= n; ++j) w[j] = weight(n, j);
  return w;
}

template <class T>
T integrate(std::span<const T> f, double dt) {
  T acc{};
  if (f.size() < 2) return acc;
  std::size_t n = f.size() - 1;
  for (std::size_t j = 0; j <= n; ++j) acc += weight(n, j) * f[j];
  return acc * dt;
}

// dt * sum_{j=0}^{n} w_j^{(n)} a[n-j] b[j]
inline cplx convolve_at(std::span<const cplx> a, std::span<const cplx> b, std::size_t n, double dt) {
  if (n == 0) return {0.0, 0.0};
  if (n == 1) return 0.5 * dt * (a[1] * b[0] + a[0] * b[1]);
  cplx acc{0.0, 0.0};
  for (std::size_t j = 0; j <= n; ++j) acc += a[n - j] * b[j];
  for (std::size_t i = 0; i < 3; ++i) {
    acc += corrections[i] * (a[n - i] * b[i] + a[i] * b[n - i]);
  }
  return acc * dt;
}

}  // namespace gregory

// Running integral I(t_n) = int_0^{t_n} g dt of a vector-valued sample stream,
// updated in O(width) per pushed time level.
class RunningIntegral {
 public:
  RunningIntegral(std::size_t width, double dt)
      : dt_(dt), sum_(width), head_(3, std::vector<cplx>(width)), tail_(3, std::vector<cplx>(width)) {}

  std::size_t width() const { return sum_.size(); }
  std::size_t levels() const { return count_; }

  void push(std::span<const cplx> g) {
    const std::size_t w = width();
    if (count_ < 3) std::copy(g.begin(), g.end(), head_[count_].begin());
    std::rotate(tail_.rbegin(), tail_.rbegin() + 1, tail_.rend());
    std::copy(g.begin(), g.end(), tail_[0].begin());
    for (std::size_t j = 0; j < w; ++j) sum_[j] += g[j];
    ++count_;
  }

  // Writes the integral up to the most recent pushed level into out.
  void value(std::span<cplx> out) const {
    const std::size_t w = width();
    if (count_ <= 1) {
      std::fill(out.begin(), out.end(), cplx{});
      return;
    }
    if (count_ == 2) {
      for (std::size_t j = 0; j < w; ++j) out[j] = 0.5 * dt_ * (head_[0][j] + head_[1][j]);
      return;
    }
    const auto& c = gregory::corrections;
    for (std::size_t j = 0; j < w; ++j) {
      cplx acc = sum_[j];
      for (std::size_t i = 0; i < 3; ++i) acc += c[i] * (head_[i][j] + tail_[i][j]);
      out[j] = acc * dt_;
    }
  }

 private:
  double dt_;
  std::size_t count_ = 0;
  std::vector<cplx> sum_;
  std::vector<std::vector<cplx>> head_;
  std::vector<std::vector<cplx>> tail_;
};

// Lagrange interpolation on a uniform grid with an even number of points
// centred on the target. Samples outside the grid are treated as zero.
inline constexpr int max_stencil = 12;
inline constexpr int default_stencil = 12;

struct Stencil {
  std::ptrdiff_t first = 0;
  int width = 4;
  std::array<double, max_stencil> w{};
};

inline Stencil lagrange_stencil(double position, int width = default_stencil) {
  if (width < 2 || width > max_stencil || width % 2 != 0)
    throw Error(ErrorKind::validation, "stencil width must be even and at most 12", "width");
  const double fl = std::floor(position);
  const double a = position - fl;
  const int half = width / 2;
  Stencil s;
  s.first = static_cast<std::ptrdiff_t>(fl) - half + 1;
  s.width = width;
  for (int i = 0; i < width; ++i) {
    const double xi = static_cast<double>(i - half + 1);
    double num = 1.0, den = 1.0;
    for (int m = 0; m < width; ++m) {
      if (m == i) continue;
      const double xm = static_cast<double>(m - half + 1);
      num *= a - xm;
      den *= xi - xm;
    }
    s.w[static_cast<std::size_t>(i)] = num / den;
  }
  return s;
}

inline Stencil cubic_stencil(double position) { return lagrange_stencil(position, 4); }

inline bool in_range(const UniformGrid& g, double x) {
  const double eps = 1e-12 * g.step;
  return x >= g.start - eps && x <= g.back() + eps;
}

inline cplx interpolate(std::span<const cplx> v, const UniformGrid& g, double x, int width = default_stencil) {
  if (!in_range(g, x)) return {0.0, 0.0};
  Stencil s = lagrange_stencil((x - g.start) / g.step, width);
  const auto n = static_cast<std::ptrdiff_t>(v.size());
  cplx acc{0.0, 0.0};
  for (std::ptrdiff_t i = 0; i < s.width; ++i) {
    std::ptrdiff_t idx = s.first + i;
    if (idx >= 0 && idx < n) acc += s.w[static_cast<std::size_t>(i)] * v[static_cast<std::size_t>(idx)];
  }
  return acc;
}

// out[j] = v(x_j + shift) for every grid point; returns how many targets fell
// outside the grid.
inline std::size_t shift_interpolate(std::span<const cplx> v, const UniformGrid& g, double shift,
                                     std::span<cplx> out, int width = default_stencil) {
  const auto n = static_cast<std::ptrdiff_t>(g.size);
  const double offset = shift / g.step;
  Stencil s = lagrange_stencil(offset, width);
  const double lo = -offset - 1e-12;
  const double hi = static_cast<double>(n - 1) - offset + 1e-12;
  const std::ptrdiff_t w = s.width;
  std::size_t outside = 0;
  for (std::ptrdiff_t j = 0; j < n; ++j) {
    const double jd = static_cast<double>(j);
    if (jd < lo || jd > hi) {
      out[static_cast<std::size_t>(j)] = {0.0, 0.0};
      ++outside;
      continue;
    }
    const std::ptrdiff_t b = j + s.first;
    cplx acc{0.0, 0.0};
    if (b >= 0 && b + w <= n) {
      const cplx* p = v.data() + b;
      for (std::ptrdiff_t i = 0; i < w; ++i) acc += s.w[static_cast<std::size_t>(i)] * p[i];
    } else {
      for (std::ptrdiff_t i = 0; i < w; ++i) {
        std::ptrdiff_t idx = b + i;
        if (idx >= 0 && idx < n) acc += s.w[static_cast<std::size_t>(i)] * v[static_cast<std::size_t>(idx)];
      }
    }
    out[static_cast<std::size_t>(j)] = acc;
  }
  return outside;
}

inline double sup_abs(std::span<const cplx> v) {
  double m = 0.0;
  for (const auto& z : v) m = std::max(m, std::abs(z));
  return m;
}

// Japanese bracket <a, b, ...> = sqrt(1 + a^2 + b^2 + ...).
template <class... T>
double bracket(T... x) {
  return std::sqrt(1.0 + (0.0 + ... + (static_cast<double>(x) * static_cast<double>(x))));
}

}  // namespace echolab
