#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "echolab/equilibrium.hpp"
#include "echolab/error.hpp"
#include "echolab/fft.hpp"
#include "echolab/grid.hpp"
#include "echolab/initial_data.hpp"

namespace echolab {

// f(t, k', eta') on spatial rows k' = mode_step * m, |m| <= m_max, and the eta' grid.
class SpectralState {
 public:
  SpectralState() = default;
  SpectralState(int mode_step, int m_max, UniformGrid etap)
      : mode_step_(mode_step), m_max_(m_max), etap_(etap),
        values_(static_cast<std::size_t>(2 * m_max + 1) * etap.size) {
    if (mode_step < 1) throw Error(ErrorKind::validation, "mode step must be positive", "K");
    if (m_max < 0) throw Error(ErrorKind::validation, "m_max must be nonnegative", "m_max");
  }

  int mode_step() const { return mode_step_; }
  int m_max() const { return m_max_; }
  std::size_t rows() const { return static_cast<std::size_t>(2 * m_max_ + 1); }
  const UniformGrid& etap() const { return etap_; }
  int index(std::size_t row) const { return static_cast<int>(row) - m_max_; }
  int wavenumber(std::size_t row) const { return mode_step_ * index(row); }
  std::size_t row_of(int m) const { return static_cast<std::size_t>(m + m_max_); }
  std::size_t zero_column() const { return etap_.size / 2; }

  std::span<cplx> row(std::size_t r) { return {values_.data() + r * etap_.size, etap_.size}; }
  std::span<const cplx> row(std::size_t r) const { return {values_.data() + r * etap_.size, etap_.size}; }
  std::vector<cplx>& values() { return values_; }
  const std::vector<cplx>& values() const { return values_; }

  double time = 0.0;

 private:
  int mode_step_ = 1;
  int m_max_ = 0;
  UniformGrid etap_;
  std::vector<cplx> values_;
};

// f(0, K k, eta') = eps * f0_{k,eta}(eta' - L eta).
inline SpectralState init_from_modes(const InitialData& data, const CascadeConfig& cfg, int m_max) {
  SpectralState state(cfg.K, m_max, cfg.etap);
  for (const auto& m : data.modes()) {
    if (std::abs(m.k) > m_max)
      throw Error(ErrorKind::grid_coverage, "spatial mode " + std::to_string(m.k) + " outside the direct-solver grid",
                  "m_max");
    if (std::abs(static_cast<double>(cfg.L * m.eta)) > cfg.etap.back())
      throw Error(ErrorKind::grid_coverage, "profile centre outside the eta' grid", "etap_range");
    auto row = state.row(state.row_of(m.k));
    for (std::size_t j = 0; j < cfg.etap.size; ++j)
      row[j] += cfg.epsilon * InitialData::profile(m, cfg.etap[j] - cfg.L * m.eta, cfg.lambda0);
  }
  return state;
}

inline std::vector<cplx> field_from_state(const SpectralState& state) {
  std::vector<cplx> e(state.rows());
  const std::size_t z = state.zero_column();
  for (std::size_t r = 0; r < state.rows(); ++r) {
    int k = state.wavenumber(r);
    if (k != 0) e[r] = state.row(r)[z] / cplx(0.0, static_cast<double>(k));
  }
  return e;
}

enum class TransportScheme { spectral, lagrange, cubic };

inline constexpr int lagrange_half_width = 6;

// Shifts profiles g(eta') -> g(eta' + s) with zero inflow. Grid-multiple shifts
// move indices. Other shifts use 12-point Lagrange interpolation, band-limited
// interpolation on a zero-padded FFT, or cubic interpolation.
class Transport {
 public:
  Transport(std::size_t n, double step, TransportScheme scheme) : n_(n), step_(step), scheme_(scheme) {
    grid_ = {0.0, step, n};
    if (scheme != TransportScheme::spectral) return;
    std::size_t size = 1;
    while (size < 2 * n) size *= 2;
    forward_ = std::make_unique<FftPlan>(size, FFTW_FORWARD);
    backward_ = std::make_unique<FftPlan>(size, FFTW_BACKWARD);
    omega_.resize(size);
    for (std::size_t q = 0; q < size; ++q) {
      double signed_q = q <= size / 2 ? static_cast<double>(q) : static_cast<double>(q) - static_cast<double>(size);
      omega_[q] = 2.0 * std::numbers::pi * signed_q / (static_cast<double>(size) * step);
    }
  }

  void shift(std::span<cplx> g, double s) {
    const double cells = s / step_;
    const double r = std::round(cells);
    if (std::abs(cells - r) <= 1e-9 * std::max(1.0, std::abs(cells))) {
      shift_index(g, static_cast<std::ptrdiff_t>(r));
    } else if (scheme_ == TransportScheme::cubic) {
      std::vector<cplx> tmp(g.begin(), g.end());
      shift_interpolate(tmp, grid_, s, g, 4);
    } else if (scheme_ == TransportScheme::lagrange) {
      shift_lagrange(g, cells);
    } else {
      shift_spectral(g, s);
    }
  }

 private:
  void shift_index(std::span<cplx> g, std::ptrdiff_t d) {
    if (d == 0) return;
    const auto n = static_cast<std::ptrdiff_t>(n_);
    if (d > 0) {
      for (std::ptrdiff_t j = 0; j < n; ++j) g[static_cast<std::size_t>(j)] = j + d < n ? g[static_cast<std::size_t>(j + d)] : cplx{};
    } else {
      for (std::ptrdiff_t j = n - 1; j >= 0; --j) g[static_cast<std::size_t>(j)] = j + d >= 0 ? g[static_cast<std::size_t>(j + d)] : cplx{};
    }
  }

  // Centred Lagrange interpolation on 2q nodes, zero outside the grid.
  void shift_lagrange(std::span<cplx> g, double cells) {
    constexpr int q = lagrange_half_width;
    const double fl = std::floor(cells);
    const double a = cells - fl;
    const auto base = static_cast<std::ptrdiff_t>(fl);
    double w[2 * q];
    for (int i = 0; i < 2 * q; ++i) {
      const double xi = static_cast<double>(i - q + 1);
      double num = 1.0, den = 1.0;
      for (int m = 0; m < 2 * q; ++m) {
        if (m == i) continue;
        const double xm = static_cast<double>(m - q + 1);
        num *= a - xm;
        den *= xi - xm;
      }
      w[i] = num / den;
    }
    std::vector<cplx> src(g.begin(), g.end());
    const auto n = static_cast<std::ptrdiff_t>(n_);
    for (std::ptrdiff_t j = 0; j < n; ++j) {
      const double target = static_cast<double>(j) + cells;
      if (target < -1e-12 || target > static_cast<double>(n - 1) + 1e-12) {
        g[static_cast<std::size_t>(j)] = {};
        continue;
      }
      cplx acc{};
      for (int i = 0; i < 2 * q; ++i) {
        const std::ptrdiff_t idx = j + base + i - q + 1;
        if (idx >= 0 && idx < n) acc += w[i] * src[static_cast<std::size_t>(idx)];
      }
      g[static_cast<std::size_t>(j)] = acc;
    }
  }

  void shift_spectral(std::span<cplx> g, double s) {
    auto buf = forward_->data();
    const std::size_t size = buf.size();
    std::fill(buf.begin(), buf.end(), cplx{});
    std::copy(g.begin(), g.end(), buf.begin());
    forward_->execute();
    auto out = backward_->data();
    const double scale = 1.0 / static_cast<double>(size);
    for (std::size_t q = 0; q < size; ++q) {
      double phase = omega_[q] * s;
      cplx m = q == size / 2 ? cplx(std::cos(phase), 0.0) : std::polar(1.0, phase);
      out[q] = buf[q] * m * scale;
    }
    backward_->execute();
    std::copy(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(n_), g.begin());
  }

  std::size_t n_;
  double step_;
  TransportScheme scheme_;
  UniformGrid grid_;
  std::unique_ptr<FftPlan> forward_;
  std::unique_ptr<FftPlan> backward_;
  std::vector<double> omega_;
};

// Exact free transport over dt: f(k', eta') <- f(k', eta' + k' dt).
inline void free_transport_step(SpectralState& state, double dt, Transport& transport) {
  for (std::size_t r = 0; r < state.rows(); ++r) {
    int k = state.wavenumber(r);
    if (k != 0) transport.shift(state.row(r), static_cast<double>(k) * dt);
  }
  state.time += dt;
}

inline void free_transport_step(SpectralState& state, double dt,
                                TransportScheme scheme = TransportScheme::lagrange) {
  Transport transport(state.etap().size, state.etap().step, scheme);
  free_transport_step(state, dt, transport);
}

struct DirectOptions {
  bool linearized = false;
  TransportScheme transport = TransportScheme::lagrange;
  double guard = 1.0;  // bound on dt * sum|E| * max|eta'|
  int max_terms = 60;
};

namespace detail {

// out(c) = -i dt eta' sum_a E(a) g(c - a) over active field rows a.
inline void apply_forcing(const SpectralState& shape, std::span<const cplx> e, double dt,
                          std::span<const cplx> g, std::span<cplx> out) {
  const std::size_t ne = shape.etap().size;
  const int m_max = shape.m_max();
  std::fill(out.begin(), out.end(), cplx{});
  for (std::size_t ra = 0; ra < shape.rows(); ++ra) {
    const cplx ea = e[ra];
    if (ea == cplx{}) continue;
    const int a = shape.index(ra);
    for (int c = -m_max; c <= m_max; ++c) {
      const int b = c - a;
      if (b < -m_max || b > m_max) continue;
      const cplx* src = g.data() + shape.row_of(b) * ne;
      cplx* dst = out.data() + shape.row_of(c) * ne;
      for (std::size_t j = 0; j < ne; ++j) dst[j] += ea * src[j];
    }
  }
  const UniformGrid& eg = shape.etap();
  for (std::size_t r = 0; r < shape.rows(); ++r) {
    cplx* dst = out.data() + r * ne;
    for (std::size_t j = 0; j < ne; ++j) dst[j] *= cplx(0.0, -dt * eg[j]);
  }
}

}  // namespace detail

// Forcing substep with the field frozen: f + mu e_0 <- exp(-i dt eta' E*)(f + mu e_0).
// The density f(k', 0) is untouched, so E is exactly constant across it.
inline void forcing_step(SpectralState& state, const Equilibrium& eq, double dt, const DirectOptions& opt) {
  const UniformGrid& eg = state.etap();
  const std::size_t ne = eg.size;
  auto e = field_from_state(state);
  double sum_e = 0.0;
  for (const auto& z : e) sum_e += std::abs(z);
  const double emax = std::max(std::abs(eg.start), std::abs(eg.back()));
  if (dt * sum_e * emax >= opt.guard)
    throw Error(ErrorKind::stability_guard, "dt * sum|E| * max|eta'| exceeds the stability guard", "dt");
  if (sum_e == 0.0) return;

  if (opt.linearized) {
    for (std::size_t r = 0; r < state.rows(); ++r) {
      if (e[r] == cplx{}) continue;
      auto row = state.row(r);
      for (std::size_t j = 0; j < ne; ++j) row[j] += cplx(0.0, -dt * eg[j]) * e[r] * eq.mu_hat(eg[j]);
    }
    return;
  }

  std::vector<cplx>& f = state.values();
  std::vector<cplx> base = f;
  {
    auto zero = std::span<cplx>(base).subspan(state.row_of(0) * ne, ne);
    for (std::size_t j = 0; j < ne; ++j) zero[j] += eq.mu_hat(eg[j]);
  }
  std::vector<cplx> term(f.size()), next(f.size());
  detail::apply_forcing(state, e, dt, base, term);
  double scale = std::max(sup_abs(base), 1e-300);
  for (int n = 1;; ++n) {
    for (std::size_t i = 0; i < f.size(); ++i) f[i] += term[i];
    double size = sup_abs(term);
    if (size <= 1e-18 * scale) break;
    if (n >= opt.max_terms)
      throw Error(ErrorKind::stability_guard, "forcing exponential did not converge", "dt");
    detail::apply_forcing(state, e, dt, term, next);
    const double inv = 1.0 / static_cast<double>(n + 1);
    for (std::size_t i = 0; i < f.size(); ++i) term[i] = next[i] * inv;
  }
}

// Strang step: half transport, forcing, half transport.
inline void nonlinear_step(SpectralState& state, const Equilibrium& eq, double dt, const DirectOptions& opt,
                           Transport& transport) {
  free_transport_step(state, 0.5 * dt, transport);
  forcing_step(state, eq, dt, opt);
  free_transport_step(state, 0.5 * dt, transport);
}

inline void nonlinear_step(SpectralState& state, const Equilibrium& eq, double dt, const DirectOptions& opt = {}) {
  Transport transport(state.etap().size, state.etap().step, opt.transport);
  nonlinear_step(state, eq, dt, opt, transport);
}

struct DirectRun {
  UniformGrid t;
  std::vector<int> wavenumbers;
  std::vector<cplx> field;    // nt x rows
  std::vector<cplx> density;  // nt x rows, f(t, k', 0)
  double mass_drift = 0.0;
  double hermitian_defect = 0.0;
  SpectralState final_state;

  std::size_t rows() const { return wavenumbers.size(); }
  std::vector<cplx> field_series(int wavenumber) const {
    std::vector<cplx> s(t.size);
    auto it = std::find(wavenumbers.begin(), wavenumbers.end(), wavenumber);
    if (it == wavenumbers.end()) return s;
    auto r = static_cast<std::size_t>(it - wavenumbers.begin());
    for (std::size_t n = 0; n < t.size; ++n) s[n] = field[n * rows() + r];
    return s;
  }
};

// max |f(k', eta') - conj f(-k', -eta')|
inline double hermitian_defect(const SpectralState& state) {
  const std::size_t ne = state.etap().size;
  double d = 0.0;
  for (std::size_t r = 0; r < state.rows(); ++r) {
    auto a = state.row(r);
    auto b = state.row(state.rows() - 1 - r);
    for (std::size_t j = 0; j < ne; ++j) d = std::max(d, std::abs(a[j] - std::conj(b[ne - 1 - j])));
  }
  return d;
}

using SnapshotHook = std::function<void(std::size_t step, const SpectralState&)>;

inline DirectRun run_direct(SpectralState state, const Equilibrium& eq, double horizon, double dt,
                            const DirectOptions& opt = {}, const SnapshotHook& hook = {}) {
  if (!(dt > 0.0)) throw Error(ErrorKind::validation, "dt must be positive", "dt");
  if (!(horizon >= 0.0)) throw Error(ErrorKind::validation, "horizon must be nonnegative", "T");
  DirectRun out;
  out.t = horizon == 0.0 ? UniformGrid{0.0, dt, 1} : UniformGrid::time(dt, horizon);
  for (std::size_t r = 0; r < state.rows(); ++r) out.wavenumbers.push_back(state.wavenumber(r));
  const std::size_t rows = state.rows(), nt = out.t.size, z = state.zero_column();
  out.field.resize(nt * rows);
  out.density.resize(nt * rows);
  const cplx mass0 = state.row(state.row_of(0))[z];
  Transport transport(state.etap().size, state.etap().step, opt.transport);
  for (std::size_t n = 0; n < nt; ++n) {
    if (n > 0) {
      nonlinear_step(state, eq, dt, opt, transport);
      state.time = out.t[n];
    }
    auto e = field_from_state(state);
    for (std::size_t r = 0; r < rows; ++r) {
      out.field[n * rows + r] = e[r];
      out.density[n * rows + r] = state.row(r)[z];
    }
    out.mass_drift = std::max(out.mass_drift, std::abs(state.row(state.row_of(0))[z] - mass0));
    out.hermitian_defect = std::max(out.hermitian_defect, hermitian_defect(state));
    if (hook) hook(n, state);
  }
  out.final_state = std::move(state);
  return out;
}

// Binary snapshot: "VPSNAP01", u64 rows, u64 n_eta, i64 mode_step, f64 time,
// f64 eta_start, f64 eta_step, then row-major (re, im) pairs. Little-endian.
namespace snapshot {

inline constexpr char magic[8] = {'V', 'P', 'S', 'N', 'A', 'P', '0', '1'};

template <class T>
void put(std::ostream& out, T v) {
  static_assert(std::endian::native == std::endian::little, "snapshot writer assumes a little-endian host");
  char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  out.write(b, sizeof(T));
}

template <class T>
T get(std::istream& in) {
  char b[sizeof(T)];
  in.read(b, sizeof(T));
  T v;
  std::memcpy(&v, b, sizeof(T));
  return v;
}

}  // namespace snapshot

inline void write_snapshot(const std::string& path, const SpectralState& state) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::io, "cannot write snapshot: " + path, "path");
  out.write(snapshot::magic, 8);
  snapshot::put<std::uint64_t>(out, state.rows());
  snapshot::put<std::uint64_t>(out, state.etap().size);
  snapshot::put<std::int64_t>(out, state.mode_step());
  snapshot::put<double>(out, state.time);
  snapshot::put<double>(out, state.etap().start);
  snapshot::put<double>(out, state.etap().step);
  for (const auto& z : state.values()) {
    snapshot::put<double>(out, z.real());
    snapshot::put<double>(out, z.imag());
  }
  if (!out) throw Error(ErrorKind::io, "write failed: " + path, "path");
}

inline SpectralState read_snapshot(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot read snapshot: " + path, "path");
  char m[8];
  in.read(m, 8);
  if (!in || std::memcmp(m, snapshot::magic, 8) != 0) throw Error(ErrorKind::parse, "not a snapshot file: " + path);
  auto rows = snapshot::get<std::uint64_t>(in);
  auto ne = snapshot::get<std::uint64_t>(in);
  auto step = snapshot::get<std::int64_t>(in);
  double time = snapshot::get<double>(in);
  double start = snapshot::get<double>(in);
  double h = snapshot::get<double>(in);
  if (!in || rows % 2 == 0) throw Error(ErrorKind::parse, "corrupt snapshot header: " + path);
  SpectralState state(static_cast<int>(step), static_cast<int>(rows / 2), UniformGrid{start, h, ne});
  state.time = time;
  for (auto& z : state.values()) {
    double re = snapshot::get<double>(in);
    double im = snapshot::get<double>(in);
    z = {re, im};
  }
  if (!in) throw Error(ErrorKind::parse, "truncated snapshot: " + path);
  return state;
}

}  // namespace echolab
