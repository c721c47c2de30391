#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <complex>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "echolab/equilibrium.hpp"
#include "echolab/error.hpp"
#include "echolab/grid.hpp"
#include "echolab/initial_data.hpp"
#include "echolab/kernel.hpp"
#include "echolab/parallel.hpp"

namespace echolab {

struct LayerKey {
  int k = 0;
  int eta = 0;
  int p = 1;

  auto operator<=>(const LayerKey&) const = default;

  std::string str() const {
    return "(" + std::to_string(k) + "," + std::to_string(eta) + "," + std::to_string(p) + ")";
  }
};

// f_{k,eta,p}(t_n, eta'_j), row-major in time.
struct ModeProfile {
  LayerKey key;
  std::size_t nt = 0;
  std::size_t ne = 0;
  std::vector<cplx> values;

  std::span<const cplx> row(std::size_t n) const { return {values.data() + n * ne, ne}; }
  std::span<cplx> row(std::size_t n) { return {values.data() + n * ne, ne}; }
};

struct FieldHistory {
  LayerKey key;
  std::vector<cplx> rho;
  std::vector<cplx> field;
};

struct LayerDiagnostics {
  double source_sup = 0.0;
  double volterra_residual = 0.0;  // relative to sup |S(t, Kkt - L eta)|
  double consistency = 0.0;        // max |rho - f(t, Kkt - L eta)| relative to sup |rho|
  std::size_t shift_outside = 0;   // source interpolation targets beyond the eta' grid
  std::size_t moving_outside = 0;  // moving points Kkt - L eta beyond the eta' grid
};

struct LayerEntry {
  ModeProfile profile;
  FieldHistory history;
  LayerDiagnostics diag;
};

struct LayerSeed {
  LayerKey key;
  std::vector<cplx> profile;
};

using Layer = std::map<LayerKey, LayerEntry>;

struct Sextet {
  const LayerEntry* first = nullptr;
  const LayerEntry* second = nullptr;
};

struct CascadeState {
  CascadeConfig config;
  Equilibrium eq;
  std::vector<LayerSeed> seeds;
  std::vector<Layer> layers;  // layers[p - 1]
  std::map<int, ResolventKernel> kernels;

  CascadeState(CascadeConfig cfg, Equilibrium equilibrium) : config(std::move(cfg)), eq(std::move(equilibrium)) {}

  int completed() const { return static_cast<int>(layers.size()); }

  const LayerEntry* find(const LayerKey& key) const {
    if (key.p < 1 || key.p > completed()) return nullptr;
    const auto& layer = layers[static_cast<std::size_t>(key.p - 1)];
    auto it = layer.find(key);
    return it == layer.end() ? nullptr : &it->second;
  }

  const ResolventKernel& kernel(int wavenumber) const {
    auto it = kernels.find(wavenumber);
    if (it == kernels.end())
      throw Error(ErrorKind::incomplete_layer, "no kernel for wavenumber " + std::to_string(wavenumber));
    return it->second;
  }

  std::size_t key_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.size();
    return n;
  }
};

// Layer-one sources: S_{k,eta,1}(t, eta') = f0_{k,eta}(eta').
inline std::vector<LayerSeed> init_layer_one(const InitialData& data, const CascadeConfig& cfg) {
  data.validate(cfg);
  std::vector<LayerSeed> seeds;
  for (const auto& m : data.modes()) seeds.push_back({{m.k, m.eta, 1}, InitialData::sample(m, cfg.etap, cfg.lambda0)});
  std::sort(seeds.begin(), seeds.end(), [](const auto& a, const auto& b) { return a.key < b.key; });
  return seeds;
}

// Pairs of stored keys (k1, eta1, p1) + (k2, eta2, p2) = key with k1 != 0, in
// lexicographic order of (k1, eta1, p1).
inline std::vector<Sextet> enumerate_sextets(const CascadeState& state, const LayerKey& key) {
  if (key.p - 1 > state.completed())
    throw Error(ErrorKind::incomplete_layer, "layers below " + key.str() + " are not complete");
  std::vector<Sextet> out;
  for (int p1 = 1; p1 < key.p; ++p1) {
    for (const auto& [k1, e1] : state.layers[static_cast<std::size_t>(p1 - 1)]) {
      if (k1.k == 0) continue;
      const LayerEntry* e2 = state.find({key.k - k1.k, key.eta - k1.eta, key.p - p1});
      if (e2) out.push_back({&e1, e2});
    }
  }
  std::sort(out.begin(), out.end(), [](const Sextet& a, const Sextet& b) {
    const auto& x = a.first->profile.key;
    const auto& y = b.first->profile.key;
    return std::tie(x.k, x.eta, x.p) < std::tie(y.k, y.eta, y.p);
  });
  return out;
}

// Keys reachable at layer p from the stored lower layers.
inline std::vector<LayerKey> candidate_keys(const CascadeState& state, int p) {
  std::set<LayerKey> keys;
  for (int p1 = 1; p1 < p; ++p1) {
    int p2 = p - p1;
    if (p2 < 1 || p2 > state.completed() || p1 > state.completed()) continue;
    for (const auto& [a, ea] : state.layers[static_cast<std::size_t>(p1 - 1)]) {
      if (a.k == 0) continue;
      for (const auto& [b, eb] : state.layers[static_cast<std::size_t>(p2 - 1)])
        keys.insert({a.k + b.k, a.eta + b.eta, p});
    }
  }
  return {keys.begin(), keys.end()};
}

// N_{k,eta,p}(t_n, eta') = -i sum E_1(t_n) (eta' + L eta - K k t_n) f_2(t_n, eta' + L eta_1 - K k_1 t_n).
// Returns how many shifted evaluations fell outside the eta' grid.
inline std::size_t assemble_source(const CascadeState& state, const LayerKey& key, std::span<const Sextet> sextets,
                                   std::size_t n, std::span<cplx> out) {
  const auto& cfg = state.config;
  if (key.p - 1 > state.completed())
    throw Error(ErrorKind::incomplete_layer, "layers below " + key.str() + " are not complete");
  const std::size_t ne = cfg.ne();
  std::fill(out.begin(), out.end(), cplx{});
  std::vector<cplx> shifted(ne);
  std::size_t outside = 0;
  const double t = cfg.t[n];
  for (const auto& s : sextets) {
    const cplx e1 = s.first->history.field[n];
    if (e1 == cplx{}) continue;
    const auto& k1 = s.first->profile.key;
    const double shift = cfg.L * k1.eta - static_cast<double>(cfg.K) * k1.k * t;
    outside += shift_interpolate(s.second->profile.row(n), cfg.etap, shift, shifted);
    for (std::size_t j = 0; j < ne; ++j) out[j] += e1 * shifted[j];
  }
  const double base = cfg.L * key.eta - static_cast<double>(cfg.K) * key.k * t;
  for (std::size_t j = 0; j < ne; ++j) out[j] *= cplx(0.0, -(cfg.etap[j] + base));
  return outside;
}

// S(t_n) = f(0) + int_0^{t_n} N ds for histories stored row-major (nt x ne).
// An empty initial profile means f(0) = 0.
inline std::vector<cplx> accumulate_source(const CascadeConfig& cfg, std::span<const cplx> initial,
                                           std::span<const cplx> nhat) {
  const std::size_t nt = cfg.nt(), ne = cfg.ne();
  if (nhat.size() != nt * ne || (!initial.empty() && initial.size() != ne))
    throw Error(ErrorKind::grid_mismatch, "source history does not match the t x eta' grid");
  std::vector<cplx> s(nt * ne);
  RunningIntegral acc(ne, cfg.t.step);
  for (std::size_t n = 0; n < nt; ++n) {
    acc.push(nhat.subspan(n * ne, ne));
    std::span<cplx> row(s.data() + n * ne, ne);
    acc.value(row);
    if (!initial.empty())
      for (std::size_t j = 0; j < ne; ++j) row[j] += initial[j];
  }
  return s;
}

// S(t_n, K k t_n - L eta) for every time level.
inline std::vector<cplx> source_at_moving_point(const CascadeConfig& cfg, const LayerKey& key,
                                                std::span<const cplx> s, std::size_t* outside = nullptr) {
  const std::size_t nt = cfg.nt(), ne = cfg.ne();
  if (s.size() != nt * ne) throw Error(ErrorKind::grid_mismatch, "source does not match the t x eta' grid");
  std::vector<cplx> f(nt);
  for (std::size_t n = 0; n < nt; ++n) {
    double x = static_cast<double>(cfg.K) * key.k * cfg.t[n] - cfg.L * key.eta;
    if (outside && !in_range(cfg.etap, x)) ++*outside;
    f[n] = interpolate(s.subspan(n * ne, ne), cfg.etap, x);
  }
  return f;
}

// rho(t) = S(t, Kkt - L eta) + int_0^t G_{Kk}(t - s) S(s, Kks - L eta) ds.
inline std::vector<cplx> update_density(const ResolventKernel& kern, const LayerKey& key, const CascadeConfig& cfg,
                                        std::span<const cplx> s, std::size_t* outside = nullptr) {
  if (key.k == 0) throw Error(ErrorKind::validation, "update_density needs k != 0", "k");
  if (kern.k != cfg.K * key.k)
    throw Error(ErrorKind::grid_mismatch, "kernel wavenumber does not match K*k for " + key.str());
  require_same_grid(kern.t_grid, cfg.t, "update_density");
  return apply_resolvent(kern, source_at_moving_point(cfg, key, s, outside));
}

inline std::vector<cplx> update_field(const CascadeConfig& cfg, const LayerKey& key, std::span<const cplx> rho) {
  std::vector<cplx> e(rho.size());
  if (key.k == 0) return e;
  const cplx denom(0.0, static_cast<double>(cfg.K) * key.k);
  for (std::size_t n = 0; n < rho.size(); ++n) e[n] = rho[n] / denom;
  return e;
}

// f(t, eta') = S(t, eta') - int_0^t E(s) dv_mu_hat(eta' + L eta - K k s) ds.
inline ModeProfile update_profile(const CascadeConfig& cfg, const Equilibrium& eq, const LayerKey& key,
                                  std::span<const cplx> s, std::span<const cplx> e) {
  const std::size_t nt = cfg.nt(), ne = cfg.ne();
  if (s.size() != nt * ne || e.size() != nt)
    throw Error(ErrorKind::grid_mismatch, "profile inputs do not match the t x eta' grid");
  ModeProfile prof{key, nt, ne, std::vector<cplx>(s.begin(), s.end())};
  bool any = std::any_of(e.begin(), e.end(), [](cplx z) { return z != cplx{}; });
  if (!any) return prof;
  RunningIntegral acc(ne, cfg.t.step);
  std::vector<cplx> g(ne), integral(ne);
  for (std::size_t n = 0; n < nt; ++n) {
    const double base = cfg.L * key.eta - static_cast<double>(cfg.K) * key.k * cfg.t[n];
    for (std::size_t j = 0; j < ne; ++j) g[j] = e[n] * eq.dv_mu_hat(cfg.etap[j] + base);
    acc.push(g);
    acc.value(integral);
    auto row = prof.row(n);
    for (std::size_t j = 0; j < ne; ++j) row[j] -= integral[j];
  }
  return prof;
}

namespace detail {

inline std::optional<LayerEntry> build_entry(const CascadeState& state, const LayerKey& key,
                                             const std::vector<cplx>* seed) {
  const auto& cfg = state.config;
  const std::size_t nt = cfg.nt(), ne = cfg.ne();
  std::vector<cplx> s(nt * ne);
  LayerDiagnostics diag;
  if (seed) {
    for (std::size_t n = 0; n < nt; ++n) std::copy(seed->begin(), seed->end(), s.begin() + static_cast<std::ptrdiff_t>(n * ne));
  } else {
    auto sextets = enumerate_sextets(state, key);
    RunningIntegral acc(ne, cfg.t.step);
    std::vector<cplx> nhat(ne);
    for (std::size_t n = 0; n < nt; ++n) {
      diag.shift_outside += assemble_source(state, key, sextets, n, nhat);
      acc.push(nhat);
      acc.value(std::span<cplx>(s.data() + n * ne, ne));
    }
  }
  diag.source_sup = sup_abs(s);
  if (!seed && diag.source_sup < cfg.source_floor) return std::nullopt;

  LayerEntry entry;
  entry.history.key = key;
  auto moving = source_at_moving_point(cfg, key, s, &diag.moving_outside);
  if (key.k != 0) {
    const auto& kern = state.kernel(cfg.K * key.k);
    entry.history.rho = apply_resolvent(kern, moving);
  } else {
    entry.history.rho = moving;
  }
  entry.history.field = update_field(cfg, key, entry.history.rho);
  entry.profile = update_profile(cfg, state.eq, key, s, entry.history.field);

  const auto& rho = entry.history.rho;
  const double rho_sup = std::max(sup_abs(rho), 1e-300);
  const double src_sup = std::max(sup_abs(moving), 1e-300);
  if (key.k != 0) {
    std::vector<cplx> a(nt);
    for (std::size_t n = 0; n < nt; ++n)
      a[n] = cfg.t[n] * state.eq.mu_hat(static_cast<double>(cfg.K) * key.k * cfg.t[n]);
    for (std::size_t n = 0; n < nt; ++n) {
      cplx r = rho[n] + gregory::convolve_at(a, rho, n, cfg.t.step) - moving[n];
      diag.volterra_residual = std::max(diag.volterra_residual, std::abs(r) / src_sup);
    }
  }
  for (std::size_t n = 0; n < nt; ++n) {
    double x = static_cast<double>(cfg.K) * key.k * cfg.t[n] - cfg.L * key.eta;
    cplx f = interpolate(entry.profile.row(n), cfg.etap, x);
    diag.consistency = std::max(diag.consistency, std::abs(rho[n] - f) / rho_sup);
  }
  entry.diag = diag;
  return entry;
}

inline void ensure_kernels(CascadeState& state, const std::vector<LayerKey>& keys) {
  std::vector<int> missing;
  for (const auto& key : keys) {
    if (key.k == 0) continue;
    int w = state.config.K * key.k;
    if (!state.kernels.count(w) && std::find(missing.begin(), missing.end(), w) == missing.end())
      missing.push_back(w);
  }
  std::sort(missing.begin(), missing.end());
  std::vector<ResolventKernel> built(missing.size());
  parallel_for(missing.size(), state.config.threads,
               [&](std::size_t i) { built[i] = kernel_volterra(state.eq, missing[i], state.config.t); });
  for (std::size_t i = 0; i < missing.size(); ++i) state.kernels.emplace(missing[i], std::move(built[i]));
}

}  // namespace detail

// Completes layer p. Layer 1 is built from state.seeds.
inline void advance_layer(CascadeState& state, int p) {
  if (p != state.completed() + 1)
    throw Error(ErrorKind::incomplete_layer, "layer " + std::to_string(p) + " requested before layer " +
                                                 std::to_string(state.completed() + 1));
  std::vector<LayerKey> keys;
  if (p == 1) {
    for (const auto& s : state.seeds) keys.push_back(s.key);
  } else {
    keys = candidate_keys(state, p);
  }
  detail::ensure_kernels(state, keys);
  std::vector<std::optional<LayerEntry>> built(keys.size());
  parallel_for(keys.size(), state.config.threads, [&](std::size_t i) {
    try {
      built[i] = detail::build_entry(state, keys[i], p == 1 ? &state.seeds[i].profile : nullptr);
    } catch (const Error& e) {
      throw Error(e.kind(), std::string(e.what()) + " [key " + keys[i].str() + "]", e.field());
    }
  });
  Layer layer;
  for (std::size_t i = 0; i < keys.size(); ++i)
    if (built[i]) layer.emplace(keys[i], std::move(*built[i]));
  state.layers.push_back(std::move(layer));
}

inline CascadeState run_cascade(const CascadeConfig& cfg, const Equilibrium& eq, const InitialData& data) {
  cfg.validate(eq);
  CascadeState state(cfg, eq);
  state.seeds = init_layer_one(data, cfg);
  for (int p = 1; p <= cfg.p_max; ++p) advance_layer(state, p);
  return state;
}

inline double layer_weight(double epsilon, int p) { return std::pow(epsilon, p); }

// f(t_n, k', eta') = sum eps^p f_{k,eta,p}(t_n, eta' - L eta + K k t_n), zero for k' not in KZ.
inline cplx synthesize_distribution(const CascadeState& state, std::size_t n, int kprime, double etap,
                                    std::optional<double> epsilon = std::nullopt) {
  const auto& cfg = state.config;
  if (kprime % cfg.K != 0) return {};
  const int k = kprime / cfg.K;
  const double eps = epsilon.value_or(cfg.epsilon);
  cplx acc{};
  for (const auto& layer : state.layers) {
    for (const auto& [key, entry] : layer) {
      if (key.k != k) continue;
      double x = etap - cfg.L * key.eta + static_cast<double>(cfg.K) * k * cfg.t[n];
      acc += layer_weight(eps, key.p) * interpolate(entry.profile.row(n), cfg.etap, x);
    }
  }
  return acc;
}

inline cplx synthesize_distribution(const CascadeState& state, double t, int kprime, double etap,
                                    std::optional<double> epsilon = std::nullopt) {
  auto n = state.config.t.index_of(t);
  if (!n) throw Error(ErrorKind::grid_mismatch, "time is not on the cascade grid", "t");
  return synthesize_distribution(state, *n, kprime, etap, epsilon);
}

// Field amplitudes per spatial mode K k, as time series on the cascade grid.
inline std::map<int, std::vector<cplx>> synthesize_field_series(const CascadeState& state,
                                                                std::optional<double> epsilon = std::nullopt) {
  const auto& cfg = state.config;
  const double eps = epsilon.value_or(cfg.epsilon);
  std::map<int, std::vector<cplx>> modes;
  for (const auto& layer : state.layers) {
    for (const auto& [key, entry] : layer) {
      if (key.k == 0) continue;
      auto& series = modes[cfg.K * key.k];
      series.resize(cfg.nt());
      const double w = layer_weight(eps, key.p);
      for (std::size_t n = 0; n < cfg.nt(); ++n) series[n] += w * entry.history.field[n];
    }
  }
  return modes;
}

inline constexpr std::size_t x_samples = 256;

struct FieldSnapshot {
  std::map<int, cplx> modes;
  double sup_bound = 0.0;  // sum of mode amplitudes
  double sup_exact = 0.0;  // max over the x grid
  double max_imag = 0.0;   // max |Im E(x)| over the x grid
};

inline FieldSnapshot snapshot_from_modes(std::map<int, cplx> modes) {
  FieldSnapshot snap;
  snap.modes = std::move(modes);
  for (const auto& [m, e] : snap.modes) snap.sup_bound += std::abs(e);
  for (std::size_t i = 0; i < x_samples; ++i) {
    const double x = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(x_samples);
    cplx v{};
    for (const auto& [m, e] : snap.modes) v += e * std::polar(1.0, static_cast<double>(m) * x);
    snap.sup_exact = std::max(snap.sup_exact, std::abs(v));
    snap.max_imag = std::max(snap.max_imag, std::abs(v.imag()));
  }
  return snap;
}

inline FieldSnapshot synthesize_field(const CascadeState& state, std::size_t n,
                                      std::optional<double> epsilon = std::nullopt) {
  std::map<int, cplx> modes;
  for (const auto& [m, series] : synthesize_field_series(state, epsilon)) modes[m] = series[n];
  return snapshot_from_modes(std::move(modes));
}

}  // namespace echolab
