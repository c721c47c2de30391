#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <tuple>
#include <vector>

#include "echolab/cascade.hpp"
#include "echolab/error.hpp"
#include "echolab/fit.hpp"
#include "echolab/grid.hpp"

namespace echolab {

// lambda_p(t) = lambda0 + <t>^-delta + p^-delta
struct BoundProfile {
  double lambda0 = 0.5;
  double delta = 0.1;
  double sigma = 1.5;

  double rate(double t, int p) const {
    return lambda0 + std::pow(bracket(t), -delta) + std::pow(static_cast<double>(p), -delta);
  }

  void validate() const {
    if (!(lambda0 > 0.0)) throw Error(ErrorKind::validation, "lambda0 must be positive", "lambda0");
    if (!(delta > 0.0 && delta < 1.0)) throw Error(ErrorKind::validation, "delta must lie in (0, 1)", "delta");
    if (!(sigma > 1.0)) throw Error(ErrorKind::validation, "sigma must exceed 1", "sigma");
  }
};

struct EchoWave {
  int k = 0;
  int eta = 0;
};

struct PredictedEcho {
  int mode = 0;
  double time = 0.0;
  int order = 0;  // fewest waves that produce this (mode, time)
  std::vector<std::vector<std::size_t>> generators;
};

// Candidate echoes tau = L sum(eta) / (K sum(k)) from every multiset of at most
// `depth` waves with sum(k) != 0, unique per (mode, tau), sorted by (tau, mode).
inline std::vector<PredictedEcho> predicted_echo_times(std::span<const EchoWave> waves, int K, int L, int depth) {
  if (K < 1 || L < 1) throw Error(ErrorKind::validation, "K and L must be positive", "K");
  // (mode, reduced numerator, reduced denominator) -> entry
  std::map<std::tuple<int, long long, long long>, PredictedEcho> found;
  std::vector<std::size_t> pick;
  auto visit = [&](auto&& self, std::size_t from, int sum_k, int sum_eta) -> void {
    if (!pick.empty() && sum_k != 0) {
      long long num = static_cast<long long>(L) * sum_eta;
      long long den = static_cast<long long>(K) * sum_k;
      if (den < 0) {
        num = -num;
        den = -den;
      }
      long long g = std::gcd(num < 0 ? -num : num, den);
      if (g > 0) {
        num /= g;
        den /= g;
      }
      auto key = std::make_tuple(K * sum_k, num, den);
      auto& e = found[key];
      if (e.generators.empty()) {
        e.mode = K * sum_k;
        e.time = static_cast<double>(num) / static_cast<double>(den);
        e.order = static_cast<int>(pick.size());
      }
      e.order = std::min(e.order, static_cast<int>(pick.size()));
      e.generators.push_back(pick);
    }
    if (static_cast<int>(pick.size()) == depth) return;
    for (std::size_t i = from; i < waves.size(); ++i) {
      pick.push_back(i);
      self(self, i, sum_k + waves[i].k, sum_eta + waves[i].eta);
      pick.pop_back();
    }
  };
  visit(visit, 0, 0, 0);
  std::vector<PredictedEcho> out;
  for (auto& [key, e] : found) out.push_back(std::move(e));
  std::sort(out.begin(), out.end(),
            [](const auto& a, const auto& b) { return std::tie(a.time, a.mode) < std::tie(b.time, b.mode); });
  return out;
}

struct EchoEvent {
  int mode = 0;
  double time = 0.0;
  double amplitude = 0.0;
  std::optional<double> predicted_time;
  int order = 0;
  std::optional<double> scaling_exponent;  // log2 of the eps / (eps/2) amplitude ratio
};

struct EchoDetection {
  std::vector<EchoEvent> echoes;
  std::vector<EchoEvent> unmatched;
  double window = 0.0;
};

inline double echo_window(const UniformGrid& t) {
  return std::max(5.0 * t.step, 0.02 * (t.back() - t.start));
}

// Interior local maxima of |E(mode, t)| above the floor, matched to the
// nearest predicted time of the same mode within the window.
inline EchoDetection detect_echoes(const UniformGrid& t, const std::map<int, std::vector<cplx>>& field,
                                   double noise_floor, std::span<const PredictedEcho> predicted = {},
                                   double window = 0.0) {
  EchoDetection det;
  det.window = window > 0.0 ? window : echo_window(t);
  for (const auto& [mode, series] : field) {
    if (series.size() != t.size) throw Error(ErrorKind::grid_mismatch, "field history does not match the time grid");
    for (std::size_t i = 1; i + 1 < series.size(); ++i) {
      const double a = std::abs(series[i]);
      if (!(a > noise_floor)) continue;
      if (!(a > std::abs(series[i - 1]) && a >= std::abs(series[i + 1]))) continue;
      EchoEvent ev{mode, t[i], a, std::nullopt, 0, std::nullopt};
      const PredictedEcho* best = nullptr;
      for (const auto& p : predicted) {
        if (p.mode != mode || std::abs(p.time - ev.time) > det.window) continue;
        if (!best || std::abs(p.time - ev.time) < std::abs(best->time - ev.time)) best = &p;
      }
      if (best) {
        ev.predicted_time = best->time;
        ev.order = best->order;
        det.echoes.push_back(ev);
      } else {
        det.unmatched.push_back(ev);
      }
    }
  }
  return det;
}

// Amplitude exponent p from the same events evaluated at eps and eps/2.
inline void estimate_orders(EchoDetection& det, const UniformGrid& t,
                            const std::map<int, std::vector<cplx>>& field_half) {
  auto fill = [&](std::vector<EchoEvent>& events) {
    for (auto& ev : events) {
      auto it = field_half.find(ev.mode);
      auto n = t.index_of(ev.time);
      if (it == field_half.end() || !n) continue;
      double half = std::abs(it->second[*n]);
      if (half > 0.0) {
        ev.scaling_exponent = std::log2(ev.amplitude / half);
        ev.order = static_cast<int>(std::lround(*ev.scaling_exponent));
      }
    }
  };
  fill(det.echoes);
  fill(det.unmatched);
}

struct DecayFit {
  double rate = 0.0;
  double prefactor = 0.0;
  double residual = 0.0;  // RMS of fit/sample - 1 over the fitted points
  std::size_t points = 0;
  bool peaks = false;  // fitted on local maxima rather than all samples
};

// Least-squares fit of log sup_x|E| ~ log C - rate t over [start, end]. The
// fit uses the local maxima when there are at least three of them, since an
// oscillating field passes near zero between them.
inline DecayFit fit_field_decay(const UniformGrid& t, std::span<const double> sup_e, double window_start,
                                double window_end = std::numeric_limits<double>::infinity()) {
  if (sup_e.size() != t.size) throw Error(ErrorKind::grid_mismatch, "field history does not match the time grid");
  std::vector<std::size_t> in;
  for (std::size_t i = 0; i < t.size; ++i)
    if (t[i] >= window_start - 1e-12 && t[i] <= window_end + 1e-12) in.push_back(i);
  if (in.size() < 3) throw Error(ErrorKind::insufficient_window, "decay window holds fewer than 3 samples", "window");
  std::vector<std::size_t> peaks;
  for (std::size_t q = 1; q + 1 < in.size(); ++q) {
    double a = sup_e[in[q]];
    if (a > 0.0 && a > sup_e[in[q - 1]] && a >= sup_e[in[q + 1]]) peaks.push_back(in[q]);
  }
  DecayFit fit;
  std::vector<std::size_t> use;
  if (peaks.size() >= 3) {
    use = peaks;
    fit.peaks = true;
  } else {
    for (auto i : in)
      if (sup_e[i] > 0.0) use.push_back(i);
  }
  if (use.size() < 2)
    throw Error(ErrorKind::insufficient_window, "field vanishes in the decay window", "window");
  std::vector<double> x, y;
  for (auto i : use) {
    x.push_back(t[i]);
    y.push_back(std::log(sup_e[i]));
  }
  LineFit line = least_squares_line(x, y);
  fit.rate = -line.slope;
  fit.prefactor = std::exp(line.intercept);
  fit.points = use.size();
  double ss = 0.0;
  for (std::size_t q = 0; q < x.size(); ++q) {
    double model = std::exp(line.intercept + line.slope * x[q]);
    double r = std::exp(y[q]) / model - 1.0;
    ss += r * r;
  }
  fit.residual = std::sqrt(ss / static_cast<double>(x.size()));
  return fit;
}

// sup_x |E(t, x)| on the 256-point x grid for every time level.
inline std::vector<double> sup_field(const std::map<int, std::vector<cplx>>& field, std::size_t nt) {
  std::vector<double> out(nt);
  for (std::size_t n = 0; n < nt; ++n) {
    std::map<int, cplx> modes;
    for (const auto& [m, s] : field) modes[m] = s[n];
    out[n] = snapshot_from_modes(std::move(modes)).sup_exact;
  }
  return out;
}

struct LayerBound {
  int p = 0;
  std::size_t keys = 0;
  double M_f = 0.0;       // sup |f| e^{lambda0 <k,eta,p,eta'>} <k>
  double M_f_main = 0.0;  // sup |f| e^{lambda0 <k,eta,p,eta'>}
  double M_f_est = 0.0;   // sup |f| e^{lambda_p(t) <k,eta,p,eta'>} <k>
  double M_rho = 0.0;     // sup |rho| e^{lambda_p(t) <k,eta,p,L eta - K k t>} <t>^sigma
  double root = 0.0;      // M_f^{1/p}
};

struct BoundReport {
  BoundProfile profile;
  std::vector<LayerBound> per_p;
  bool finite = true;
  bool geometric = true;  // root_p <= 1.2 root_{p-1} for p >= 3
};

// Decay exponent sigma of the layer-one densities, |rho| ~ <t>^-sigma, from a
// log-log fit of their running future maximum over t >= 1, clamped to [1.01, 4].
inline double fit_sigma(const CascadeState& state) {
  const auto& cfg = state.config;
  if (state.layers.empty()) return 1.5;
  std::vector<double> env(cfg.nt());
  for (const auto& [key, e] : state.layers[0])
    for (std::size_t n = 0; n < cfg.nt(); ++n) env[n] = std::max(env[n], std::abs(e.history.rho[n]));
  double m = 0.0;
  for (std::size_t n = cfg.nt(); n-- > 0;) {
    m = std::max(m, env[n]);
    env[n] = m;
  }
  std::vector<double> x, y;
  for (std::size_t n = 0; n < cfg.nt(); ++n) {
    if (cfg.t[n] < 1.0 || env[n] <= 0.0 || env[n] < 1e-14 * env[0]) continue;
    x.push_back(std::log(bracket(cfg.t[n])));
    y.push_back(std::log(env[n]));
  }
  if (x.size() < 2) return 1.5;
  return std::clamp(-least_squares_line(x, y).slope, 1.01, 4.0);
}

inline BoundReport verify_layer_bound(const CascadeState& state, const BoundProfile& profile) {
  profile.validate();
  const auto& cfg = state.config;
  BoundReport report;
  report.profile = profile;
  for (int p = 1; p <= state.completed(); ++p) {
    LayerBound b;
    b.p = p;
    const auto& layer = state.layers[static_cast<std::size_t>(p - 1)];
    b.keys = layer.size();
    for (const auto& [key, e] : layer) {
      const double kb = bracket(key.k);
      for (std::size_t n = 0; n < cfg.nt(); ++n) {
        const double lp = profile.rate(cfg.t[n], p);
        auto row = e.profile.row(n);
        for (std::size_t j = 0; j < cfg.ne(); ++j) {
          const double a = std::abs(row[j]);
          if (a == 0.0) continue;
          const double br = bracket(key.k, key.eta, p, cfg.etap[j]);
          const double w0 = std::exp(cfg.lambda0 * br);
          b.M_f_main = std::max(b.M_f_main, a * w0);
          b.M_f = std::max(b.M_f, a * w0 * kb);
          b.M_f_est = std::max(b.M_f_est, a * std::exp(lp * br) * kb);
        }
        const double x = cfg.L * key.eta - static_cast<double>(cfg.K) * key.k * cfg.t[n];
        const double wr = std::exp(lp * bracket(key.k, key.eta, p, x)) * std::pow(bracket(cfg.t[n]), profile.sigma);
        b.M_rho = std::max(b.M_rho, std::abs(e.history.rho[n]) * wr);
      }
    }
    b.root = std::pow(b.M_f, 1.0 / p);
    report.finite = report.finite && std::isfinite(b.M_f) && std::isfinite(b.M_rho) && std::isfinite(b.M_f_est);
    if (p >= 3 && b.root > 1.2 * report.per_p.back().root) report.geometric = false;
    report.per_p.push_back(b);
  }
  return report;
}

}  // namespace echolab
