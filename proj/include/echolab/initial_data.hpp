#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "echolab/equilibrium.hpp"
#include "echolab/error.hpp"
#include "echolab/grid.hpp"

namespace echolab {

struct CascadeConfig {
  int K = 1;
  int L = 1;
  double c = 1.0;
  double epsilon = 1e-3;
  double lambda0 = 0.5;
  int k_max = 1;
  int eta_max = 1;
  int p_max = 2;
  UniformGrid etap = UniformGrid::closed(-60.0, 60.0, 0.25);
  UniformGrid t = UniformGrid::time(0.05, 20.0);
  double source_floor = 1e-14;
  int threads = 1;

  void validate(const Equilibrium& eq) const {
    if (K < 1) throw Error(ErrorKind::validation, "K must be a positive integer", "K");
    if (L < 1) throw Error(ErrorKind::validation, "L must be a positive integer", "L");
    if (!(c > 0.0)) throw Error(ErrorKind::validation, "c must be positive", "c");
    if (static_cast<double>(L) > c * static_cast<double>(K) * (1.0 + 1e-12))
      throw Error(ErrorKind::validation, "L must not exceed c*K", "L");
    if (!(epsilon > 0.0) || !std::isfinite(epsilon))
      throw Error(ErrorKind::validation, "epsilon must be positive", "epsilon");
    if (!(lambda0 > 0.0)) throw Error(ErrorKind::validation, "lambda0 must be positive", "lambda0");
    if (lambda0 > eq.theta0() / 4.0 * (1.0 + 1e-12))
      throw Error(ErrorKind::validation, "lambda0 must not exceed theta0/4", "lambda0");
    if (k_max < 1) throw Error(ErrorKind::validation, "k_max must be at least 1", "k_max");
    if (eta_max < 0) throw Error(ErrorKind::validation, "eta_max must be nonnegative", "eta_max");
    if (p_max < 1) throw Error(ErrorKind::validation, "p_max must be at least 1", "p_max");
    if (etap.size < 5) throw Error(ErrorKind::validation, "etap grid needs at least 5 points", "etap_range");
    if (etap.size % 2 == 0 || std::abs(etap.start + etap.back()) > 1e-9 * etap.step)
      throw Error(ErrorKind::validation, "etap grid must be symmetric about 0 and contain 0", "etap_range");
    if (t.empty() || !(t.step > 0.0)) throw Error(ErrorKind::validation, "time grid is empty", "dt");
    if (!(source_floor >= 0.0)) throw Error(ErrorKind::validation, "source floor must be nonnegative", "source_floor");
  }

  std::size_t nt() const { return t.size; }
  std::size_t ne() const { return etap.size; }
};

struct WaveMode {
  int k = 0;
  int eta = 0;
  cplx scale{1.0, 0.0};
};

// Data f0_{k,eta}(eta') = scale * exp(-2 lambda0 <k, eta, eta'>).
class InitialData {
 public:
  InitialData() = default;

  static InitialData from_modes(std::vector<WaveMode> modes, bool symmetrize = true) {
    std::map<std::pair<int, int>, cplx> table;
    for (const auto& m : modes) {
      if (m.k == 0) throw Error(ErrorKind::validation, "initial data modes must have k != 0", "initial_data");
      auto [it, fresh] = table.emplace(std::make_pair(m.k, m.eta), m.scale);
      if (!fresh) throw Error(ErrorKind::validation, "duplicate initial data mode", "initial_data");
    }
    if (symmetrize) {
      auto copy = table;
      for (const auto& [key, s] : copy) {
        auto mirror = std::make_pair(-key.first, -key.second);
        auto it = table.find(mirror);
        if (it == table.end()) {
          table.emplace(mirror, std::conj(s));
        } else if (std::abs(it->second - std::conj(s)) > 1e-14 * std::max(1.0, std::abs(s))) {
          throw Error(ErrorKind::validation, "mode and its mirror are not conjugate", "initial_data");
        }
      }
    }
    InitialData data;
    for (const auto& [key, s] : table) data.modes_.push_back({key.first, key.second, s});
    return data;
  }

  // Every (k, eta) with 1 <= |k| <= k_max and |eta| <= eta_max at the given scale.
  static InitialData uniform(int k_max, int eta_max, double scale = 1.0) {
    std::vector<WaveMode> modes;
    for (int k = -k_max; k <= k_max; ++k) {
      if (k == 0) continue;
      for (int eta = -eta_max; eta <= eta_max; ++eta) modes.push_back({k, eta, cplx(scale, 0.0)});
    }
    return from_modes(std::move(modes), false);
  }

  const std::vector<WaveMode>& modes() const { return modes_; }
  bool empty() const { return modes_.empty(); }

  bool hermitian() const {
    for (const auto& m : modes_) {
      auto it = std::find_if(modes_.begin(), modes_.end(),
                             [&](const WaveMode& o) { return o.k == -m.k && o.eta == -m.eta; });
      if (it == modes_.end() || std::abs(it->scale - std::conj(m.scale)) > 1e-14) return false;
    }
    return true;
  }

  static cplx profile(const WaveMode& m, double etap, double lambda0) {
    return m.scale * std::exp(-2.0 * lambda0 * bracket(m.k, m.eta, etap));
  }

  static std::vector<cplx> sample(const WaveMode& m, const UniformGrid& etap, double lambda0) {
    std::vector<cplx> v(etap.size);
    for (std::size_t j = 0; j < etap.size; ++j) v[j] = profile(m, etap[j], lambda0);
    return v;
  }

  // Mode-set truncation and the bound |f0| <= exp(-2 lambda0 <k, eta, eta'>).
  void validate(const CascadeConfig& cfg) const {
    for (const auto& m : modes_) {
      if (std::abs(m.k) > cfg.k_max || std::abs(m.eta) > cfg.eta_max)
        throw Error(ErrorKind::validation,
                    "initial mode (" + std::to_string(m.k) + "," + std::to_string(m.eta) + ") outside k_max/eta_max",
                    "initial_data");
      for (std::size_t j = 0; j < cfg.etap.size; ++j) {
        double bound = std::exp(-2.0 * cfg.lambda0 * bracket(m.k, m.eta, cfg.etap[j]));
        if (std::abs(profile(m, cfg.etap[j], cfg.lambda0)) > bound * (1.0 + 1e-12))
          throw Error(ErrorKind::bound_violation,
                      "initial mode (" + std::to_string(m.k) + "," + std::to_string(m.eta) +
                          ") exceeds exp(-2 lambda0 <k,eta,eta'>)",
                      "initial_data");
      }
    }
  }

 private:
  std::vector<WaveMode> modes_;
};

}  // namespace echolab
