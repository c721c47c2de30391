#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "echolab/cascade.hpp"

using namespace echolab;

namespace {

CascadeConfig small_config(int p_max = 3) {
  CascadeConfig cfg;
  cfg.K = 1;
  cfg.L = 1;
  cfg.epsilon = 1e-3;
  cfg.lambda0 = 0.5;
  cfg.k_max = 1;
  cfg.eta_max = 2;
  cfg.p_max = p_max;
  cfg.etap = UniformGrid::closed(-40.0, 40.0, 0.25);
  cfg.t = UniformGrid::time(0.05, 10.0);
  return cfg;
}

InitialData two_waves() { return InitialData::from_modes({{1, 2, {1.0, 0.0}}, {1, -1, {1.0, 0.0}}}); }

const CascadeState& shared_run() {
  static const CascadeState state = run_cascade(small_config(), Equilibrium::gaussian(), two_waves());
  return state;
}

}  // namespace

TEST(Cascade, SextetsMatchBruteForce) {
  const auto& state = shared_run();
  for (int p = 2; p <= state.completed(); ++p) {
    for (const auto& [key, e] : state.layers[p - 1]) {
      std::set<std::tuple<int, int, int>> brute;
      for (int p1 = 1; p1 < p; ++p1)
        for (const auto& [a, ea] : state.layers[p1 - 1])
          for (const auto& [b, eb] : state.layers[p - p1 - 1])
            if (a.k != 0 && a.k + b.k == key.k && a.eta + b.eta == key.eta) brute.insert({a.k, a.eta, a.p});
      auto sextets = enumerate_sextets(state, key);
      std::set<std::tuple<int, int, int>> got;
      for (const auto& s : sextets) {
        const auto& k1 = s.first->profile.key;
        const auto& k2 = s.second->profile.key;
        EXPECT_EQ(k1.k + k2.k, key.k);
        EXPECT_EQ(k1.eta + k2.eta, key.eta);
        EXPECT_EQ(k1.p + k2.p, key.p);
        got.insert({k1.k, k1.eta, k1.p});
      }
      EXPECT_EQ(got, brute) << key.str();
      EXPECT_EQ(got.size(), sextets.size());
    }
  }
}

TEST(Cascade, StoredKeysAreCandidates) {
  const auto& state = shared_run();
  for (int p = 2; p <= state.completed(); ++p) {
    auto cand = candidate_keys(state, p);
    std::set<LayerKey> c(cand.begin(), cand.end());
    for (const auto& [key, e] : state.layers[p - 1]) EXPECT_TRUE(c.count(key)) << key.str();
  }
  // two waves with k = 1 give |k| <= p at layer p
  for (int p = 1; p <= state.completed(); ++p)
    for (const auto& [key, e] : state.layers[p - 1]) EXPECT_LE(std::abs(key.k), p);
}

TEST(Cascade, FreeStreamingOracle) {
  // With mu = 0 the kernel vanishes and E_{k,eta,1}(t) = f0(Kkt - L eta) / (i K k).
  auto cfg = small_config(1);
  cfg.K = 2;
  cfg.L = 2;
  auto data = InitialData::from_modes({{1, 1, {0.5, 0.25}}});
  auto state = run_cascade(cfg, Equilibrium::zero(), data);
  for (const auto& m : data.modes()) {
    const auto* e = state.find({m.k, m.eta, 1});
    ASSERT_NE(e, nullptr);
    for (std::size_t n = 0; n < cfg.nt(); ++n) {
      double x = cfg.K * m.k * cfg.t[n] - cfg.L * m.eta;
      cplx expect = InitialData::profile(m, x, cfg.lambda0) / cplx(0.0, cfg.K * m.k);
      if (!in_range(cfg.etap, x)) continue;
      EXPECT_NEAR(std::abs(e->history.field[n] - expect), 0.0, 2e-4 * std::abs(m.scale)) << n;
    }
  }
}

TEST(Cascade, FreeStreamingAtGridPointsIsExact) {
  // K k dt is a multiple of the eta' step, so every moving point is a grid node.
  auto cfg = small_config(1);
  cfg.t = UniformGrid::time(0.25, 10.0);
  auto data = InitialData::from_modes({{1, 2, {1.0, 0.0}}});
  auto state = run_cascade(cfg, Equilibrium::zero(), data);
  const auto& m = data.modes().back();
  const auto* e = state.find({m.k, m.eta, 1});
  ASSERT_NE(e, nullptr);
  for (std::size_t n = 0; n < cfg.nt(); ++n) {
    double x = cfg.K * m.k * cfg.t[n] - cfg.L * m.eta;
    cplx expect = InitialData::profile(m, x, cfg.lambda0) / cplx(0.0, cfg.K * m.k);
    EXPECT_NEAR(std::abs(e->history.field[n] - expect), 0.0, 1e-15);
  }
}

TEST(Cascade, HermitianMirror) {
  const auto& state = shared_run();
  const auto& cfg = state.config;
  for (const auto& layer : state.layers)
    for (const auto& [key, e] : layer) {
      const auto* m = state.find({-key.k, -key.eta, key.p});
      ASSERT_NE(m, nullptr) << key.str();
      double scale = std::max(sup_abs(e.profile.values), 1e-300);
      double defect = 0.0;
      for (std::size_t n = 0; n < cfg.nt(); n += 7) {
        auto a = e.profile.row(n);
        auto b = m->profile.row(n);
        for (std::size_t j = 0; j < cfg.ne(); ++j)
          defect = std::max(defect, std::abs(a[j] - std::conj(b[cfg.ne() - 1 - j])));
      }
      EXPECT_LE(defect / scale, 1e-12) << key.str();
    }
}

TEST(Cascade, SynthesizedFieldIsReal) {
  const auto& state = shared_run();
  for (std::size_t n = 0; n < state.config.nt(); n += 10) {
    auto snap = synthesize_field(state, n);
    EXPECT_LE(snap.max_imag, 1e-12 * std::max(1.0, snap.sup_exact));
    EXPECT_LE(snap.sup_exact, snap.sup_bound * (1 + 1e-12));
  }
}

TEST(Cascade, EpsilonScalingIsExactReweighting) {
  const auto& state = shared_run();
  const double eps = state.config.epsilon;
  auto half = synthesize_field_series(state, eps / 2.0);
  std::map<int, std::vector<cplx>> manual;
  for (const auto& layer : state.layers)
    for (const auto& [key, e] : layer) {
      if (key.k == 0) continue;
      auto& s = manual[state.config.K * key.k];
      s.resize(state.config.nt());
      const double w = std::pow(eps / 2.0, key.p);
      for (std::size_t n = 0; n < s.size(); ++n) s[n] += w * e.history.field[n];
    }
  ASSERT_EQ(half.size(), manual.size());
  for (const auto& [mode, s] : manual)
    for (std::size_t n = 0; n < s.size(); ++n) EXPECT_EQ(half.at(mode)[n], s[n]);
  EXPECT_EQ(layer_weight(0.5, 3), 0.125);
}

TEST(Cascade, LayerDiagnosticsSmall) {
  const auto& state = shared_run();
  for (const auto& layer : state.layers)
    for (const auto& [key, e] : layer) {
      if (key.k == 0) continue;
      EXPECT_LT(e.diag.volterra_residual, 1e-4) << key.str();
      EXPECT_LT(e.diag.consistency, 5e-3) << key.str();
    }
}

TEST(Cascade, ThreadCountDoesNotChangeResults) {
  auto cfg = small_config(3);
  cfg.threads = 3;
  auto state = run_cascade(cfg, Equilibrium::gaussian(), two_waves());
  const auto& ref = shared_run();
  ASSERT_EQ(state.key_count(), ref.key_count());
  for (std::size_t p = 0; p < ref.layers.size(); ++p)
    for (const auto& [key, e] : ref.layers[p]) {
      const auto* o = state.find(key);
      ASSERT_NE(o, nullptr);
      EXPECT_EQ(o->profile.values, e.profile.values) << key.str();
      EXPECT_EQ(o->history.field, e.history.field) << key.str();
    }
}

TEST(Cascade, EmptyDataGivesEmptyLayers) {
  auto state = run_cascade(small_config(2), Equilibrium::gaussian(), InitialData::from_modes({}));
  EXPECT_EQ(state.key_count(), 0u);
  EXPECT_TRUE(synthesize_field_series(state).empty());
}

TEST(Cascade, AccumulateSourceIntegratesExactly) {
  auto cfg = small_config(1);
  const std::size_t nt = cfg.nt(), ne = cfg.ne();
  std::vector<cplx> init(ne, cplx(1.0, 0.0)), nhat(nt * ne);
  for (std::size_t n = 0; n < nt; ++n)
    for (std::size_t j = 0; j < ne; ++j) nhat[n * ne + j] = cplx(3.0 * cfg.t[n] * cfg.t[n], 1.0);
  auto s = accumulate_source(cfg, init, nhat);
  for (std::size_t n = 0; n < nt; n += 13) {
    double t = cfg.t[n];
    cplx expect(1.0 + t * t * t, t);
    if (n == 1) continue;  // trapezoid start
    EXPECT_NEAR(std::abs(s[n * ne + 5] - expect), 0.0, 1e-12 * std::max(1.0, t * t * t)) << n;
  }
}

TEST(Cascade, ConfigValidation) {
  auto eq = Equilibrium::gaussian();
  auto cfg = small_config();
  cfg.L = 2;
  EXPECT_THROW(cfg.validate(eq), Error);
  cfg = small_config();
  cfg.lambda0 = 0.6;  // theta0 / 4 = 0.5
  EXPECT_THROW(cfg.validate(eq), Error);
  cfg = small_config();
  cfg.etap = UniformGrid::closed(-40.0, 39.75, 0.25);
  EXPECT_THROW(cfg.validate(eq), Error);
  cfg = small_config();
  cfg.K = 0;
  try {
    cfg.validate(eq);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.field(), "K");
  }
}

TEST(Cascade, InitialDataValidation) {
  auto cfg = small_config();
  try {
    InitialData::from_modes({{1, 0, {1.5, 0.0}}}).validate(cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::bound_violation);
  }
  EXPECT_THROW(InitialData::from_modes({{0, 1, {1.0, 0.0}}}), Error);
  EXPECT_THROW(InitialData::from_modes({{2, 0, {1.0, 0.0}}}).validate(cfg), Error);
  EXPECT_THROW(InitialData::from_modes({{1, 1, {1.0, 0.0}}, {-1, -1, {0.5, 0.0}}}), Error);
  auto u = InitialData::uniform(1, 1, 0.5);
  EXPECT_EQ(u.modes().size(), 6u);
  EXPECT_TRUE(u.hermitian());
  EXPECT_TRUE(two_waves().hermitian());
  EXPECT_EQ(two_waves().modes().size(), 4u);
}

TEST(Cascade, KernelLookupFailsForMissingMode) {
  const auto& state = shared_run();
  EXPECT_THROW(state.kernel(99), Error);
  EXPECT_EQ(state.find({1, 2, 9}), nullptr);
}
