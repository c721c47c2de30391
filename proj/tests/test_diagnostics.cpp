#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "echolab/diagnostics.hpp"

using namespace echolab;

namespace {

bool has_echo(const std::vector<PredictedEcho>& v, int mode, double time) {
  return std::any_of(v.begin(), v.end(), [&](const auto& p) { return p.mode == mode && std::abs(p.time - time) < 1e-12; });
}

}  // namespace

TEST(Diagnostics, PairEchoTime) {
  std::vector<EchoWave> w{{1, 2}, {1, -1}};
  auto pred = predicted_echo_times(w, 1, 1, 2);
  EXPECT_TRUE(has_echo(pred, 2, 0.5));
  EXPECT_TRUE(has_echo(pred, 1, 2.0));
  EXPECT_TRUE(has_echo(pred, 1, -1.0));
  for (const auto& p : pred)
    if (p.mode == 2 && std::abs(p.time - 0.5) < 1e-12) EXPECT_EQ(p.order, 2);
  EXPECT_TRUE(std::is_sorted(pred.begin(), pred.end(), [](const auto& a, const auto& b) {
    return std::tie(a.time, a.mode) < std::tie(b.time, b.mode);
  }));
}

TEST(Diagnostics, SingleWaveOnlyCriticalTime) {
  std::vector<EchoWave> w{{2, 3}};
  auto pred = predicted_echo_times(w, 1, 2, 3);
  for (const auto& p : pred) EXPECT_DOUBLE_EQ(p.time, 3.0);
  EXPECT_EQ(pred.size(), 3u);  // modes 2, 4, 6
}

TEST(Diagnostics, ZeroWavenumberSumExcluded) {
  std::vector<EchoWave> w{{1, 3}, {-1, 2}};
  auto pred = predicted_echo_times(w, 1, 1, 2);
  for (const auto& p : pred) EXPECT_NE(p.mode, 0);
  for (const auto& p : pred)
    for (const auto& g : p.generators) EXPECT_FALSE(g.size() == 2 && g[0] == 0 && g[1] == 1);
}

TEST(Diagnostics, PredictionIsPermutationInvariant) {
  std::vector<EchoWave> w{{1, 2}, {1, -1}, {-1, -2}, {2, 5}};
  auto a = predicted_echo_times(w, 2, 3, 3);
  std::reverse(w.begin(), w.end());
  auto b = predicted_echo_times(w, 2, 3, 3);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].mode, b[i].mode);
    EXPECT_EQ(a[i].time, b[i].time);
    EXPECT_EQ(a[i].order, b[i].order);
  }
}

TEST(Diagnostics, BoundRateMonotone) {
  BoundProfile bp;
  for (int p = 1; p < 6; ++p)
    for (double t = 0.0; t < 50.0; t += 0.5) {
      EXPECT_GT(bp.rate(t, p), bp.rate(t + 0.5, p));
      EXPECT_GT(bp.rate(t, p), bp.rate(t, p + 1));
      EXPECT_GT(bp.rate(t, p), bp.lambda0);
    }
  BoundProfile bad;
  bad.sigma = 1.0;
  EXPECT_THROW(bad.validate(), Error);
}

TEST(Diagnostics, ZeroFieldHasNoEchoes) {
  auto t = UniformGrid::time(0.05, 10.0);
  std::map<int, std::vector<cplx>> f{{1, std::vector<cplx>(t.size)}, {2, std::vector<cplx>(t.size)}};
  auto det = detect_echoes(t, f, 0.0);
  EXPECT_TRUE(det.echoes.empty());
  EXPECT_TRUE(det.unmatched.empty());
}

TEST(Diagnostics, SyntheticBurstMatched) {
  auto t = UniformGrid::time(0.05, 20.0);
  std::vector<cplx> s(t.size);
  for (std::size_t n = 0; n < t.size; ++n) s[n] = std::exp(-(t[n] - 3.0) * (t[n] - 3.0) * 4.0) + 0.5 * std::exp(-(t[n] - 12.0) * (t[n] - 12.0) * 4.0);
  std::vector<PredictedEcho> pred{{1, 3.1, 2, {}}};
  auto det = detect_echoes(t, {{1, s}}, 1e-6, pred);
  ASSERT_EQ(det.echoes.size(), 1u);
  EXPECT_NEAR(det.echoes[0].time, 3.0, 1e-12);
  EXPECT_EQ(det.echoes[0].order, 2);
  ASSERT_EQ(det.unmatched.size(), 1u);
  EXPECT_NEAR(det.unmatched[0].time, 12.0, 1e-12);
  EXPECT_DOUBLE_EQ(det.window, 0.4);
  auto half = s;
  for (auto& z : half) z *= 0.25;
  estimate_orders(det, t, {{1, half}});
  EXPECT_NEAR(*det.echoes[0].scaling_exponent, 2.0, 1e-12);
  EXPECT_EQ(det.unmatched[0].order, 2);
}

TEST(Diagnostics, DecayFitRecoversRate) {
  auto t = UniformGrid::time(0.05, 20.0);
  std::vector<double> smooth(t.size), wavy(t.size);
  for (std::size_t n = 0; n < t.size; ++n) {
    smooth[n] = 3.0 * std::exp(-0.7 * t[n]);
    wavy[n] = 3.0 * std::exp(-0.7 * t[n]) * std::abs(std::cos(2.5 * t[n]));
  }
  auto a = fit_field_decay(t, smooth, 2.0);
  EXPECT_NEAR(a.rate, 0.7, 0.007);
  EXPECT_NEAR(a.prefactor, 3.0, 0.03);
  EXPECT_LT(a.residual, 1e-10);
  auto b = fit_field_decay(t, wavy, 2.0);
  EXPECT_TRUE(b.peaks);
  EXPECT_NEAR(b.rate, 0.7, 0.007);
}

TEST(Diagnostics, DecayFitErrors) {
  auto t = UniformGrid::time(0.05, 20.0);
  std::vector<double> zero(t.size);
  try {
    fit_field_decay(t, zero, 2.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::insufficient_window);
  }
  std::vector<double> one(t.size, 1.0);
  EXPECT_THROW(fit_field_decay(t, one, 19.99), Error);
}

TEST(Diagnostics, SupFieldUsesAllModes) {
  std::map<int, std::vector<cplx>> f{{1, {cplx(1.0, 0.0)}}, {-1, {cplx(1.0, 0.0)}}};
  auto s = sup_field(f, 1);
  EXPECT_NEAR(s[0], 2.0, 1e-12);  // 2 cos x
}

namespace {

CascadeConfig bound_config() {
  CascadeConfig cfg;
  cfg.K = 1;
  cfg.L = 1;
  cfg.k_max = 1;
  cfg.eta_max = 2;
  cfg.p_max = 2;
  cfg.etap = UniformGrid::closed(-30.0, 30.0, 0.25);
  cfg.t = UniformGrid::time(0.05, 6.0);
  return cfg;
}

}  // namespace

TEST(Diagnostics, ZeroLayersGiveZeroConstants) {
  auto state = run_cascade(bound_config(), Equilibrium::gaussian(), InitialData::from_modes({}));
  auto r = verify_layer_bound(state, {});
  ASSERT_EQ(r.per_p.size(), 2u);
  for (const auto& b : r.per_p) {
    EXPECT_EQ(b.M_f, 0.0);
    EXPECT_EQ(b.M_rho, 0.0);
  }
  EXPECT_TRUE(r.finite);
}

TEST(Diagnostics, LayerOneConstantIndependentOfPopulatedMode) {
  // Saturating data: the weighted sup of layer one stays O(1) whichever single mode is populated.
  auto cfg = bound_config();
  cfg.p_max = 1;
  std::vector<double> m;
  for (auto [k, eta] : std::vector<std::pair<int, int>>{{1, 0}, {1, 2}, {1, -2}}) {
    auto state = run_cascade(cfg, Equilibrium::gaussian(), InitialData::from_modes({{k, eta, {1.0, 0.0}}}));
    BoundProfile bp;
    bp.lambda0 = cfg.lambda0;
    auto r = verify_layer_bound(state, bp);
    m.push_back(r.per_p[0].M_f);
  }
  for (double v : m) {
    EXPECT_GT(v, 0.1);
    EXPECT_LT(v, 3.0);
  }
}

TEST(Diagnostics, BoundReportFields) {
  auto state = run_cascade(bound_config(), Equilibrium::gaussian(),
                           InitialData::from_modes({{1, 2, {1.0, 0.0}}, {1, -1, {1.0, 0.0}}}));
  BoundProfile bp;
  bp.sigma = fit_sigma(state);
  EXPECT_GE(bp.sigma, 1.01);
  EXPECT_LE(bp.sigma, 4.0);
  auto r = verify_layer_bound(state, bp);
  EXPECT_TRUE(r.finite);
  for (const auto& b : r.per_p) {
    EXPECT_GT(b.keys, 0u);
    EXPECT_GE(b.M_f, b.M_f_main);  // <k> >= 1
    EXPECT_GE(b.M_f_est, b.M_f);   // lambda_p(t) > lambda0
    EXPECT_NEAR(b.root, std::pow(b.M_f, 1.0 / b.p), 1e-12);
  }
}

TEST(Diagnostics, EchoAmplitudesScaleExactly) {
  auto state = run_cascade(bound_config(), Equilibrium::gaussian(),
                           InitialData::from_modes({{1, 2, {1.0, 0.0}}, {1, -1, {1.0, 0.0}}}));
  auto f = synthesize_field_series(state);
  auto h = synthesize_field_series(state, state.config.epsilon / 2.0);
  // mode 2 is purely second order up to p_max = 2
  for (std::size_t n = 1; n < state.config.nt(); n += 9)
    if (std::abs(f.at(2)[n]) > 0.0) EXPECT_NEAR(std::abs(f.at(2)[n]) / std::abs(h.at(2)[n]), 4.0, 1e-12);
}
