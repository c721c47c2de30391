#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "echolab/kernel.hpp"

using namespace echolab;

namespace {

// mu_hat = 1 gives A(t) = t, so G + t*G = -t has the solution G = -sin t.
Equilibrium flat() {
  return Equilibrium::custom([](double) { return cplx(1.0, 0.0); }, 1.0, 1.0);
}

}  // namespace

TEST(Gregory, ExactForCubics) {
  for (std::size_t n = 2; n <= 12; ++n) {
    const double dt = 0.3;
    std::vector<double> f(n + 1);
    for (std::size_t j = 0; j <= n; ++j) {
      double t = j * dt;
      f[j] = 1.0 - 2.0 * t + 0.5 * t * t + 0.25 * t * t * t;
    }
    double T = n * dt;
    double exact = T - T * T + T * T * T / 6.0 + T * T * T * T / 16.0;
    EXPECT_NEAR(gregory::integrate<double>(f, dt), exact, 1e-12 * std::max(1.0, std::abs(exact))) << n;
  }
}

TEST(Gregory, FourthOrderOnSmoothIntegrand) {
  auto err = [](std::size_t n) {
    std::vector<double> f(n + 1);
    double dt = 2.0 / n;
    for (std::size_t j = 0; j <= n; ++j) f[j] = std::exp(std::sin(j * dt));
    std::vector<double> g(4 * n + 1);
    for (std::size_t j = 0; j <= 4 * n; ++j) g[j] = std::exp(std::sin(j * dt / 4));
    return std::abs(gregory::integrate<double>(f, dt) - gregory::integrate<double>(g, dt / 4));
  };
  double order = std::log2(err(20) / err(40));
  EXPECT_GT(order, 3.7);
}

TEST(Gregory, RunningIntegralMatchesBatch) {
  const double dt = 0.05;
  RunningIntegral run(2, dt);
  std::vector<cplx> a, b;
  for (int n = 0; n < 30; ++n) {
    double t = n * dt;
    cplx x(std::cos(t), t * t), y(std::exp(-t), 1.0);
    a.push_back(x);
    b.push_back(y);
    std::vector<cplx> row{x, y}, out(2);
    run.push(row);
    run.value(out);
    EXPECT_NEAR(std::abs(out[0] - gregory::integrate<cplx>(a, dt)), 0.0, 1e-13) << n;
    EXPECT_NEAR(std::abs(out[1] - gregory::integrate<cplx>(b, dt)), 0.0, 1e-13) << n;
  }
}

TEST(Gregory, ConvolutionIsSymmetric) {
  std::vector<cplx> a, b;
  for (int i = 0; i < 17; ++i) {
    a.push_back({std::sin(0.3 * i), 0.1 * i});
    b.push_back({std::exp(-0.2 * i), std::cos(i)});
  }
  for (std::size_t n = 0; n < a.size(); ++n)
    EXPECT_NEAR(std::abs(gregory::convolve_at(a, b, n, 0.1) - gregory::convolve_at(b, a, n, 0.1)), 0.0, 1e-14);
}

TEST(Kernel, VolterraAnalyticOracle) {
  auto eq = flat();
  auto grid = UniformGrid::time(0.01, 10.0);
  auto kern = kernel_volterra(eq, 1, grid);
  double err = 0.0;
  for (std::size_t i = 0; i < grid.size; ++i) err = std::max(err, std::abs(kern.values[i] + std::sin(grid[i])));
  // the trapezoid first step leaves dt^3/6
  EXPECT_LT(err, 2e-7);
  EXPECT_LT(kern.residual, 1e-12);
}

TEST(Kernel, VolterraConvergenceOrder) {
  auto eq = flat();
  auto err = [&](double dt) {
    auto grid = UniformGrid::time(dt, 5.0);
    auto kern = kernel_volterra(eq, 1, grid);
    double e = 0.0;
    for (std::size_t i = 0; i < grid.size; ++i) e = std::max(e, std::abs(kern.values[i] + std::sin(grid[i])));
    return e;
  };
  EXPECT_GT(std::log2(err(0.1) / err(0.05)), 2.8);
}

TEST(Kernel, ApplyResolventSolvesDensityEquation) {
  // rho + t*rho = 1 has rho = cos t.
  auto eq = flat();
  auto grid = UniformGrid::time(0.01, 8.0);
  auto kern = kernel_volterra(eq, 1, grid);
  std::vector<cplx> ones(grid.size, cplx(1.0, 0.0));
  auto rho = apply_resolvent(kern, grid, ones);
  for (std::size_t i = 0; i < grid.size; i += 50) EXPECT_NEAR(std::abs(rho[i] - std::cos(grid[i])), 0.0, 1e-7);
  EXPECT_THROW(apply_resolvent(kern, UniformGrid::time(0.02, 8.0), std::vector<cplx>(401)), Error);
}

TEST(Kernel, ZeroEquilibriumGivesZeroKernel) {
  auto kern = kernel_volterra(Equilibrium::zero(), 2, UniformGrid::time(0.05, 5.0));
  for (const auto& g : kern.values) EXPECT_EQ(g, cplx{});
  EXPECT_EQ(kern.fitted_c1, 0.0);
}

TEST(Kernel, GaussianDecayAndEnvelope) {
  auto eq = Equilibrium::gaussian();
  auto grid = UniformGrid::time(0.01, 10.0);
  auto k1 = kernel_volterra(eq, 1, grid);
  auto k2 = kernel_volterra(eq, 2, grid);
  EXPECT_GT(k1.fitted_theta1, 0.0);
  EXPECT_GT(k2.fitted_theta1, 0.0);
  EXPECT_GE(k2.rate(), 1.5 * k1.rate());
  for (const auto* k : {&k1, &k2})
    for (std::size_t i = 0; i < grid.size; ++i) ASSERT_LE(std::abs(k->values[i]), k->envelope(grid[i]));
  // decay rate of k = 1 is close to the Landau root -0.4797
  EXPECT_NEAR(k1.rate(), 0.48, 0.02);
}

TEST(Kernel, VolterraHermitianInK) {
  auto eq = Equilibrium::gaussian();
  auto grid = UniformGrid::time(0.05, 5.0);
  auto a = kernel_volterra(eq, 3, grid);
  auto b = kernel_volterra(eq, -3, grid);
  for (std::size_t i = 0; i < grid.size; ++i) EXPECT_NEAR(std::abs(a.values[i] - std::conj(b.values[i])), 0.0, 1e-15);
}

TEST(Kernel, ContourAgreesWithVolterra) {
  auto eq = Equilibrium::gaussian();
  auto grid = UniformGrid::time(0.01, 10.0);
  for (int k : {1, 3}) {
    auto kern = kernel_volterra(eq, k, grid);
    ContourInverter inv(eq, k);
    double sup = sup_abs(kern.values), diff = 0.0;
    for (std::size_t i = 0; i < grid.size; ++i) diff = std::max(diff, std::abs(inv(grid[i]) - kern.values[i]));
    EXPECT_LT(diff / sup, 1e-5) << k;
    EXPECT_GT(inv.min_symbol_modulus(), 1e-3);
  }
}

TEST(Kernel, ContourBacksOffNearLandauRoot) {
  ContourInverter inv(Equilibrium::gaussian(), 1);
  // the default line at -0.5 passes the k = 1 root at -0.48
  EXPECT_LT(inv.theta1_prime(), 0.48);
  EXPECT_GT(inv.theta1_prime(), 0.0);
}

TEST(Kernel, ContourRejectsUnstableEquilibrium) {
  auto eq = Equilibrium::custom(
      [](double e) { return cplx(-3.0 * std::sqrt(2.0 * std::numbers::pi) * std::exp(-e * e / 2.0)); },
      3.0 * std::sqrt(2.0 * std::numbers::pi) * std::exp(2.0), 2.0);
  try {
    ContourInverter inv(eq, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::contour_unsafe);
  }
  try {
    kernel_volterra(eq, 1, UniformGrid::time(0.05, 60.0), 1e3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::instability);
  }
}

TEST(Kernel, Validation) {
  auto eq = Equilibrium::gaussian();
  EXPECT_THROW(kernel_volterra(eq, 0, UniformGrid::time(0.1, 1.0)), Error);
  EXPECT_THROW(ContourInverter(eq, 0), Error);
  ContourSpec bad;
  bad.theta1_prime = 3.0;
  EXPECT_THROW(ContourInverter(eq, 1, bad), Error);
}

TEST(Kernel, EnvelopeFitOnExactExponential) {
  auto grid = UniformGrid::time(0.1, 10.0);
  std::vector<cplx> v(grid.size);
  for (std::size_t i = 0; i < grid.size; ++i) v[i] = 2.0 * std::exp(-0.6 * grid[i]) * std::polar(1.0, 3.0 * grid[i]);
  auto fit = fit_envelope(2, grid, v);
  EXPECT_NEAR(fit.theta1, 0.3, 1e-10);
  EXPECT_NEAR(fit.c1, 2.0, 1e-9);
}
