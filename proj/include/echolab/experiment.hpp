#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "echolab/cascade.hpp"
#include "echolab/config.hpp"
#include "echolab/diagnostics.hpp"
#include "echolab/equilibrium.hpp"
#include "echolab/io.hpp"
#include "echolab/kernel.hpp"
#include "echolab/reference_solver.hpp"

namespace echolab {

inline const std::vector<std::string>& experiment_modes() {
  static const std::vector<std::string> modes{"penrose", "kernel",  "cascade",      "direct",
                                              "compare", "echoes", "verify-bounds"};
  return modes;
}

namespace experiment_detail {

namespace fs = std::filesystem;

inline ordered_json margin_json(const MarginReport& r) {
  ordered_json j;
  j["margin"] = r.margin;
  j["k_at_min"] = r.k_at_min;
  j["tau_at_min"] = r.tau_at_min;
  j["resolved"] = r.resolved;
  j["max_jump"] = r.max_jump;
  j["samples"] = r.samples;
  j["unstable_modes"] = r.unstable_modes();
  j["per_mode"] = ordered_json::array();
  for (const auto& m : r.per_mode)
    j["per_mode"].push_back({{"k", m.k},
                             {"min_modulus", m.min_modulus},
                             {"tau_at_min", m.tau_at_min},
                             {"winding", m.winding},
                             {"max_jump", m.max_jump}});
  return j;
}

inline ordered_json run_penrose(const ExperimentConfig& cfg, const Equilibrium& eq, const fs::path& out) {
  MarginGrid grid;
  grid.tau_step = cfg.penrose.tau_step;
  auto report = penrose_margin(eq, cfg.penrose.k_max, cfg.penrose.tau_max, grid);
  ordered_json j = margin_json(report);
  write_json(out / "penrose.json", j);
  return j;
}

inline void write_kernel_csv(const fs::path& path, const std::vector<ResolventKernel>& kernels) {
  CsvWriter csv(path, {"k", "t", "re_G", "im_G", "envelope_bound"});
  for (const auto& kern : kernels)
    for (std::size_t n = 0; n < kern.values.size(); ++n) {
      csv.cell(kern.k).cell(kern.t_grid[n]).cell(kern.values[n].real()).cell(kern.values[n].imag());
      csv.cell(kern.envelope(kern.t_grid[n])).end_row();
    }
  csv.close();
}

inline ordered_json run_kernel(const ExperimentConfig& cfg, const Equilibrium& eq, const fs::path& out) {
  const auto grid = UniformGrid::time(cfg.kernel.dt, cfg.kernel.T);
  const bool volterra = cfg.kernel.route != "contour";
  const bool contour = cfg.kernel.route != "volterra";
  std::vector<ResolventKernel> vk, ck;
  ordered_json j;
  j["route"] = cfg.kernel.route;
  j["modes"] = ordered_json::array();
  ContourSpec spec;
  spec.tol = cfg.tol;
  for (int k : cfg.kernel.modes) {
    ordered_json m;
    m["k"] = k;
    if (volterra) {
      vk.push_back(kernel_volterra(eq, k, grid));
      m["volterra"] = {{"fitted_c1", vk.back().fitted_c1},
                       {"fitted_theta1", vk.back().fitted_theta1},
                       {"rate", vk.back().rate()},
                       {"residual", vk.back().residual}};
    }
    if (contour) {
      ContourInverter inv(eq, k, spec);
      ResolventKernel kern;
      kern.k = k;
      kern.t_grid = grid;
      kern.values.resize(grid.size);
      for (std::size_t n = 0; n < grid.size; ++n) kern.values[n] = inv(grid[n]);
      auto fit = fit_envelope(k, grid, kern.values);
      kern.fitted_c1 = fit.c1;
      kern.fitted_theta1 = fit.theta1;
      m["contour"] = {{"fitted_c1", kern.fitted_c1},
                      {"fitted_theta1", kern.fitted_theta1},
                      {"theta1_prime", inv.theta1_prime()},
                      {"lambda_max", inv.lambda_max()},
                      {"min_symbol_modulus", inv.min_symbol_modulus()}};
      ck.push_back(std::move(kern));
    }
    if (volterra && contour) {
      const auto& a = vk.back().values;
      const auto& b = ck.back().values;
      double diff = 0.0;
      for (std::size_t n = 0; n < a.size(); ++n) diff = std::max(diff, std::abs(a[n] - b[n]));
      m["max_abs_difference"] = diff;
      m["relative_difference"] = diff / std::max(sup_abs(a), 1e-300);
    }
    j["modes"].push_back(m);
  }
  write_kernel_csv(out / "kernel.csv", volterra ? vk : ck);
  if (volterra && contour) write_kernel_csv(out / "kernel_contour.csv", ck);
  write_json(out / "kernel.json", j);
  return j;
}

inline CascadeState cascade_for(const ExperimentConfig& cfg, const Equilibrium& eq) {
  auto data = cfg.initial.build(cfg.cascade);
  return run_cascade(cfg.cascade, eq, data);
}

inline void write_layers_csv(const fs::path& path, const CascadeState& state) {
  CsvWriter csv(path, {"k", "eta", "p", "t", "re_rho", "im_rho", "re_E", "im_E"});
  const auto& cfg = state.config;
  for (const auto& layer : state.layers)
    for (const auto& [key, e] : layer)
      for (std::size_t n = 0; n < cfg.nt(); ++n) {
        csv.cell(key.k).cell(key.eta).cell(key.p).cell(cfg.t[n]);
        csv.cell(e.history.rho[n].real()).cell(e.history.rho[n].imag());
        csv.cell(e.history.field[n].real()).cell(e.history.field[n].imag()).end_row();
      }
  csv.close();
}

inline void write_field_csv(const fs::path& path, const UniformGrid& t,
                            const std::map<int, std::vector<cplx>>& field) {
  CsvWriter csv(path, {"t", "mode", "re_E", "im_E", "sup_x_E"});
  for (std::size_t n = 0; n < t.size; ++n) {
    std::map<int, cplx> at;
    for (const auto& [m, s] : field) at[m] = s[n];
    const double sup = snapshot_from_modes(at).sup_exact;
    for (const auto& [m, e] : at) csv.cell(t[n]).cell(m).cell(e.real()).cell(e.imag()).cell(sup).end_row();
  }
  csv.close();
}

inline ordered_json cascade_summary(const CascadeState& state, const std::map<int, std::vector<cplx>>& field) {
  ordered_json j;
  j["layers"] = ordered_json::array();
  for (int p = 1; p <= state.completed(); ++p) {
    const auto& layer = state.layers[static_cast<std::size_t>(p - 1)];
    double residual = 0.0, consistency = 0.0, source = 0.0;
    std::size_t outside = 0;
    for (const auto& [key, e] : layer) {
      residual = std::max(residual, e.diag.volterra_residual);
      consistency = std::max(consistency, e.diag.consistency);
      source = std::max(source, e.diag.source_sup);
      outside += e.diag.shift_outside + e.diag.moving_outside;
    }
    j["layers"].push_back({{"p", p},
                           {"keys", layer.size()},
                           {"source_sup", source},
                           {"volterra_residual", residual},
                           {"consistency", consistency},
                           {"outside_points", outside}});
  }
  double imag = 0.0;
  for (std::size_t n = 0; n < state.config.nt(); ++n) {
    std::map<int, cplx> at;
    for (const auto& [m, s] : field) at[m] = s[n];
    imag = std::max(imag, snapshot_from_modes(at).max_imag);
  }
  j["max_imag_field"] = imag;
  return j;
}

inline ordered_json run_cascade_mode(const ExperimentConfig& cfg, const Equilibrium& eq, const fs::path& out) {
  auto state = cascade_for(cfg, eq);
  auto field = synthesize_field_series(state);
  write_layers_csv(out / "layers.csv", state);
  write_field_csv(out / "field.csv", state.config.t, field);
  auto j = cascade_summary(state, field);
  write_json(out / "cascade.json", j);
  return j;
}

inline DirectRun direct_for(const ExperimentConfig& cfg, const Equilibrium& eq, const fs::path& out) {
  auto data = cfg.initial.build(cfg.cascade);
  data.validate(cfg.cascade);
  auto state = init_from_modes(data, cfg.cascade, cfg.direct_m_max());
  DirectOptions opt;
  opt.linearized = cfg.direct.linearized;
  opt.transport = cfg.direct.transport;
  opt.guard = cfg.direct.guard;
  SnapshotHook hook;
  if (cfg.direct.snapshot_every > 0) {
    ensure_directory(out / "snapshots");
    const auto every = static_cast<std::size_t>(cfg.direct.snapshot_every);
    hook = [&out, every](std::size_t step, const SpectralState& s) {
      if (step % every != 0) return;
      char name[32];
      std::snprintf(name, sizeof name, "step_%07zu.vpsnap", step);
      write_snapshot((out / "snapshots" / name).string(), s);
    };
  }
  return run_direct(std::move(state), eq, cfg.horizon(), cfg.direct_dt(), opt, hook);
}

inline void write_direct_csv(const fs::path& path, const DirectRun& run) {
  CsvWriter csv(path, {"t", "k_prime", "re_E", "im_E"});
  for (std::size_t n = 0; n < run.t.size; ++n)
    for (std::size_t r = 0; r < run.rows(); ++r) {
      if (run.wavenumbers[r] == 0) continue;
      const cplx e = run.field[n * run.rows() + r];
      csv.cell(run.t[n]).cell(run.wavenumbers[r]).cell(e.real()).cell(e.imag()).end_row();
    }
  csv.close();
}

inline ordered_json direct_summary(const DirectRun& run) {
  return {{"steps", run.t.size},
          {"dt", run.t.step},
          {"rows", run.rows()},
          {"mass_drift", run.mass_drift},
          {"hermitian_defect", run.hermitian_defect}};
}

inline ordered_json run_direct_mode(const ExperimentConfig& cfg, const Equilibrium& eq, const fs::path& out) {
  auto run = direct_for(cfg, eq, out);
  write_direct_csv(out / "direct.csv", run);
  auto j = direct_summary(run);
  write_json(out / "direct.json", j);
  return j;
}

struct ModeDifference {
  int mode = 0;
  double max_abs = 0.0;
  double sup_cascade = 0.0;
  double relative = 0.0;
  double t_at_max = 0.0;
};

// Direct history sampled on the cascade grid; the direct step must divide the cascade step.
inline std::vector<ModeDifference> field_differences(const UniformGrid& t, const std::map<int, std::vector<cplx>>& cascade,
                                                     const DirectRun& run) {
  const double ratio = t.step / run.t.step;
  const auto stride = static_cast<std::size_t>(std::lround(ratio));
  if (stride < 1 || std::abs(ratio - static_cast<double>(stride)) > 1e-9 * ratio)
    throw Error(ErrorKind::grid_mismatch, "direct dt must divide the cascade dt", "direct.dt");
  std::vector<ModeDifference> out;
  for (const auto& [mode, series] : cascade) {
    if (mode <= 0) continue;
    auto d = run.field_series(mode);
    ModeDifference md;
    md.mode = mode;
    for (std::size_t n = 0; n < series.size(); ++n) {
      const std::size_t nd = n * stride;
      if (nd >= d.size()) break;
      md.sup_cascade = std::max(md.sup_cascade, std::abs(series[n]));
      const double diff = std::abs(series[n] - d[nd]);
      if (diff > md.max_abs) {
        md.max_abs = diff;
        md.t_at_max = t[n];
      }
    }
    md.relative = md.sup_cascade > 0.0 ? md.max_abs / md.sup_cascade : (md.max_abs > 0.0 ? INFINITY : 0.0);
    out.push_back(md);
  }
  return out;
}

inline ordered_json run_compare(const ExperimentConfig& cfg, const Equilibrium& eq, const fs::path& out) {
  auto state = cascade_for(cfg, eq);
  auto field = synthesize_field_series(state);
  auto run = direct_for(cfg, eq, out);
  write_layers_csv(out / "layers.csv", state);
  write_field_csv(out / "field.csv", state.config.t, field);
  write_direct_csv(out / "direct.csv", run);
  auto diffs = field_differences(state.config.t, field, run);
  CsvWriter csv(out / "compare.csv", {"t", "mode", "re_E_cascade", "im_E_cascade", "re_E_direct", "im_E_direct",
                                      "abs_diff"});
  const auto stride = static_cast<std::size_t>(std::lround(state.config.t.step / run.t.step));
  std::map<int, std::vector<cplx>> direct_series;
  for (const auto& [mode, series] : field)
    if (mode > 0) direct_series.emplace(mode, run.field_series(mode));
  for (std::size_t n = 0; n < state.config.nt(); ++n)
    for (const auto& [mode, series] : field) {
      if (mode <= 0) continue;
      const cplx c = series[n];
      const cplx d = direct_series.at(mode)[n * stride];
      csv.cell(state.config.t[n]).cell(mode).cell(c.real()).cell(c.imag()).cell(d.real()).cell(d.imag());
      csv.cell(std::abs(c - d)).end_row();
    }
  csv.close();
  ordered_json j;
  j["modes"] = ordered_json::array();
  double worst = 0.0;
  for (const auto& d : diffs) {
    j["modes"].push_back({{"mode", d.mode},
                          {"max_abs_diff", d.max_abs},
                          {"sup_cascade", d.sup_cascade},
                          {"relative_diff", d.relative},
                          {"t_at_max", d.t_at_max}});
    worst = std::max(worst, d.relative);
  }
  j["max_relative_diff"] = worst;
  j["direct"] = direct_summary(run);
  j["cascade"] = cascade_summary(state, field);
  write_json(out / "compare.json", j);
  return j;
}

inline std::vector<EchoWave> waves_of(const CascadeState& state) {
  std::vector<EchoWave> waves;
  for (const auto& s : state.seeds) waves.push_back({s.key.k, s.key.eta});
  return waves;
}

// Latest predicted echo on a nonnegative mode inside the run horizon.
inline double last_predicted_echo(std::span<const PredictedEcho> predicted, double horizon) {
  double last = 0.0;
  for (const auto& p : predicted)
    if (p.mode > 0 && p.time >= 0.0 && p.time <= horizon) last = std::max(last, p.time);
  return last;
}

inline ordered_json event_json(const EchoEvent& e) {
  ordered_json j;
  j["mode"] = e.mode;
  j["time"] = e.time;
  j["amplitude"] = e.amplitude;
  j["predicted_time"] = e.predicted_time ? ordered_json(*e.predicted_time) : ordered_json(nullptr);
  j["order"] = e.order;
  j["scaling_exponent"] = e.scaling_exponent ? ordered_json(*e.scaling_exponent) : ordered_json(nullptr);
  return j;
}

inline ordered_json run_report(const ExperimentConfig& cfg, const Equilibrium& eq, const fs::path& out) {
  auto state = cascade_for(cfg, eq);
  const auto& t = state.config.t;
  auto field = synthesize_field_series(state);
  auto half = synthesize_field_series(state, cfg.cascade.epsilon / 2.0);
  auto waves = waves_of(state);
  auto predicted = predicted_echo_times(waves, cfg.cascade.K, cfg.cascade.L, cfg.echo_depth());
  std::map<int, std::vector<cplx>> positive;
  for (const auto& [m, s] : field)
    if (m > 0) positive.emplace(m, s);
  auto det = detect_echoes(t, positive, cfg.echoes.noise_floor, predicted);
  estimate_orders(det, t, half);

  ordered_json j;
  j["echoes"] = ordered_json::array();
  for (const auto& e : det.echoes) j["echoes"].push_back(event_json(e));
  j["unmatched"] = ordered_json::array();
  for (const auto& e : det.unmatched) j["unmatched"].push_back(event_json(e));
  j["window"] = det.window;
  j["predicted"] = ordered_json::array();
  for (const auto& p : predicted)
    if (p.mode > 0 && p.time >= 0.0 && p.time <= t.back())
      j["predicted"].push_back({{"mode", p.mode}, {"time", p.time}, {"order", p.order}});

  auto sup = sup_field(field, t.size);
  const double start = last_predicted_echo(predicted, t.back());
  auto fit = fit_field_decay(t, sup, start);
  j["decay"] = {{"rate", fit.rate},
                {"prefactor", fit.prefactor},
                {"residual", fit.residual},
                {"window_start", start},
                {"points", fit.points},
                {"peaks", fit.peaks}};

  BoundProfile profile;
  profile.lambda0 = cfg.cascade.lambda0;
  profile.delta = cfg.bounds.delta;
  profile.sigma = cfg.bounds.sigma > 0.0 ? cfg.bounds.sigma : fit_sigma(state);
  auto bounds = verify_layer_bound(state, profile);
  ordered_json b;
  b["lambda0"] = profile.lambda0;
  b["delta"] = profile.delta;
  b["sigma"] = profile.sigma;
  b["finite"] = bounds.finite;
  b["geometric"] = bounds.geometric;
  b["per_p"] = ordered_json::array();
  for (const auto& l : bounds.per_p)
    b["per_p"].push_back({{"p", l.p},
                          {"keys", l.keys},
                          {"M_f", l.M_f},
                          {"M_f_main", l.M_f_main},
                          {"M_f_est", l.M_f_est},
                          {"M_rho", l.M_rho},
                          {"root", l.root}});
  j["bounds"] = b;
  write_json(out / "report.json", j);
  return j;
}

}  // namespace experiment_detail

// Runs one pipeline, writes its artifacts plus config.resolved.json into `out`
// and returns the summary that was written.
inline ordered_json run_experiment(const ExperimentConfig& cfg, const std::string& mode,
                                   const std::filesystem::path& out) {
  namespace d = experiment_detail;
  const auto& modes = experiment_modes();
  if (std::find(modes.begin(), modes.end(), mode) == modes.end())
    throw Error(ErrorKind::usage, "unknown mode '" + mode + "'", "mode");
  ensure_directory(out);
  write_json(out / "config.resolved.json", resolved_json(cfg));
  const Equilibrium eq = cfg.equilibrium.build();
  if (mode == "penrose") return d::run_penrose(cfg, eq, out);
  if (mode == "kernel") return d::run_kernel(cfg, eq, out);
  if (mode == "cascade") return d::run_cascade_mode(cfg, eq, out);
  if (mode == "direct") return d::run_direct_mode(cfg, eq, out);
  if (mode == "compare") return d::run_compare(cfg, eq, out);
  return d::run_report(cfg, eq, out);
}

}  // namespace echolab
