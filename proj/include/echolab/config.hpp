#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "echolab/equilibrium.hpp"
#include "echolab/error.hpp"
#include "echolab/initial_data.hpp"
#include "echolab/io.hpp"
#include "echolab/reference_solver.hpp"

namespace echolab {

struct EquilibriumSpec {
  std::string kind = "gaussian";
  double a = 3.0;
  std::string path;
  double theta0 = 2.0;

  Equilibrium build() const {
    if (kind == "gaussian") return Equilibrium::gaussian(theta0);
    if (kind == "two_stream") return Equilibrium::two_stream(a, theta0);
    return Equilibrium::load_table(path, theta0);
  }
};

struct InitialSpec {
  std::string kind = "modes";  // or "uniform"
  std::vector<WaveMode> modes;
  double scale = 1.0;

  InitialData build(const CascadeConfig& cfg) const {
    if (kind == "uniform") return InitialData::uniform(cfg.k_max, cfg.eta_max, scale);
    return InitialData::from_modes(modes);
  }
};

struct DirectSpec {
  double dt = 0.0;  // 0 follows the cascade step
  int m_max = 0;    // 0 selects k_max * p_max
  TransportScheme transport = TransportScheme::lagrange;
  bool linearized = false;
  double guard = 1.0;
  int snapshot_every = 0;
};

struct KernelSpec {
  std::vector<int> modes{1, 2, 3, 4, 5};
  double dt = 0.01;
  double T = 10.0;
  std::string route = "volterra";  // volterra | contour | both
};

struct PenroseSpec {
  int k_max = 8;
  double tau_max = 20.0;
  double tau_step = 0.05;
};

struct EchoSpec {
  double noise_floor = 1e-12;
  int depth = 0;  // 0 follows p_max
};

struct BoundSpec {
  double delta = 0.1;
  double sigma = 0.0;  // 0 fits sigma from the run
};

struct ExperimentConfig {
  EquilibriumSpec equilibrium;
  CascadeConfig cascade;
  InitialSpec initial;
  DirectSpec direct;
  KernelSpec kernel;
  PenroseSpec penrose;
  EchoSpec echoes;
  BoundSpec bounds;
  double tol = 1e-8;

  double direct_dt() const { return direct.dt > 0.0 ? direct.dt : cascade.t.step; }
  int direct_m_max() const { return direct.m_max > 0 ? direct.m_max : cascade.k_max * cascade.p_max; }
  int echo_depth() const { return echoes.depth > 0 ? echoes.depth : cascade.p_max; }
  double horizon() const { return cascade.t.back(); }
};

inline const char* to_string(TransportScheme s) {
  switch (s) {
    case TransportScheme::spectral: return "spectral";
    case TransportScheme::lagrange: return "lagrange";
    case TransportScheme::cubic: return "cubic";
  }
  return "unknown";
}

namespace config_detail {

using nlohmann::json;

inline void reject_unknown(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, v] : obj.items())
    if (!ok.count(key)) {
      std::string name = where.empty() ? key : where + "." + key;
      throw Error(ErrorKind::validation, "unknown field '" + name + "'", name);
    }
}

inline const json& object(const json& parent, const char* key, const std::string& name) {
  const json& v = parent.at(key);
  if (!v.is_object()) throw Error(ErrorKind::validation, "'" + name + "' must be an object", name);
  return v;
}

template <class T>
void read(const json& obj, const char* key, const std::string& name, T& out) {
  if (!obj.contains(key)) return;
  const json& v = obj.at(key);
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) throw Error(ErrorKind::validation, "'" + name + "' must be a boolean", name);
    out = v.get<bool>();
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) throw Error(ErrorKind::validation, "'" + name + "' must be an integer", name);
    out = v.get<T>();
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) throw Error(ErrorKind::validation, "'" + name + "' must be a number", name);
    out = v.get<T>();
    if (!std::isfinite(out)) throw Error(ErrorKind::validation, "'" + name + "' must be finite", name);
  } else {
    if (!v.is_string()) throw Error(ErrorKind::validation, "'" + name + "' must be a string", name);
    out = v.get<std::string>();
  }
}

inline void positive(double v, const std::string& name) {
  if (!(v > 0.0)) throw Error(ErrorKind::validation, "'" + name + "' must be positive", name);
}

inline cplx read_scale(const json& v, const std::string& name) {
  if (v.is_number()) return {v.get<double>(), 0.0};
  if (v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number())
    return {v[0].get<double>(), v[1].get<double>()};
  throw Error(ErrorKind::validation, "'" + name + "' must be a number or [re, im]", name);
}

inline std::string position(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

}  // namespace config_detail

// Validated config from JSON text. K and L are required, the rest has defaults.
inline ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base = {}) {
  using config_detail::read;
  using nlohmann::json;
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::parse,
                "malformed JSON at " + config_detail::position(text, e.byte) + ": " + e.what());
  }
  if (!root.is_object()) throw Error(ErrorKind::validation, "config must be a JSON object");
  config_detail::reject_unknown(root, "",
                                {"equilibrium", "K", "L", "c", "epsilon", "lambda0", "k_max", "eta_max", "p_max",
                                 "etap_range", "etap_step", "dt", "T", "source_floor", "threads", "tol",
                                 "initial_data", "direct", "kernel", "penrose", "echoes", "bounds"});

  ExperimentConfig cfg;
  auto& cc = cfg.cascade;
  if (!root.contains("K")) throw Error(ErrorKind::validation, "missing required field 'K'", "K");
  if (!root.contains("L")) throw Error(ErrorKind::validation, "missing required field 'L'", "L");
  read(root, "K", "K", cc.K);
  read(root, "L", "L", cc.L);
  read(root, "c", "c", cc.c);
  read(root, "epsilon", "epsilon", cc.epsilon);
  read(root, "lambda0", "lambda0", cc.lambda0);
  read(root, "k_max", "k_max", cc.k_max);
  read(root, "eta_max", "eta_max", cc.eta_max);
  read(root, "p_max", "p_max", cc.p_max);
  read(root, "source_floor", "source_floor", cc.source_floor);
  read(root, "threads", "threads", cc.threads);
  read(root, "tol", "tol", cfg.tol);
  config_detail::positive(cfg.tol, "tol");
  if (cc.threads < 1) throw Error(ErrorKind::validation, "'threads' must be at least 1", "threads");

  double lo = -60.0, hi = 60.0, step = 0.25;
  if (root.contains("etap_range")) {
    const json& r = root.at("etap_range");
    if (!r.is_array() || r.size() != 2 || !r[0].is_number() || !r[1].is_number())
      throw Error(ErrorKind::validation, "'etap_range' must be [lo, hi]", "etap_range");
    lo = r[0].get<double>();
    hi = r[1].get<double>();
    if (!(hi > lo)) throw Error(ErrorKind::validation, "'etap_range' must satisfy lo < hi", "etap_range");
  }
  read(root, "etap_step", "etap_step", step);
  config_detail::positive(step, "etap_step");
  cc.etap = UniformGrid::closed(lo, hi, step);

  double dt = 0.05, T = 20.0;
  read(root, "dt", "dt", dt);
  read(root, "T", "T", T);
  config_detail::positive(dt, "dt");
  config_detail::positive(T, "T");
  cc.t = UniformGrid::time(dt, T);

  if (root.contains("equilibrium")) {
    const json& e = config_detail::object(root, "equilibrium", "equilibrium");
    config_detail::reject_unknown(e, "equilibrium", {"kind", "a", "path", "theta0"});
    read(e, "kind", "equilibrium.kind", cfg.equilibrium.kind);
    read(e, "a", "equilibrium.a", cfg.equilibrium.a);
    read(e, "path", "equilibrium.path", cfg.equilibrium.path);
    read(e, "theta0", "equilibrium.theta0", cfg.equilibrium.theta0);
    const auto& kind = cfg.equilibrium.kind;
    if (kind != "gaussian" && kind != "two_stream" && kind != "table")
      throw Error(ErrorKind::validation, "equilibrium.kind must be gaussian, two_stream or table", "equilibrium.kind");
    if (kind == "table") {
      if (cfg.equilibrium.path.empty())
        throw Error(ErrorKind::validation, "table equilibrium needs a path", "equilibrium.path");
      std::filesystem::path p(cfg.equilibrium.path);
      if (p.is_relative() && !base.empty()) cfg.equilibrium.path = (base / p).string();
    }
    config_detail::positive(cfg.equilibrium.theta0, "equilibrium.theta0");
  }

  if (root.contains("initial_data")) {
    const json& d = config_detail::object(root, "initial_data", "initial_data");
    config_detail::reject_unknown(d, "initial_data", {"kind", "modes", "scale"});
    read(d, "kind", "initial_data.kind", cfg.initial.kind);
    read(d, "scale", "initial_data.scale", cfg.initial.scale);
    if (cfg.initial.kind != "modes" && cfg.initial.kind != "uniform")
      throw Error(ErrorKind::validation, "initial_data.kind must be modes or uniform", "initial_data.kind");
    if (d.contains("modes")) {
      const json& ms = d.at("modes");
      if (!ms.is_array()) throw Error(ErrorKind::validation, "'initial_data.modes' must be a list", "initial_data.modes");
      for (std::size_t i = 0; i < ms.size(); ++i) {
        const std::string name = "initial_data.modes[" + std::to_string(i) + "]";
        const json& m = ms[i];
        if (!m.is_object() || !m.contains("k") || !m.contains("eta"))
          throw Error(ErrorKind::validation, "'" + name + "' needs k and eta", name);
        config_detail::reject_unknown(m, name, {"k", "eta", "scale"});
        WaveMode w;
        read(m, "k", name + ".k", w.k);
        read(m, "eta", name + ".eta", w.eta);
        if (m.contains("scale")) w.scale = config_detail::read_scale(m.at("scale"), name + ".scale");
        cfg.initial.modes.push_back(w);
      }
    }
  } else {
    cfg.initial.modes = {{1, 2, {1.0, 0.0}}, {1, -1, {1.0, 0.0}}};
  }
  if (cfg.initial.kind == "modes" && cfg.initial.modes.empty())
    throw Error(ErrorKind::validation, "initial_data.modes is empty", "initial_data.modes");

  if (root.contains("direct")) {
    const json& d = config_detail::object(root, "direct", "direct");
    config_detail::reject_unknown(d, "direct", {"dt", "m_max", "transport", "linearized", "guard", "snapshot_every"});
    read(d, "dt", "direct.dt", cfg.direct.dt);
    read(d, "m_max", "direct.m_max", cfg.direct.m_max);
    read(d, "linearized", "direct.linearized", cfg.direct.linearized);
    read(d, "guard", "direct.guard", cfg.direct.guard);
    read(d, "snapshot_every", "direct.snapshot_every", cfg.direct.snapshot_every);
    std::string scheme = to_string(cfg.direct.transport);
    read(d, "transport", "direct.transport", scheme);
    if (scheme == "lagrange") cfg.direct.transport = TransportScheme::lagrange;
    else if (scheme == "spectral") cfg.direct.transport = TransportScheme::spectral;
    else if (scheme == "cubic") cfg.direct.transport = TransportScheme::cubic;
    else throw Error(ErrorKind::validation, "direct.transport must be lagrange, spectral or cubic", "direct.transport");
    if (cfg.direct.dt < 0.0) throw Error(ErrorKind::validation, "'direct.dt' must be positive", "direct.dt");
    if (cfg.direct.m_max < 0) throw Error(ErrorKind::validation, "'direct.m_max' must be nonnegative", "direct.m_max");
    if (cfg.direct.snapshot_every < 0)
      throw Error(ErrorKind::validation, "'direct.snapshot_every' must be nonnegative", "direct.snapshot_every");
    config_detail::positive(cfg.direct.guard, "direct.guard");
  }

  if (root.contains("kernel")) {
    const json& k = config_detail::object(root, "kernel", "kernel");
    config_detail::reject_unknown(k, "kernel", {"modes", "dt", "T", "route"});
    if (k.contains("modes")) {
      const json& ms = k.at("modes");
      if (!ms.is_array() || ms.empty())
        throw Error(ErrorKind::validation, "'kernel.modes' must be a non-empty list", "kernel.modes");
      cfg.kernel.modes.clear();
      for (const auto& m : ms) {
        if (!m.is_number_integer() || m.get<int>() == 0)
          throw Error(ErrorKind::validation, "'kernel.modes' entries must be nonzero integers", "kernel.modes");
        cfg.kernel.modes.push_back(m.get<int>());
      }
    }
    read(k, "dt", "kernel.dt", cfg.kernel.dt);
    read(k, "T", "kernel.T", cfg.kernel.T);
    read(k, "route", "kernel.route", cfg.kernel.route);
    config_detail::positive(cfg.kernel.dt, "kernel.dt");
    config_detail::positive(cfg.kernel.T, "kernel.T");
    if (cfg.kernel.route != "volterra" && cfg.kernel.route != "contour" && cfg.kernel.route != "both")
      throw Error(ErrorKind::validation, "kernel.route must be volterra, contour or both", "kernel.route");
  }

  if (root.contains("penrose")) {
    const json& p = config_detail::object(root, "penrose", "penrose");
    config_detail::reject_unknown(p, "penrose", {"k_max", "tau_max", "tau_step"});
    read(p, "k_max", "penrose.k_max", cfg.penrose.k_max);
    read(p, "tau_max", "penrose.tau_max", cfg.penrose.tau_max);
    read(p, "tau_step", "penrose.tau_step", cfg.penrose.tau_step);
    if (cfg.penrose.k_max < 1) throw Error(ErrorKind::validation, "'penrose.k_max' must be at least 1", "penrose.k_max");
    config_detail::positive(cfg.penrose.tau_max, "penrose.tau_max");
    config_detail::positive(cfg.penrose.tau_step, "penrose.tau_step");
  }

  if (root.contains("echoes")) {
    const json& e = config_detail::object(root, "echoes", "echoes");
    config_detail::reject_unknown(e, "echoes", {"noise_floor", "depth"});
    read(e, "noise_floor", "echoes.noise_floor", cfg.echoes.noise_floor);
    read(e, "depth", "echoes.depth", cfg.echoes.depth);
    if (!(cfg.echoes.noise_floor >= 0.0))
      throw Error(ErrorKind::validation, "'echoes.noise_floor' must be nonnegative", "echoes.noise_floor");
    if (cfg.echoes.depth < 0) throw Error(ErrorKind::validation, "'echoes.depth' must be nonnegative", "echoes.depth");
  }

  if (root.contains("bounds")) {
    const json& b = config_detail::object(root, "bounds", "bounds");
    config_detail::reject_unknown(b, "bounds", {"delta", "sigma"});
    read(b, "delta", "bounds.delta", cfg.bounds.delta);
    read(b, "sigma", "bounds.sigma", cfg.bounds.sigma);
    if (!(cfg.bounds.delta > 0.0 && cfg.bounds.delta < 1.0))
      throw Error(ErrorKind::validation, "'bounds.delta' must lie in (0, 1)", "bounds.delta");
    if (cfg.bounds.sigma != 0.0 && !(cfg.bounds.sigma > 1.0))
      throw Error(ErrorKind::validation, "'bounds.sigma' must exceed 1 (or be 0 to fit)", "bounds.sigma");
  }

  Equilibrium eq = cfg.equilibrium.kind == "table" ? Equilibrium::gaussian(cfg.equilibrium.theta0)
                                                   : cfg.equilibrium.build();
  cc.validate(eq);
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot read config: " + path.string(), "config");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_config(text, path.parent_path());
}

// Every field after defaults, in a fixed order.
inline ordered_json resolved_json(const ExperimentConfig& cfg) {
  const auto& cc = cfg.cascade;
  ordered_json j;
  ordered_json eq;
  eq["kind"] = cfg.equilibrium.kind;
  if (cfg.equilibrium.kind == "two_stream") eq["a"] = cfg.equilibrium.a;
  if (cfg.equilibrium.kind == "table") eq["path"] = cfg.equilibrium.path;
  eq["theta0"] = cfg.equilibrium.theta0;
  j["equilibrium"] = eq;
  j["K"] = cc.K;
  j["L"] = cc.L;
  j["c"] = cc.c;
  j["epsilon"] = cc.epsilon;
  j["lambda0"] = cc.lambda0;
  j["k_max"] = cc.k_max;
  j["eta_max"] = cc.eta_max;
  j["p_max"] = cc.p_max;
  j["etap_range"] = {cc.etap.start, cc.etap.back()};
  j["etap_step"] = cc.etap.step;
  j["dt"] = cc.t.step;
  j["T"] = cc.t.back();
  j["source_floor"] = cc.source_floor;
  j["threads"] = cc.threads;
  j["tol"] = cfg.tol;
  ordered_json init;
  init["kind"] = cfg.initial.kind;
  if (cfg.initial.kind == "uniform") {
    init["scale"] = cfg.initial.scale;
  } else {
    init["modes"] = ordered_json::array();
    for (const auto& m : cfg.initial.modes) {
      ordered_json o;
      o["k"] = m.k;
      o["eta"] = m.eta;
      o["scale"] = {m.scale.real(), m.scale.imag()};
      init["modes"].push_back(o);
    }
  }
  j["initial_data"] = init;
  j["direct"] = {{"dt", cfg.direct_dt()},
                 {"m_max", cfg.direct_m_max()},
                 {"transport", to_string(cfg.direct.transport)},
                 {"linearized", cfg.direct.linearized},
                 {"guard", cfg.direct.guard},
                 {"snapshot_every", cfg.direct.snapshot_every}};
  j["kernel"] = {{"modes", cfg.kernel.modes}, {"dt", cfg.kernel.dt}, {"T", cfg.kernel.T}, {"route", cfg.kernel.route}};
  j["penrose"] = {{"k_max", cfg.penrose.k_max}, {"tau_max", cfg.penrose.tau_max}, {"tau_step", cfg.penrose.tau_step}};
  j["echoes"] = {{"noise_floor", cfg.echoes.noise_floor}, {"depth", cfg.echo_depth()}};
  j["bounds"] = {{"delta", cfg.bounds.delta}, {"sigma", cfg.bounds.sigma}};
  return j;
}

}  // namespace echolab
