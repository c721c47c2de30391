#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "echolab/config.hpp"
#include "echolab/error.hpp"
#include "echolab/experiment.hpp"

namespace {

int fail(const std::string& kind, const std::string& message, const std::string& field, int code) {
  nlohmann::ordered_json j;
  j["error"] = {{"kind", kind}, {"message", message}};
  if (!field.empty()) j["error"]["field"] = field;
  std::cerr << j.dump() << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Echo cascade and Vlasov-Poisson reference runs"};
  app.require_subcommand(1);
  std::string config_path;
  std::string out_dir = "out";
  int threads = 0;
  double tol = 0.0;
  app.add_option("--config", config_path, "JSON experiment config")->required();
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--threads", threads, "worker threads (overrides the config)")->check(CLI::PositiveNumber);
  app.add_option("--tol", tol, "numerical tolerance (overrides the config)")->check(CLI::PositiveNumber);
  const std::map<std::string, std::string> help{
      {"penrose", "stability margin of the equilibrium"},
      {"kernel", "resolvent kernels G_k(t)"},
      {"cascade", "layered echo expansion and synthesized field"},
      {"direct", "split-step reference solver"},
      {"compare", "cascade and direct solver on the same data, with differences"},
      {"echoes", "echo detection and decay fit"},
      {"verify-bounds", "weighted layer bounds"}};
  for (const auto& mode : echolab::experiment_modes()) app.add_subcommand(mode, help.at(mode))->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), "", 2);
  }

  try {
    auto cfg = echolab::load_config(config_path);
    if (threads > 0) cfg.cascade.threads = threads;
    if (tol > 0.0) cfg.tol = tol;
    const std::string mode = app.get_subcommands().front()->get_name();
    echolab::run_experiment(cfg, mode, out_dir);
  } catch (const echolab::Error& e) {
    return fail(echolab::to_string(e.kind()), e.what(), e.field(), e.kind() == echolab::ErrorKind::usage ? 2 : 1);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), "", 1);
  }
  return 0;
}
