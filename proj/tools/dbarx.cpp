// dbarx: extend | verify | sweep | show

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "dbarx/harness.hpp"

namespace {

struct Flags {
  std::string config, out, preset, path;
  std::uint64_t seed = 0;
  int threads = 0;
  bool has_seed = false;
};

// --preset gives the base; keys present in --config override it; explicit flags override both.
dbarx::ExperimentConfig build_config(const Flags& f) {
  using dbarx::json;
  json base = dbarx::config_to_json(f.preset.empty() ? dbarx::ExperimentConfig{} : dbarx::preset_config(f.preset));
  if (!f.config.empty()) {
    std::ifstream in(f.config);
    if (!in) throw dbarx::ConfigError("config: cannot open " + f.config);
    std::stringstream ss;
    ss << in.rdbuf();
    json patch;
    try {
      patch = json::parse(ss.str());
    } catch (const nlohmann::json::exception& e) {
      throw dbarx::ConfigError(std::string("config: parse error: ") + e.what());
    }
    if (!patch.is_object()) throw dbarx::ConfigError("config: top level must be an object");
    base.merge_patch(patch);
  }
  dbarx::ExperimentConfig c = dbarx::config_from_json(base);
  if (!f.out.empty()) c.out_dir = f.out;
  if (f.has_seed) c.seed = f.seed;
  if (f.threads > 0) c.threads = f.threads;
  c.threads = dbarx::resolve_threads(c.threads);
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Numerical L2 extension of dbar-closed forms from the slice z_1 = 0 of a polydisc"};
  app.require_subcommand(1);
  Flags f;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", f.config, "JSON config file");
    sub->add_option("--out", f.out, "output directory");
    sub->add_option("--seed", f.seed, "seed for randomized checks")->each([&](const std::string&) { f.has_seed = true; });
    sub->add_option("--threads", f.threads, std::string("worker threads (") + dbarx::threads_env + " overrides)");
    sub->add_option("--preset", f.preset, "named preset");
  };
  auto* extend = app.add_subcommand("extend", "run the extension pipeline");
  auto* verify = app.add_subcommand("verify", "run verifiers and report pass/fail");
  auto* sweep = app.add_subcommand("sweep", "sweep presets, resolutions and deltas into CSV");
  auto* show = app.add_subcommand("show", "pretty-print a snapshot, report or CSV");
  for (auto* s : {extend, verify, sweep}) add_common(s);
  show->add_option("path", f.path, "file to show")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : dbarx::exit_config_error;
  }

  try {
    if (*show) return dbarx::cmd_show(f.path, std::cout);
    const dbarx::ExperimentConfig c = build_config(f);
    if (*extend) return dbarx::cmd_extend(c, std::cout);
    if (*verify) return dbarx::cmd_verify(c, std::cout);
    if (*sweep) return dbarx::cmd_sweep(c, std::cout);
  } catch (const dbarx::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return dbarx::exit_config_error;
  } catch (const dbarx::SnapshotError& e) {
    std::cerr << "snapshot error: " << e.what() << "\n";
    return dbarx::exit_config_error;
  } catch (const dbarx::SolverError& e) {
    std::cerr << "solver failure: " << e.what() << "\n";
    return dbarx::exit_solver_failure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return dbarx::exit_solver_failure;
  }
  return dbarx::exit_config_error;
}
