// Command-line front end: one subcommand per experiment kind.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "nls/errors.hpp"
#include "nls/harness/config.hpp"
#include "nls/harness/emit.hpp"
#include "nls/harness/experiments.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Semiclassical nonlinear Schroedinger simulations and convergence studies"};
  app.set_version_flag("--version", nls::harness::version_string());
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  int workers = 0;
  long long seed = -1;
  std::vector<std::string> overrides;
  bool quiet = false;

  for (const auto& kind : nls::harness::experiment_kinds()) {
    auto* sub = app.add_subcommand(kind, "run the " + kind + " experiment");
    sub->add_option("--config", config_path, "configuration file")->required();
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--workers", workers, "sample-level worker threads (overrides run.workers)");
    sub->add_option("--seed", seed, "sampling seed (overrides sampling.seed)");
    sub->add_option("--override", overrides, "section.key=value, repeatable");
    sub->add_flag("--quiet", quiet, "only warnings and errors on stderr");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  spdlog::set_level(quiet ? spdlog::level::warn : spdlog::level::info);
  const std::string kind = app.get_subcommands().front()->get_name();

  try {
    auto raw = nls::harness::load_config(config_path);
    for (const auto& o : overrides) nls::harness::apply_override(raw, o);
    if (workers > 0) nls::harness::apply_override(raw, "run.workers=" + std::to_string(workers));
    if (seed >= 0) nls::harness::apply_override(raw, "sampling.seed=" + std::to_string(seed));
    const auto cfg = nls::harness::build_experiment_config(raw, kind);
    const auto summary = nls::harness::run_experiment(cfg, out_dir);
    std::cout << summary.dump(2) << "\n";
    return 0;
  } catch (const nls::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const nls::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
