#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <string>

#include "fiokit/experiments.hpp"
#include "fiokit/parallel.hpp"

namespace {

int fail(int code, const std::string& kind, const std::string& msg) {
  std::cerr << "fiokit: " << kind << ": " << msg << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semiclassical FBI transforms and Fourier integral operators: experiment runner"};
  app.require_subcommand(1);

  std::string config_path, out_dir, seed_hex;
  int workers = 0;
  auto* run = app.add_subcommand("run", "Run the experiment described by a config file");
  run->add_option("config", config_path, "Experiment config (JSON)")->required();
  run->add_option("--out", out_dir, "Output directory for report.json and data.csv");
  run->add_option("--workers", workers, "Worker threads (default: FIOKIT_WORKERS or 1)")->check(CLI::PositiveNumber);
  run->add_option("--seed", seed_hex, "Seed for randomised checks, hexadecimal");

  auto* list = app.add_subcommand("list-experiments", "Print the experiment names");
  auto* validate = app.add_subcommand("validate", "Check a config file without running it");
  validate->add_option("config", config_path, "Experiment config (JSON)")->required();

  CLI11_PARSE(app, argc, argv);

  if (list->parsed()) {
    for (const auto& n : fiokit::experiment_names()) std::cout << n << "\n";
    return 0;
  }

  fiokit::ExperimentConfig cfg;
  try {
    cfg = fiokit::load_config(config_path);
    if (!seed_hex.empty()) {
      std::size_t used = 0;
      cfg.seed = std::stoull(seed_hex, &used, 16);
      if (used != seed_hex.size()) throw fiokit::ConfigError("--seed: not a hexadecimal number");
    }
  } catch (const fiokit::ConfigError& e) {
    return fail(2, "config error", e.what());
  } catch (const std::logic_error&) {
    return fail(2, "config error", "--seed: not a hexadecimal number");
  }

  if (validate->parsed()) {
    std::cout << "ok: " << cfg.experiment << " (d=" << cfg.d << ", " << cfg.eps.size() << " eps values)\n";
    return 0;
  }

  if (workers > 0) fiokit::set_workers(workers);
  const std::string dir = out_dir.empty() ? cfg.output : out_dir;
  fiokit::ExperimentResult result;
  try {
    result = fiokit::run_experiment(cfg);
  } catch (const fiokit::ConfigError& e) {
    return fail(2, "config error", e.what());
  } catch (const fiokit::InvalidArgument& e) {
    return fail(2, "config error", e.what());
  } catch (const fiokit::UnsupportedError& e) {
    return fail(2, "config error", e.what());
  } catch (const fiokit::ResolutionError& e) {
    return fail(3, "resolution rule violated", e.what());
  } catch (const fiokit::ConvergenceError& e) {
    return fail(4, "no convergence", e.what());
  }

  try {
    fiokit::write_outputs(dir, cfg, result);
  } catch (const std::exception& e) {
    return fail(1, "output error", e.what());
  }
  int failed = 0;
  for (const auto& a : result.assertions) {
    if (!a.passed) {
      ++failed;
      std::cout << "FAIL " << a.name << ": " << a.measured << " " << a.relation << " " << a.limit << "\n";
    }
  }
  std::cout << cfg.experiment << ": " << (result.assertions.size() - failed) << "/" << result.assertions.size()
            << " assertions passed; outputs in " << dir << "\n";
  return failed == 0 ? 0 : 1;
}
