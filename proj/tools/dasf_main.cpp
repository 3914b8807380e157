#include <cstdint>
#include <iostream>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "dasf/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Distributed adaptive signal fusion simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  std::string iterate_path;
  std::uint64_t seed_override = 0;
  bool have_seed_override = false;
  int parallelism = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  int fig2_runs = 20;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    if (needs_config)
      sub->add_option("--config", config_path, "experiment configuration (JSON)")
          ->required()
          ->check(CLI::ExistingFile);
    sub->add_option("--out-dir", out_dir, "directory for artifacts (created if missing)");
    sub->add_option("--seed-override", seed_override, "replace the configured engine seed")
        ->each([&](const std::string&) { have_seed_override = true; });
    sub->add_option("--parallelism", parallelism, "worker threads for repeated runs");
  };

  CLI::App* run = app.add_subcommand("run", "single run: per-iteration CSV plus JSON summary");
  add_common(run, true);
  CLI::App* mc =
      app.add_subcommand("mc", "Monte Carlo repetition with an aggregate error curve");
  add_common(mc, true);
  CLI::App* fig2 = app.add_subcommand(
      "reproduce-fig2", "constraint-count convergence study on random graphs and trees");
  add_common(fig2, false);
  fig2->add_option("--runs", fig2_runs, "Monte Carlo runs per regime");
  CLI::App* check =
      app.add_subcommand("check", "convergence-condition diagnostics for a saved iterate");
  add_common(check, true);
  check->add_option("--iterate", iterate_path, "iterate JSON written by the run subcommand")
      ->required()
      ->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;  // bad usage is a configuration error
  }

  try {
    if (app.got_subcommand(fig2)) {
      dasf::Fig2Options opt;
      opt.runs_per_regime = fig2_runs;
      if (have_seed_override) opt.seed = seed_override;
      opt.parallelism = parallelism;
      dasf::cmd_reproduce_fig2(opt, out_dir);
    } else {
      dasf::ExperimentConfig cfg = dasf::load_config_file(config_path);
      if (have_seed_override) cfg.engine.seed = seed_override;
      if (app.got_subcommand(run))
        dasf::cmd_run(cfg, out_dir);
      else if (app.got_subcommand(mc))
        dasf::cmd_mc(cfg, out_dir, parallelism);
      else
        dasf::cmd_check(cfg, iterate_path, out_dir);
    }
  } catch (const dasf::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
