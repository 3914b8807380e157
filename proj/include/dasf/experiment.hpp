#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "dasf/engine.hpp"
#include "dasf/graph.hpp"
#include "dasf/problems.hpp"
#include "dasf/signals.hpp"

#include <json.hpp>

namespace dasf {

struct ProblemSpec {
  std::string kind;  // mmse | ridge | lcmv | gevd | tro | cca
  int Q = 1;
  int L = 1;              // lcmv constraint columns (J = Q * L)
  double alpha = 0.1;     // ridge weight
  double eigengap_min = 0.05;  // instance generation redraws until the solve gap clears this
};

struct GraphSpec {
  std::string kind;  // edges | path | complete | erdos_renyi | random_tree | demo10
  std::vector<int> channels;               // explicit per-node channel counts ...
  int K = 0;                                // ... or K nodes with M channels each
  int M = 0;
  std::vector<std::pair<int, int>> edges;  // for kind == edges
  double p = 0.8;                           // for kind == erdos_renyi
  std::uint64_t seed = 1;
};

struct ModelSpec {
  int latents = 0;     // 0: Q + 2
  int target_dim = 0;  // 0: Q
  double noise = 0.5;
  std::uint64_t seed = 1;
};

struct OutputSpec {
  std::string prefix = "run";
  bool save_iterate = true;  // final stacked variable as JSON next to the CSV
};

struct ExperimentConfig {
  ProblemSpec problem;
  GraphSpec graph;
  ModelSpec model;
  EngineConfig engine;
  int monte_carlo = 1;
  OutputSpec output;
};

// Strict JSON parsing: unknown or mistyped keys raise ConfigError naming the key.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config_file(const std::string& path);
nlohmann::json config_json(const ExperimentConfig& cfg);  // canonical echo

// One fully materialized scenario. Generation is deterministic in the config;
// subspace problems are redrawn (bounded) until the solve gap clears
// problem.eigengap_min so the optimum is well separated.
struct Instance {
  NetworkGraph graph;
  SignalModel model;
  std::unique_ptr<SfoProblem> problem;
  StatisticsSet exact;  // closed-form statistics with problem data attached
};

std::unique_ptr<SfoProblem> make_problem(const ProblemSpec& ps);

// run_index salts every seed (graph, model, engine) so Monte Carlo runs draw
// independent scenarios; a single run is exactly run_index 0.
Instance build_instance(const ExperimentConfig& cfg, int run_index = 0);
EngineConfig engine_config_for_run(const ExperimentConfig& cfg, int run_index);

RunReport execute_run(const Instance& inst, const EngineConfig& engine);

struct McResult {
  std::vector<RunReport> reports;      // completed runs, in run order
  std::vector<int> report_runs;        // run index of each report
  std::vector<std::string> errors;     // per failed run: "run 3: message"
  std::vector<double> mean_eps;        // per iteration, carry-forward past early stops
  std::vector<double> sem_eps;         // sample std / sqrt(n)
  std::vector<int> runs_contributing;
};

McResult run_monte_carlo(const ExperimentConfig& cfg, int parallelism);

// Subcommand bodies; they throw ConfigError / Error, the CLI maps those to exit codes.
void cmd_run(const ExperimentConfig& cfg, const std::string& out_dir);
void cmd_mc(const ExperimentConfig& cfg, const std::string& out_dir, int parallelism);
void cmd_check(const ExperimentConfig& cfg, const std::string& iterate_path,
               const std::string& out_dir);

struct Fig2Options {
  int runs_per_regime = 20;
  std::uint64_t seed = 1;
  int parallelism = 1;
};
// LCMV convergence study over dense random graphs and random trees with the
// constraint count below, at, and above the admissible bound computed per
// sampled graph. Emits one aggregate error curve per (graph type, regime).
void cmd_reproduce_fig2(const Fig2Options& opt, const std::string& out_dir);

}  // namespace dasf
