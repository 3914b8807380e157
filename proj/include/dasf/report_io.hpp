#pragma once

#include <string>
#include <vector>

#include "dasf/diagnostics.hpp"
#include "dasf/engine.hpp"
#include "dasf/types.hpp"

#include <json.hpp>

namespace dasf {

// Round-trip-exact decimal form (printf %.17g); the same value always prints
// the same bytes, which is what keeps rerun artifacts byte-identical.
std::string format_double(double x);

// Per-iteration CSV with the pinned schema
//   iter,q,f,max_violation,step_norm,eps_vs_oracle,sigmaJ_1b,flags
// NaN cells (no oracle / witness not tracked) are left empty; flags is a
// semicolon-joined subset of {split,skipped,degenerate}.
std::string run_csv(const RunReport& rep);
void write_run_csv(const std::string& path, const RunReport& rep);

// Aggregate CSV for repeated runs: iter,mean_eps,sem_eps,runs.
std::string aggregate_csv(const std::vector<double>& mean_eps, const std::vector<double>& sem_eps,
                          const std::vector<int>& runs);
void write_aggregate_csv(const std::string& path, const std::vector<double>& mean_eps,
                         const std::vector<double>& sem_eps, const std::vector<int>& runs);

// Final-metrics block of the JSON summary (the caller adds the config echo).
nlohmann::json run_summary_json(const RunReport& rep);

nlohmann::json condition_json(const ConditionReport& r);
nlohmann::json multiplier_rank_json(const MultiplierRankReport& r);

// Stacked-variable snapshot, exact to the bit through JSON number round-trip.
void save_variables_json(const std::string& path, const VariableSet& X);
VariableSet load_variables_json(const std::string& path);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace dasf
