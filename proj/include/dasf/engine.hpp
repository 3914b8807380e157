#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "dasf/fixes.hpp"
#include "dasf/graph.hpp"
#include "dasf/problems.hpp"
#include "dasf/signals.hpp"

namespace dasf {

enum class StatsMode { Exact, Batch };

struct EngineConfig {
  int max_iterations = 200;
  double step_tol = 1e-9;        // relative step norm; 0 disables early stopping
  double objective_tol = 1e-12;  // relative objective stagnation, paired with step_tol
  StatsMode mode = StatsMode::Exact;
  int batch_size = 10000;
  bool reuse_batch = false;        // sample once instead of per iteration
  bool random_sequence = false;    // shuffle the node order every round instead of 0..K-1
  bool track_conditions = false;   // per-iteration branch-independence witness
  FixConfig fixes;
  std::uint64_t seed = 0;        // initial point and batch stream
  std::uint64_t prune_seed = 0;  // pruning policy
  std::optional<VariableSet> initial;  // overrides the random feasible start
  std::optional<VariableSet> oracle;   // reference optimum for the error column
  bool compute_oracle = true;          // solve the network-wide problem if no oracle given
};

struct IterationRecord {
  int iter = 0;
  int node = 0;
  double objective = 0;
  double max_violation = 0;
  double step_norm = 0;
  double eps_vs_oracle = std::numeric_limits<double>::quiet_NaN();
  double sigma_J = std::numeric_limits<double>::quiet_NaN();   // relative witness at the node
  double eigengap = std::numeric_limits<double>::quiet_NaN();  // local solve gap
  bool split = false;
  bool skipped = false;
  bool degenerate = false;
  long messages = 0;
  long scalars = 0;
};

struct RunReport {
  std::vector<IterationRecord> iterations;
  VariableSet final_X;
  KktReport final_kkt;
  double final_objective = 0;
  double final_eps = std::numeric_limits<double>::quiet_NaN();
  int monotonicity_violations = 0;  // audited in exact mode only
  int feasibility_violations = 0;   // audited in exact mode only
  bool converged = false;
  std::string stop_reason;
};

// Random start: standard Gaussian blocks mapped onto the feasible set.
VariableSet initial_point(const SfoProblem& p, const StatisticsSet& S, const BlockLayout& layout,
                          std::uint64_t seed);

// Local solve at the updating node with the tie-break reference of the current
// iterate (the solver picks its closest candidate).
VariableSet local_solve_with_tiebreak(const SfoProblem& p, const StatisticsSet& local,
                                      const VariableSet& reference, SolveInfo* info = nullptr);

// Blockwise reconstruction of the network-wide variable from a local solution:
// the root takes the top block, every other node multiplies its stored block by
// its stream's mixing matrix. Identical arithmetic to expand().
Matrix disseminate_and_update(const TransitionMatrix& C, const Matrix& local_solution);

// Sequential rounds over nodes 0..K-1 (iteration i updates node i mod K).
// `exact` must carry every field the problem uses (B/A/Gamma attached by the
// caller); `model` is required in batch mode to draw per-iteration samples.
// Objectives, violations, and the error column are audited against `exact`.
RunReport run_dasf(const SfoProblem& p, const NetworkGraph& g, const StatisticsSet& exact,
                   const SignalModel* model, const EngineConfig& cfg);

// Gamma carries the metric of quadratic-norm terms; network scope uses the identity.
void attach_gamma_if_needed(const SfoProblem& p, StatisticsSet& S);

}  // namespace dasf
