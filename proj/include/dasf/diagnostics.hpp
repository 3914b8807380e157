#pragma once

#include <string>
#include <vector>

#include "dasf/compression.hpp"
#include "dasf/graph.hpp"
#include "dasf/problems.hpp"
#include "dasf/signals.hpp"
#include "dasf/types.hpp"

namespace dasf {

// Outcome of one convergence-condition probe. `id` is a stable machine-readable
// label ("1a", "1b", "bounds", "rankH", "eigengap", "lemma5"); `witness` carries
// the deciding quantity (typically a smallest singular value or a gap).
struct ConditionReport {
  std::string id;
  bool pass = false;
  double witness = std::numeric_limits<double>::quiet_NaN();
  int node = -1;
  std::string detail;
};

// Admissible constraint counts for unique multipliers: a network-wide cap, a cap
// from the sparsest node's neighborhood, a cap from the average connectivity, and
// the binding combination of the last two. Values are +inf where not applicable
// (single-node networks have no cross-node coupling).
struct BoundSet {
  double network_wide = 0;   // vars * Q^2
  double sparsest_node = 0;  // (1 + min_k deg_k) * vars * Q^2
  double connectivity = 0;   // vars * Q^2 * sum_k deg_k / (K - 1)
  double combined = 0;       // min of the two above
};
BoundSet constraint_count_bounds(int Q, int K, const std::vector<int>& degrees, int vars = 1);

// Independence of the reduced constraint gradients {sum-free per-variable stacks
// of X^T grad h_j} at network scope. Unconstrained problems pass vacuously.
ConditionReport check_global_independence(const SfoProblem& p, const VariableSet& X,
                                          const StatisticsSet& S, double rel_tol = 1e-8);

// Per-branch compressed stacks at updating node q: for each constraint j, the
// root block X_q^T grad_q h_j followed by one per-stream sum over its feeding
// nodes (per variable, stacked vertically). The default streams come from the
// pruned tree at q; explicit streams support split experiments.
std::vector<Matrix> branch_constraint_stacks(const SfoProblem& p, const VariableSet& X,
                                             const StatisticsSet& S, const BlockLayout& layout,
                                             int q,
                                             const std::vector<std::vector<Stream>>& streams_per_var);
std::vector<Matrix> branch_constraint_stacks(const SfoProblem& p, const VariableSet& X,
                                             const StatisticsSet& S, const NetworkGraph& g, int q,
                                             std::uint64_t prune_seed = 0);

// Smallest-over-largest singular value of the stacked branch constraint matrix at
// node q. NaN for unconstrained problems; 0 when the count exceeds the stack size.
double branch_independence_witness(const SfoProblem& p, const VariableSet& X,
                                   const StatisticsSet& S, const NetworkGraph& g, int q,
                                   std::uint64_t prune_seed = 0);
double branch_independence_witness(const SfoProblem& p, const VariableSet& X,
                                   const StatisticsSet& S, const BlockLayout& layout, int q,
                                   const std::vector<std::vector<Stream>>& streams_per_var);

// Minimum of the branch witness over all updating nodes, paired with the
// admissible-count check. Unconstrained problems pass vacuously.
ConditionReport check_branch_independence(const SfoProblem& p, const VariableSet& X,
                                          const StatisticsSet& S, const NetworkGraph& g,
                                          double rel_tol = 1e-8, std::uint64_t prune_seed = 0);

// Cross-node multiplier-consistency system: per ordered pair (updating node q,
// root neighbor n), a block row over all nodes whose l-th block is the negated
// branch sum for l == q, the node matrix for l in the branch, zero otherwise.
// Multipliers constant across nodes always lie in its null space, so full
// agreement is rank K*J - J.
struct MultiplierRankReport {
  Index rank = 0;
  Index expected = 0;
  bool pass = false;
  double null_residual = 0;  // worst residual of the constant-multiplier null vectors
  Index rows = 0;
  Index cols = 0;
};
MultiplierRankReport multiplier_system_rank(const SfoProblem& p, const VariableSet& X,
                                            const StatisticsSet& S, const NetworkGraph& g,
                                            double rel_tol = 1e-8, std::uint64_t prune_seed = 0);

// Nonsingularity of the localized quadratic form: smallest singular values of the
// transition map and of C^T R C must clear the relative tolerance.
ConditionReport check_local_definiteness(const Matrix& R, const TransitionMatrix& C,
                                         double rel_tol = 1e-8);

// Squared relative distance to a reference optimum after resolving the problem's
// solution ambiguity (per-column joint sign flips where applicable). The
// column-separable flip choice equals the minimum over all sign patterns.
VariableSet align_solution(const SfoProblem& p, const VariableSet& X, const VariableSet& ref);
double solution_error(const SfoProblem& p, const VariableSet& X, const VariableSet& ref);

}  // namespace dasf
