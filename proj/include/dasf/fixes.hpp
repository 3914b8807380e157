#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "dasf/compression.hpp"
#include "dasf/graph.hpp"
#include "dasf/types.hpp"

namespace dasf {

// Which nodes double their compressed stream during a split iteration.
enum class SplitScope { Branches, DirectNeighbors };

// What to do when a local solve sits on a near-degenerate spectral gap and the
// oscillation guard is not running.
enum class DegeneratePolicy { Skip, Abort };

struct FixConfig {
  bool enable_split = false;
  double split_trigger = 1e-6;  // relative branch-independence witness below this fires
  double split_scale = 1e-2;    // perturbation size relative to each block's norm
  int split_retries = 16;
  SplitScope split_scope = SplitScope::Branches;

  bool enable_guard = false;
  double guard_eps = 1e-8;  // sufficient-decrease ratio |df| / ||dX||
  double eigengap_threshold = 1e-8;
  DegeneratePolicy on_degenerate = DegeneratePolicy::Skip;
};

// Additive two-way split of selected node blocks: a[k] + b[k] == X_k exactly
// (b is formed by subtraction), both parts of full rank. Unsplit nodes keep
// a[k] = X_k and an empty b[k].
struct SplitParts {
  std::vector<Matrix> a;
  std::vector<Matrix> b;
  std::vector<char> is_split;
};

SplitParts make_split_parts(const Matrix& X, const BlockLayout& layout,
                            const std::vector<int>& nodes, double rel_scale, int retries,
                            std::mt19937_64& rng);

// Transition map with doubled streams: under Branches scope every branch carries
// the a-parts in one stream and the b-parts in a second; under DirectNeighbors
// scope only the root neighbor's own block is doubled and deeper nodes ride on
// the a-stream. Satisfies apply(C, [X_q; I; I; ...]) == X.
TransitionMatrix build_split_transition_matrix(const SplitParts& parts, const Matrix& X,
                                               const BlockLayout& layout, const PrunedTree& tree,
                                               SplitScope scope);

struct GuardDecision {
  bool skip = false;
  bool insufficient_decrease = false;
  bool near_discontinuity = false;
};

// Oscillation guard: given a recent window of objectives f(X^{t-w}..X^t), the
// step norms ||X^i - X^{i-1}|| inside it, the norm of the update about to be
// applied, and the current local spectral gap, decide whether that pending
// update should be skipped. A large pending move that follows a window with no
// net decrease, next to a near-tied spectrum, is a branch flip rather than
// progress. A vanishing pending move means the node is settling in place,
// which is convergence, not oscillation.
GuardDecision oscillation_guard(const std::vector<double>& objective_history,
                                const std::vector<double>& step_history, double pending_step,
                                double eigengap, const FixConfig& cfg);

}  // namespace dasf
