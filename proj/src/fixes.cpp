#include "dasf/fixes.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>

namespace dasf {

namespace {

bool full_rank(const Matrix& m, double rel_tol = 1e-10) {
  Eigen::BDCSVD<Matrix> svd(m);
  const Vector& sv = svd.singularValues();
  if (sv.size() == 0 || sv(0) <= 0) return false;
  return sv(sv.size() - 1) > rel_tol * sv(0);
}

Matrix gaussian(Index rows, Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix out(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) out(i, j) = normal(rng);
  return out;
}

}  // namespace

SplitParts make_split_parts(const Matrix& X, const BlockLayout& layout,
                            const std::vector<int>& nodes, double rel_scale, int retries,
                            std::mt19937_64& rng) {
  SplitParts parts;
  const int K = layout.count();
  parts.a.resize(static_cast<size_t>(K));
  parts.b.resize(static_cast<size_t>(K));
  parts.is_split.assign(static_cast<size_t>(K), 0);
  for (int k = 0; k < K; ++k)
    parts.a[static_cast<size_t>(k)] = X.middleRows(layout.offset(k), layout.size(k));

  for (int k : nodes) {
    if (k < 0 || k >= K) throw Error("split: node out of range");
    const Matrix Xk = X.middleRows(layout.offset(k), layout.size(k));
    const double scale =
        std::max(rel_scale * Xk.norm() / std::sqrt(static_cast<double>(Xk.size())), 1e-8);
    bool done = false;
    for (int attempt = 0; attempt < retries && !done; ++attempt) {
      const Matrix Xa = 0.5 * Xk + scale * gaussian(Xk.rows(), Xk.cols(), rng);
      const Matrix Xb = Xk - Xa;  // the parts sum back exactly by construction
      if (full_rank(Xa) && full_rank(Xb)) {
        parts.a[static_cast<size_t>(k)] = Xa;
        parts.b[static_cast<size_t>(k)] = Xb;
        parts.is_split[static_cast<size_t>(k)] = 1;
        done = true;
      }
    }
    if (!done) throw Error("split: could not draw full-rank parts");
  }
  return parts;
}

TransitionMatrix build_split_transition_matrix(const SplitParts& parts, const Matrix& X,
                                               const BlockLayout& layout, const PrunedTree& tree,
                                               SplitScope scope) {
  std::vector<Stream> streams;
  for (size_t bi = 0; bi < tree.root_neighbors.size(); ++bi) {
    const int n = tree.root_neighbors[bi];
    Stream sa, sb;
    sa.neighbor = n;
    sb.neighbor = n;
    for (int k : tree.branches[bi]) {
      const bool split_here =
          parts.is_split[static_cast<size_t>(k)] &&
          (scope == SplitScope::Branches || k == n);
      if (split_here) {
        sa.entries.emplace_back(k, parts.a[static_cast<size_t>(k)]);
        sb.entries.emplace_back(k, parts.b[static_cast<size_t>(k)]);
      } else {
        sa.entries.emplace_back(k, X.middleRows(layout.offset(k), layout.size(k)));
      }
    }
    streams.push_back(std::move(sa));
    if (!sb.entries.empty()) streams.push_back(std::move(sb));
  }
  return TransitionMatrix(layout, tree.root, static_cast<int>(X.cols()), std::move(streams));
}

GuardDecision oscillation_guard(const std::vector<double>& objective_history,
                                const std::vector<double>& step_history, double pending_step,
                                double eigengap, const FixConfig& cfg) {
  GuardDecision d;
  d.near_discontinuity = std::isfinite(eigengap) && eigengap < cfg.eigengap_threshold;
  if (step_history.empty() || objective_history.size() != step_history.size() + 1)
    return d;  // no completed iteration yet: nothing to judge
  const double scale = 1.0 + std::abs(objective_history.back());
  if (pending_step <= 1e-14 * scale) return d;  // settling in place, not oscillating
  // Net decrease over the window vs. the largest move involved (including the
  // one about to happen). Endpoints, not increments: a down-up wiggle with no
  // net progress is exactly the pattern we want to catch.
  double step_scale = pending_step;
  for (double s : step_history) step_scale = std::max(step_scale, s);
  const double df = std::abs(objective_history.back() - objective_history.front());
  d.insufficient_decrease = df <= cfg.guard_eps * step_scale;
  d.skip = d.insufficient_decrease && d.near_discontinuity;
  return d;
}

}  // namespace dasf
