#include "dasf/engine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <utility>

#include "dasf/compression.hpp"
#include "dasf/diagnostics.hpp"

namespace dasf {
namespace {

// splitmix64-style mixer: decorrelates (seed, salt) pairs into stream seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL + b * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Matrix gaussian_matrix(Index rows, Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss;
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = gauss(rng);
  return m;
}

void validate_config(const EngineConfig& cfg, const SfoProblem& p, const SignalModel* model) {
  if (cfg.max_iterations < 1) throw ConfigError("engine: max_iterations must be >= 1");
  if (cfg.step_tol < 0) throw ConfigError("engine: step_tol must be nonnegative");
  if (cfg.objective_tol < 0) throw ConfigError("engine: objective_tol must be nonnegative");
  if (cfg.mode == StatsMode::Batch) {
    if (cfg.batch_size < 1) throw ConfigError("engine: batch_size must be >= 1 in batch mode");
    if (model == nullptr) throw ConfigError("engine: batch mode needs a signal model to sample");
  }
  if (cfg.fixes.enable_split && p.variable_count() != 1)
    throw ConfigError("engine: the split fix supports single-variable problems only");
}

}  // namespace

void attach_gamma_if_needed(const SfoProblem& p, StatisticsSet& S) {
  if (p.uses_gamma() && S.Gamma.size() == 0)
    S.Gamma = Matrix::Identity(S.R_yy.rows(), S.R_yy.rows());
}

VariableSet initial_point(const SfoProblem& p, const StatisticsSet& S, const BlockLayout& layout,
                          std::uint64_t seed) {
  std::mt19937_64 rng(mix_seed(seed, 0x1d1a));
  VariableSet X;
  for (int v = 0; v < p.variable_count(); ++v)
    X.push_back(gaussian_matrix(layout.total, p.output_dim(), rng));
  return p.project_feasible(X, S);
}

VariableSet local_solve_with_tiebreak(const SfoProblem& p, const StatisticsSet& local,
                                      const VariableSet& reference, SolveInfo* info) {
  return p.solve(local, &reference, info);
}

Matrix disseminate_and_update(const TransitionMatrix& C, const Matrix& local_solution) {
  // Root takes the top block, every other node right-multiplies its block by its
  // stream's update; this is exactly the expand/apply kernel, bit for bit.
  return expand(C, local_solution);
}

RunReport run_dasf(const SfoProblem& p, const NetworkGraph& g, const StatisticsSet& exact,
                   const SignalModel* model, const EngineConfig& cfg) {
  g.validate();
  validate_config(cfg, p, model);

  const int K = g.node_count();
  const BlockLayout layout = g.layout();
  const int Q = p.output_dim();
  const int vars = p.variable_count();

  StatisticsSet S = exact;
  attach_gamma_if_needed(p, S);
  if (S.R_yy.rows() != layout.total)
    throw ConfigError("engine: statistics dimension does not match the graph channel total");

  std::optional<VariableSet> oracle = cfg.oracle;
  if (!oracle && cfg.compute_oracle) oracle = p.solve(S);

  VariableSet X;
  if (cfg.initial) {
    X = *cfg.initial;
    if (static_cast<int>(X.size()) != vars)
      throw ConfigError("engine: initial point has the wrong number of variables");
    for (const Matrix& x : X)
      if (x.rows() != layout.total || x.cols() != Q)
        throw ConfigError("engine: initial point block has the wrong shape");
  } else {
    X = initial_point(p, S, layout, cfg.seed);
  }

  RunReport rep;
  rep.iterations.reserve(static_cast<size_t>(cfg.max_iterations));

  double f_prev = p.objective(X, S);
  std::vector<double> f_hist{f_prev};
  std::vector<double> step_hist;

  std::optional<SampleBatch> shared_batch;
  if (cfg.mode == StatsMode::Batch && cfg.reuse_batch)
    shared_batch = sample_batch(*model, cfg.batch_size, mix_seed(cfg.seed, 0xba7c4));

  std::vector<int> schedule(static_cast<size_t>(K));
  std::iota(schedule.begin(), schedule.end(), 0);

  // A single node's update can be a structural no-op (its feasible directions
  // may nest inside a neighbor's), so convergence requires the tolerance to
  // hold for a full round of updates, not for one lucky iteration.
  int calm = 0;

  for (int i = 0; i < cfg.max_iterations; ++i) {
    if (cfg.random_sequence && i % K == 0) {
      std::mt19937_64 rng(mix_seed(cfg.seed, 0x0cde + static_cast<std::uint64_t>(i / K)));
      std::shuffle(schedule.begin(), schedule.end(), rng);
    }
    const int q = schedule[static_cast<size_t>(i % K)];
    const PrunedTree tree = prune_to_tree(g, q, cfg.prune_seed);

    double witness = std::numeric_limits<double>::quiet_NaN();
    if ((cfg.track_conditions || cfg.fixes.enable_split) && p.constraint_count() > 0)
      witness = branch_independence_witness(p, X, S, g, q, cfg.prune_seed);

    const bool do_split =
        cfg.fixes.enable_split && std::isfinite(witness) && witness < cfg.fixes.split_trigger;

    std::vector<TransitionMatrix> maps;
    maps.reserve(static_cast<size_t>(vars));
    if (do_split) {
      std::vector<int> nodes;
      if (cfg.fixes.split_scope == SplitScope::Branches) {
        for (int k = 0; k < K; ++k)
          if (k != q) nodes.push_back(k);
      } else {
        nodes = tree.root_neighbors;
      }
      std::mt19937_64 rng(mix_seed(cfg.seed ^ 0x5b17f1a6, static_cast<std::uint64_t>(i)));
      const SplitParts parts = make_split_parts(X[0], layout, nodes, cfg.fixes.split_scale,
                                                cfg.fixes.split_retries, rng);
      maps.push_back(
          build_split_transition_matrix(parts, X[0], layout, tree, cfg.fixes.split_scope));
    } else {
      for (int v = 0; v < vars; ++v) maps.push_back(build_transition_matrix(X[v], layout, tree));
    }

    long batch_rows = 0;
    StatisticsSet local;
    if (cfg.mode == StatsMode::Exact) {
      local = localize_statistics(S, maps[0], vars > 1 ? &maps[1] : nullptr);
    } else {
      SampleBatch fresh;
      const SampleBatch* batch = nullptr;
      if (shared_batch) {
        batch = &*shared_batch;
      } else {
        fresh = sample_batch(*model, cfg.batch_size,
                             mix_seed(cfg.seed, 0xb000 + static_cast<std::uint64_t>(i)));
        batch = &fresh;
      }
      batch_rows = batch->size();
      SampleBatch compressed;
      compressed.y = compress_batch(maps[0], batch->y);
      if (batch->v.size() > 0)
        compressed.v = compress_batch(maps[vars > 1 ? 1 : 0], batch->v);
      compressed.d = batch->d;
      local = estimate_statistics(compressed);
      // Deterministic problem data is mapped exactly, not estimated.
      if (p.uses_steering()) {
        local.B = maps[0].left(S.B);
        local.A = S.A;
      }
      if (p.uses_gamma()) local.Gamma = maps[0].congruence(S.Gamma);
    }

    VariableSet ref;
    ref.reserve(static_cast<size_t>(vars));
    for (int v = 0; v < vars; ++v) ref.push_back(local_reference(maps[v], X[v]));

    SolveInfo info;
    const VariableSet Xt = local_solve_with_tiebreak(p, local, ref, &info);

    VariableSet X_cand;
    X_cand.reserve(static_cast<size_t>(vars));
    for (int v = 0; v < vars; ++v)
      X_cand.push_back(
          disseminate_and_update(maps[static_cast<size_t>(v)], Xt[static_cast<size_t>(v)]));
    const double pending = stacked_distance(X_cand, X);

    const bool degenerate =
        std::isfinite(info.eigengap) && info.eigengap < cfg.fixes.eigengap_threshold;
    bool skip = false;
    if (cfg.fixes.enable_guard) {
      // Judge the pending move against the last full round of updates: in a
      // round-robin schedule a stalled node is interleaved with settled
      // neighbours, so a shorter window would never see both signals at once.
      const size_t w = std::min(static_cast<size_t>(K), step_hist.size());
      const std::vector<double> fw(f_hist.end() - static_cast<long>(w) - 1, f_hist.end());
      const std::vector<double> sw(step_hist.end() - static_cast<long>(w), step_hist.end());
      skip = oscillation_guard(fw, sw, pending, info.eigengap, cfg.fixes).skip;
    } else if (degenerate) {
      if (cfg.fixes.on_degenerate == DegeneratePolicy::Abort) {
        std::ostringstream msg;
        msg << "near-degenerate local solve at node " << q << " (gap " << info.eigengap << ")";
        throw Error(msg.str());
      }
      skip = true;
    }

    const VariableSet& X_next = skip ? X : X_cand;
    const double f_next = p.objective(X_next, S);
    const double viol = p.max_violation(X_next, S);
    const double step = skip ? 0.0 : pending;

    // Audits only make sense against exact statistics; estimation noise breaks
    // the per-iteration decrease premise in batch mode.
    if (cfg.mode == StatsMode::Exact && !skip) {
      if (f_next > f_prev + 1e-10 * (1 + std::abs(f_prev))) ++rep.monotonicity_violations;
      if (viol > 1e-8) ++rep.feasibility_violations;
    }

    IterationRecord rec;
    rec.iter = i;
    rec.node = q;
    rec.objective = f_next;
    rec.max_violation = viol;
    rec.step_norm = step;
    if (oracle) rec.eps_vs_oracle = solution_error(p, X_next, *oracle);
    rec.sigma_J = witness;
    rec.eigengap = info.eigengap;
    rec.split = do_split;
    rec.skipped = skip;
    rec.degenerate = degenerate;
    // Communication accounting: one fused transmission up and one update
    // broadcast down per tree edge and per variable. Scalar volume counts each
    // edge's stream payloads: compressed samples (batch mode only) plus the
    // compressed steering upward, and the Q x Q update block downward.
    for (int v = 0; v < vars; ++v) {
      const TransitionMatrix& C = maps[static_cast<size_t>(v)];
      rec.messages += 2L * (K - 1);
      const long l_b = (p.uses_steering() && v == 0 && S.B.size() > 0) ? S.B.cols() : 0;
      std::vector<char> carries(static_cast<size_t>(K), 0);
      for (const Stream& st : C.streams()) {
        std::fill(carries.begin(), carries.end(), 0);
        for (const auto& entry : st.entries)
          for (int k = entry.first; k != q; k = tree.parent[static_cast<size_t>(k)]) {
            if (carries[static_cast<size_t>(k)]) break;
            carries[static_cast<size_t>(k)] = 1;
          }
        const long edges = std::count(carries.begin(), carries.end(), char(1));
        rec.scalars += edges * Q * (batch_rows + l_b);
        rec.scalars += edges * Q * Q;
      }
    }
    rep.iterations.push_back(rec);

    if (!skip) {
      const double rel_step = step / std::max(stacked_norm(X), 1e-12);
      const double rel_df = std::abs(f_next - f_prev) / std::max(1.0, std::abs(f_prev));
      X = std::move(X_cand);
      f_hist.push_back(f_next);
      step_hist.push_back(step);
      f_prev = f_next;
      if (cfg.step_tol > 0 && rel_step <= cfg.step_tol && rel_df <= cfg.objective_tol)
        ++calm;
      else
        calm = 0;
      if (calm >= K) {
        rep.converged = true;
        rep.stop_reason = "step and objective change below tolerance";
        break;
      }
    }
  }

  rep.final_X = X;
  rep.final_objective = f_prev;
  rep.final_kkt = kkt_residual(p, X, S);
  if (oracle) rep.final_eps = solution_error(p, X, *oracle);
  if (!rep.converged) rep.stop_reason = "iteration cap reached";
  return rep;
}

}  // namespace dasf
