#include "dasf/diagnostics.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "dasf/pencil.hpp"

namespace dasf {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Matrix block_of(const Matrix& stacked, const BlockLayout& layout, int k) {
  return stacked.middleRows(layout.offset(k), layout.size(k));
}

Vector vec_of(const Matrix& m) { return Eigen::Map<const Vector>(m.data(), m.size()); }

// Smallest (J-th) and largest singular values of a stack whose columns are the
// vectorized constraint objects. Returns {sigma_J, sigma_1}; sigma_J is zero when
// the column count exceeds the row count (dependence by counting).
std::pair<double, double> stack_extremes(const Matrix& G) {
  if (G.cols() > G.rows()) {
    Eigen::BDCSVD<Matrix> svd(G);
    return {0.0, svd.singularValues().size() ? svd.singularValues()(0) : 0.0};
  }
  Eigen::BDCSVD<Matrix> svd(G);
  const Vector& sv = svd.singularValues();
  return {sv(sv.size() - 1), sv(0)};
}

std::vector<std::vector<Stream>> default_streams(const VariableSet& X, const BlockLayout& layout,
                                                 const PrunedTree& tree) {
  std::vector<std::vector<Stream>> out;
  out.reserve(X.size());
  for (const Matrix& x : X) out.push_back(build_transition_matrix(x, layout, tree).streams());
  return out;
}

}  // namespace

BoundSet constraint_count_bounds(int Q, int K, const std::vector<int>& degrees, int vars) {
  if (Q <= 0 || K <= 0 || vars <= 0) throw Error("bounds: Q, K, vars must be positive");
  if (static_cast<int>(degrees.size()) != K) throw Error("bounds: degree list arity mismatch");
  const double q2 = static_cast<double>(vars) * Q * Q;
  BoundSet b;
  b.network_wide = q2;
  const int min_deg = *std::min_element(degrees.begin(), degrees.end());
  b.sparsest_node = (1.0 + min_deg) * q2;
  if (K > 1) {
    int sum = 0;
    for (int d : degrees) sum += d;
    b.connectivity = q2 * sum / (K - 1);
  } else {
    b.connectivity = std::numeric_limits<double>::infinity();
  }
  b.combined = std::min(b.sparsest_node, b.connectivity);
  return b;
}

ConditionReport check_global_independence(const SfoProblem& p, const VariableSet& X,
                                          const StatisticsSet& S, double rel_tol) {
  ConditionReport rep;
  rep.id = "1a";
  const int J = p.constraint_count();
  if (J == 0) {
    rep.pass = true;
    rep.detail = "unconstrained: multiplier uniqueness is vacuous";
    return rep;
  }
  const int Q = p.output_dim();
  const int vars = p.variable_count();
  const Index rows = static_cast<Index>(vars) * Q * Q;

  Matrix G(rows, J);
  for (int j = 0; j < J; ++j) {
    const VariableSet grad = p.constraint_gradient(j, X, S);
    Matrix stack(static_cast<Index>(vars) * Q, Q);
    for (int v = 0; v < vars; ++v)
      stack.middleRows(static_cast<Index>(v) * Q, Q) = X[static_cast<size_t>(v)].transpose() * grad[static_cast<size_t>(v)];
    G.col(j) = vec_of(stack);
  }
  auto [sj, s1] = stack_extremes(G);
  rep.witness = sj;
  const bool count_ok = J <= rows;
  rep.pass = count_ok && s1 > 0 && sj > rel_tol * s1;
  std::ostringstream os;
  os << "sigma_J=" << sj << " sigma_1=" << s1 << " J=" << J << " cap=" << rows;
  rep.detail = os.str();
  return rep;
}

std::vector<Matrix> branch_constraint_stacks(const SfoProblem& p, const VariableSet& X,
                                             const StatisticsSet& S, const BlockLayout& layout,
                                             int q,
                                             const std::vector<std::vector<Stream>>& streams_per_var) {
  const int J = p.constraint_count();
  const int Q = p.output_dim();
  const int vars = p.variable_count();
  if (static_cast<int>(streams_per_var.size()) != vars)
    throw Error("branch stacks: stream arity mismatch");

  std::vector<Matrix> out;
  out.reserve(static_cast<size_t>(J));
  for (int j = 0; j < J; ++j) {
    const VariableSet grad = p.constraint_gradient(j, X, S);
    Index rows = 0;
    for (int v = 0; v < vars; ++v)
      rows += static_cast<Index>(1 + streams_per_var[static_cast<size_t>(v)].size()) * Q;
    Matrix D(rows, Q);
    Index at = 0;
    for (int v = 0; v < vars; ++v) {
      const Matrix& xv = X[static_cast<size_t>(v)];
      const Matrix& gv = grad[static_cast<size_t>(v)];
      D.middleRows(at, Q) =
          block_of(xv, layout, q).transpose() * block_of(gv, layout, q);
      at += Q;
      for (const Stream& s : streams_per_var[static_cast<size_t>(v)]) {
        Matrix acc = Matrix::Zero(Q, Q);
        for (const auto& [k, block] : s.entries)
          acc += block.transpose() * block_of(gv, layout, k);
        D.middleRows(at, Q) = acc;
        at += Q;
      }
    }
    out.push_back(std::move(D));
  }
  return out;
}

std::vector<Matrix> branch_constraint_stacks(const SfoProblem& p, const VariableSet& X,
                                             const StatisticsSet& S, const NetworkGraph& g, int q,
                                             std::uint64_t prune_seed) {
  const BlockLayout layout = g.layout();
  const PrunedTree tree = prune_to_tree(g, q, prune_seed);
  return branch_constraint_stacks(p, X, S, layout, q, default_streams(X, layout, tree));
}

double branch_independence_witness(const SfoProblem& p, const VariableSet& X,
                                   const StatisticsSet& S, const BlockLayout& layout, int q,
                                   const std::vector<std::vector<Stream>>& streams_per_var) {
  const int J = p.constraint_count();
  if (J == 0) return kNaN;
  const std::vector<Matrix> stacks = branch_constraint_stacks(p, X, S, layout, q, streams_per_var);
  Matrix G(stacks[0].size(), J);
  for (int j = 0; j < J; ++j) G.col(j) = vec_of(stacks[static_cast<size_t>(j)]);
  auto [sj, s1] = stack_extremes(G);
  if (s1 <= 0) return 0.0;
  return sj / s1;
}

double branch_independence_witness(const SfoProblem& p, const VariableSet& X,
                                   const StatisticsSet& S, const NetworkGraph& g, int q,
                                   std::uint64_t prune_seed) {
  const BlockLayout layout = g.layout();
  const PrunedTree tree = prune_to_tree(g, q, prune_seed);
  return branch_independence_witness(p, X, S, layout, q, default_streams(X, layout, tree));
}

ConditionReport check_branch_independence(const SfoProblem& p, const VariableSet& X,
                                          const StatisticsSet& S, const NetworkGraph& g,
                                          double rel_tol, std::uint64_t prune_seed) {
  ConditionReport rep;
  rep.id = "1b";
  const int J = p.constraint_count();
  if (J == 0) {
    rep.pass = true;
    rep.detail = "unconstrained: multiplier uniqueness is vacuous";
    return rep;
  }
  double worst = std::numeric_limits<double>::infinity();
  int worst_node = -1;
  for (int q = 0; q < g.node_count(); ++q) {
    const double w = branch_independence_witness(p, X, S, g, q, prune_seed);
    if (w < worst) {
      worst = w;
      worst_node = q;
    }
  }
  const BoundSet bounds = constraint_count_bounds(p.output_dim(), g.node_count(), g.degrees(),
                                                  p.variable_count());
  const bool count_ok = J <= bounds.combined;
  rep.witness = worst;
  rep.node = worst_node;
  rep.pass = count_ok && worst > rel_tol;
  std::ostringstream os;
  os << "min relative sigma_J=" << worst << " at node " << worst_node << "; J=" << J
     << " combined cap=" << bounds.combined;
  rep.detail = os.str();
  return rep;
}

MultiplierRankReport multiplier_system_rank(const SfoProblem& p, const VariableSet& X,
                                            const StatisticsSet& S, const NetworkGraph& g,
                                            double rel_tol, std::uint64_t prune_seed) {
  const int J = p.constraint_count();
  const int Q = p.output_dim();
  const int K = g.node_count();
  const int vars = p.variable_count();
  const BlockLayout layout = g.layout();
  if (J == 0) throw Error("multiplier rank: problem has no constraints");

  // Per-node matrices: columns are the vectorized reduced gradients at that node.
  const Index rows_per_node = static_cast<Index>(vars) * Q * Q;
  std::vector<Matrix> Hk(static_cast<size_t>(K), Matrix(rows_per_node, J));
  for (int j = 0; j < J; ++j) {
    const VariableSet grad = p.constraint_gradient(j, X, S);
    for (int k = 0; k < K; ++k) {
      Matrix stack(static_cast<Index>(vars) * Q, Q);
      for (int v = 0; v < vars; ++v)
        stack.middleRows(static_cast<Index>(v) * Q, Q) =
            block_of(X[static_cast<size_t>(v)], layout, k).transpose() *
            block_of(grad[static_cast<size_t>(v)], layout, k);
      Hk[static_cast<size_t>(k)].col(j) = vec_of(stack);
    }
  }

  Index block_rows = 0;
  for (int q = 0; q < K; ++q) block_rows += static_cast<Index>(g.neighbors(q).size());

  MultiplierRankReport rep;
  rep.rows = block_rows * rows_per_node;
  rep.cols = static_cast<Index>(K) * J;
  Matrix H = Matrix::Zero(rep.rows, rep.cols);
  Index row_at = 0;
  for (int q = 0; q < K; ++q) {
    const PrunedTree tree = prune_to_tree(g, q, prune_seed);
    for (size_t b = 0; b < tree.root_neighbors.size(); ++b) {
      Matrix branch_sum = Matrix::Zero(rows_per_node, J);
      for (int k : tree.branches[b]) branch_sum += Hk[static_cast<size_t>(k)];
      H.block(row_at, static_cast<Index>(q) * J, rows_per_node, J) = -branch_sum;
      for (int k : tree.branches[b])
        H.block(row_at, static_cast<Index>(k) * J, rows_per_node, J) = Hk[static_cast<size_t>(k)];
      row_at += rows_per_node;
    }
  }

  Eigen::BDCSVD<Matrix> svd(H);
  const Vector& sv = svd.singularValues();
  const double smax = sv.size() ? sv(0) : 0.0;
  Index rank = 0;
  for (Index i = 0; i < sv.size(); ++i)
    if (sv(i) > rel_tol * smax) ++rank;
  rep.rank = rank;
  rep.expected = static_cast<Index>(K) * J - J;
  rep.pass = rank == rep.expected;

  for (int j = 0; j < J; ++j) {
    Vector null_vec = Vector::Zero(rep.cols);
    for (int k = 0; k < K; ++k) null_vec(static_cast<Index>(k) * J + j) = 1.0;
    rep.null_residual = std::max(rep.null_residual, (H * null_vec).norm());
  }
  return rep;
}

ConditionReport check_local_definiteness(const Matrix& R, const TransitionMatrix& C,
                                         double rel_tol) {
  ConditionReport rep;
  rep.id = "lemma5";
  rep.node = C.root();
  const Matrix Cd = C.dense();
  Eigen::BDCSVD<Matrix> svd_c(Cd);
  const Vector& sc = svd_c.singularValues();
  const double c_min = sc(sc.size() - 1), c_max = sc(0);

  const Matrix local = C.congruence(R);
  Eigen::BDCSVD<Matrix> svd_l(local);
  const Vector& sl = svd_l.singularValues();
  const double l_min = sl(sl.size() - 1), l_max = sl(0);

  rep.witness = std::min(c_min, l_min);
  rep.pass = c_max > 0 && l_max > 0 && c_min > rel_tol * c_max && l_min > rel_tol * l_max;
  std::ostringstream os;
  os << "sigma_min(C)=" << c_min << " sigma_min(C^T R C)=" << l_min;
  rep.detail = os.str();
  return rep;
}

VariableSet align_solution(const SfoProblem& p, const VariableSet& X, const VariableSet& ref) {
  VariableSet out = X;
  if (p.ambiguity() == Ambiguity::ColumnSign) align_column_signs(out, ref);
  return out;
}

double solution_error(const SfoProblem& p, const VariableSet& X, const VariableSet& ref) {
  const VariableSet aligned = align_solution(p, X, ref);
  double num = 0, den = 0;
  for (size_t v = 0; v < ref.size(); ++v) {
    num += (aligned[v] - ref[v]).squaredNorm();
    den += ref[v].squaredNorm();
  }
  if (den <= 0) throw Error("solution error: zero reference");
  return num / den;
}

}  // namespace dasf
