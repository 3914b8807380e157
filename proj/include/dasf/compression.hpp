#pragma once

#include <utility>
#include <vector>

#include "dasf/graph.hpp"
#include "dasf/signals.hpp"
#include "dasf/types.hpp"

namespace dasf {

// One compressed stream flowing toward the root through a given root neighbor:
// the nodes feeding it and the coefficient block each contributes.
struct Stream {
  int neighbor = -1;
  std::vector<std::pair<int, Matrix>> entries;  // (node, block), ascending by node
};

// Block-sparse map C between network-wide coordinates (rows, one block per node)
// and a root node's local coordinates: an identity block on the root's own
// channels followed by one Q-wide column block per stream. Only the per-node
// blocks are stored; products are evaluated blockwise.
class TransitionMatrix {
 public:
  TransitionMatrix(BlockLayout layout, int root, int q_cols, std::vector<Stream> streams);

  int root() const { return root_; }
  int q_cols() const { return q_cols_; }
  Index rows() const { return layout_.total; }
  Index cols() const { return layout_.size(root_) + static_cast<Index>(streams_.size()) * q_cols_; }
  int stream_count() const { return static_cast<int>(streams_.size()); }
  const std::vector<Stream>& streams() const { return streams_; }
  const BlockLayout& layout() const { return layout_; }

  Matrix left(const Matrix& A) const;   // C^T A     (A has rows() rows)
  Matrix apply(const Matrix& Xt) const; // C Xt      (Xt has cols() rows)
  Matrix congruence(const Matrix& R) const;                      // C^T R C, symmetrized
  Matrix cross(const Matrix& R, const TransitionMatrix& other) const;  // C^T R C_other
  Matrix dense() const;

 private:
  BlockLayout layout_;
  int root_;
  int q_cols_;
  std::vector<Stream> streams_;
};

// Standard (unsplit) map for the current stacked variable: every non-root node k
// contributes its block X_k to the stream of its branch.
TransitionMatrix build_transition_matrix(const Matrix& X, const BlockLayout& layout,
                                         const PrunedTree& tree);

// Local coordinates of the current iterate: the root keeps its own block, every
// stream is parameterized by an identity. Satisfies apply(C, reference) == X.
Matrix local_reference(const TransitionMatrix& C, const Matrix& X);

// Network-wide variable reconstructed from a local solution (C * Xt).
Matrix expand(const TransitionMatrix& C, const Matrix& Xt);

// Blockwise statistics localization: covariances are mapped by congruence with the
// variable's map (the second variable's map used for its own covariance and the
// cross term), steering by a left product, targets copied through.
StatisticsSet localize_statistics(const StatisticsSet& S, const TransitionMatrix& Cx,
                                  const TransitionMatrix* Cw = nullptr);

// Per-node compression of a sample block (rows are samples): y_k X_k and X_k^T B_k.
std::pair<Matrix, Matrix> compress_node(const Matrix& X_k, const Matrix& y_k, const Matrix& B_k);

// Leaves-inward aggregation toward the root. y_hat[k] holds node k's compressed
// samples (N x Q), B_hat[k] its compressed steering (may be empty). Every non-root
// node sends exactly one message to its parent; the accumulated sums arriving at
// the root through each neighbor are returned per branch.
struct FuseResult {
  std::vector<Matrix> y_branch;  // per root neighbor, N x Q
  std::vector<Matrix> B_branch;  // per root neighbor, Q x L (empty when unused)
  long messages = 0;
  long scalars = 0;
};
FuseResult fuse_and_forward(const PrunedTree& tree, const std::vector<Matrix>& y_hat,
                            const std::vector<Matrix>& B_hat);

// Compressed sample block in local coordinates: rows are samples of
// [y_root; stream sums...] obtained through the same linear map as left().
Matrix compress_batch(const TransitionMatrix& C, const Matrix& samples);

}  // namespace dasf
