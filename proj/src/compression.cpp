#include "dasf/compression.hpp"

#include <algorithm>

namespace dasf {

TransitionMatrix::TransitionMatrix(BlockLayout layout, int root, int q_cols,
                                   std::vector<Stream> streams)
    : layout_(std::move(layout)), root_(root), q_cols_(q_cols), streams_(std::move(streams)) {
  if (root_ < 0 || root_ >= layout_.count()) throw Error("transition matrix: root out of range");
  if (q_cols_ <= 0) throw Error("transition matrix: q_cols must be positive");
  for (const Stream& s : streams_) {
    if (s.entries.empty()) throw Error("transition matrix: empty stream");
    for (const auto& [k, block] : s.entries) {
      if (k < 0 || k >= layout_.count() || k == root_)
        throw Error("transition matrix: stream entry out of range");
      if (block.rows() != layout_.size(k) || block.cols() != q_cols_)
        throw Error("transition matrix: stream block shape mismatch");
    }
  }
}

Matrix TransitionMatrix::left(const Matrix& A) const {
  if (A.rows() != rows()) throw Error("transition matrix: left operand row mismatch");
  Matrix out(cols(), A.cols());
  const int mq = layout_.size(root_);
  out.topRows(mq) = A.middleRows(layout_.offset(root_), mq);
  Index at = mq;
  for (const Stream& s : streams_) {
    Matrix acc = Matrix::Zero(q_cols_, A.cols());
    for (const auto& [k, block] : s.entries)
      acc += block.transpose() * A.middleRows(layout_.offset(k), layout_.size(k));
    out.middleRows(at, q_cols_) = acc;
    at += q_cols_;
  }
  return out;
}

Matrix TransitionMatrix::apply(const Matrix& Xt) const {
  if (Xt.rows() != cols()) throw Error("transition matrix: apply operand row mismatch");
  Matrix out = Matrix::Zero(rows(), Xt.cols());
  const int mq = layout_.size(root_);
  out.middleRows(layout_.offset(root_), mq) = Xt.topRows(mq);
  Index at = mq;
  for (const Stream& s : streams_) {
    const Matrix G = Xt.middleRows(at, q_cols_);
    for (const auto& [k, block] : s.entries)
      out.middleRows(layout_.offset(k), layout_.size(k)) += block * G;
    at += q_cols_;
  }
  return out;
}

Matrix TransitionMatrix::cross(const Matrix& R, const TransitionMatrix& other) const {
  // C^T R C_other via two blockwise left products.
  return other.left(left(R).transpose()).transpose();
}

Matrix TransitionMatrix::congruence(const Matrix& R) const {
  Matrix out = cross(R, *this);
  return 0.5 * (out + out.transpose());
}

Matrix TransitionMatrix::dense() const {
  Matrix out = Matrix::Zero(rows(), cols());
  const int mq = layout_.size(root_);
  out.block(layout_.offset(root_), 0, mq, mq).setIdentity();
  Index at = mq;
  for (const Stream& s : streams_) {
    for (const auto& [k, block] : s.entries)
      out.block(layout_.offset(k), at, layout_.size(k), q_cols_) = block;
    at += q_cols_;
  }
  return out;
}

TransitionMatrix build_transition_matrix(const Matrix& X, const BlockLayout& layout,
                                         const PrunedTree& tree) {
  if (X.rows() != layout.total) throw Error("build transition matrix: variable row mismatch");
  std::vector<Stream> streams;
  streams.reserve(tree.root_neighbors.size());
  for (size_t b = 0; b < tree.root_neighbors.size(); ++b) {
    Stream s;
    s.neighbor = tree.root_neighbors[b];
    for (int k : tree.branches[b])
      s.entries.emplace_back(k, X.middleRows(layout.offset(k), layout.size(k)));
    streams.push_back(std::move(s));
  }
  return TransitionMatrix(layout, tree.root, static_cast<int>(X.cols()), std::move(streams));
}

Matrix local_reference(const TransitionMatrix& C, const Matrix& X) {
  const int mq = C.layout().size(C.root());
  Matrix ref(C.cols(), C.q_cols());
  ref.topRows(mq) = X.middleRows(C.layout().offset(C.root()), mq);
  for (int s = 0; s < C.stream_count(); ++s)
    ref.middleRows(mq + static_cast<Index>(s) * C.q_cols(), C.q_cols()) =
        Matrix::Identity(C.q_cols(), C.q_cols());
  return ref;
}

Matrix expand(const TransitionMatrix& C, const Matrix& Xt) { return C.apply(Xt); }

StatisticsSet localize_statistics(const StatisticsSet& S, const TransitionMatrix& Cx,
                                  const TransitionMatrix* Cw) {
  const TransitionMatrix& Cv = Cw ? *Cw : Cx;
  StatisticsSet out;
  if (S.R_yy.size() > 0) out.R_yy = Cx.congruence(S.R_yy);
  if (S.R_vv.size() > 0) out.R_vv = Cv.congruence(S.R_vv);
  if (S.R_yv.size() > 0) out.R_yv = Cx.cross(S.R_yv, Cv);
  if (S.R_yd.size() > 0) out.R_yd = Cx.left(S.R_yd);
  if (S.R_dd.size() > 0) out.R_dd = S.R_dd;
  if (S.B.size() > 0) out.B = Cx.left(S.B);
  if (S.A.size() > 0) out.A = S.A;
  if (S.Gamma.size() > 0) out.Gamma = Cx.congruence(S.Gamma);
  return out;
}

std::pair<Matrix, Matrix> compress_node(const Matrix& X_k, const Matrix& y_k, const Matrix& B_k) {
  if (y_k.size() > 0 && y_k.cols() != X_k.rows()) throw Error("compress node: sample width mismatch");
  if (B_k.size() > 0 && B_k.rows() != X_k.rows()) throw Error("compress node: steering row mismatch");
  Matrix y_hat, B_hat;
  if (y_k.size() > 0) y_hat = y_k * X_k;
  if (B_k.size() > 0) B_hat = X_k.transpose() * B_k;
  return {std::move(y_hat), std::move(B_hat)};
}

FuseResult fuse_and_forward(const PrunedTree& tree, const std::vector<Matrix>& y_hat,
                            const std::vector<Matrix>& B_hat) {
  const int K = tree.node_count();
  if (static_cast<int>(y_hat.size()) != K) throw Error("fuse: per-node signal arity mismatch");
  const bool with_B = !B_hat.empty();
  if (with_B && static_cast<int>(B_hat.size()) != K) throw Error("fuse: per-node steering arity mismatch");

  std::vector<Matrix> y_acc(y_hat);
  std::vector<Matrix> B_acc(with_B ? B_hat : std::vector<Matrix>(static_cast<size_t>(K)));
  FuseResult out;

  // Children before parents: walk the breadth-first order backwards.
  for (auto it = tree.order.rbegin(); it != tree.order.rend(); ++it) {
    const int k = *it;
    if (k == tree.root) continue;
    const int p = tree.parent[static_cast<size_t>(k)];
    out.messages += 1;
    out.scalars += y_acc[static_cast<size_t>(k)].size() + B_acc[static_cast<size_t>(k)].size();
    if (p == tree.root) continue;  // arrival at the root is collected per branch below
    y_acc[static_cast<size_t>(p)] += y_acc[static_cast<size_t>(k)];
    if (with_B) B_acc[static_cast<size_t>(p)] += B_acc[static_cast<size_t>(k)];
  }

  // A root neighbor's accumulated buffer is its branch aggregate, except its own
  // deeper children have already been folded in above.
  for (int n : tree.root_neighbors) {
    out.y_branch.push_back(y_acc[static_cast<size_t>(n)]);
    out.B_branch.push_back(with_B ? B_acc[static_cast<size_t>(n)] : Matrix());
  }
  return out;
}

Matrix compress_batch(const TransitionMatrix& C, const Matrix& samples) {
  if (samples.cols() != C.rows()) throw Error("compress batch: sample width mismatch");
  return C.left(samples.transpose()).transpose();
}

}  // namespace dasf
