#include "dasf/pencil.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <limits>

namespace dasf {

PencilEvd pencil_evd(const Matrix& A, const Matrix& B) {
  if (A.rows() != A.cols() || B.rows() != B.cols() || A.rows() != B.rows())
    throw Error("pencil: shape mismatch");
  Eigen::LLT<Matrix> llt(B);
  if (llt.info() != Eigen::Success) throw Error("pencil: right-hand matrix not positive definite");
  const Matrix L = llt.matrixL();
  // W = L^{-1} A L^{-T}, kept exactly symmetric for the eigensolver.
  Matrix W = L.triangularView<Eigen::Lower>().solve(A);
  W = L.triangularView<Eigen::Lower>().solve(W.transpose()).eval();
  W = 0.5 * (W + W.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Matrix> es(W);
  if (es.info() != Eigen::Success) throw Error("pencil: eigensolver failed");

  PencilEvd out;
  out.values = es.eigenvalues().reverse();
  Matrix U = es.eigenvectors().rowwise().reverse();
  out.vectors = L.transpose().triangularView<Eigen::Upper>().solve(U);
  return out;
}

Matrix inverse_sqrt_spd(const Matrix& A) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (A + A.transpose()));
  if (es.info() != Eigen::Success) throw Error("inverse sqrt: eigensolver failed");
  if (es.eigenvalues().minCoeff() <= 0) throw Error("inverse sqrt: matrix not positive definite");
  return es.eigenvectors() * es.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
         es.eigenvectors().transpose();
}

void canonicalize_column_signs(Matrix& X) {
  for (Index c = 0; c < X.cols(); ++c) {
    Index imax = 0;
    double best = -1;
    for (Index r = 0; r < X.rows(); ++r) {
      const double mag = std::abs(X(r, c));
      if (mag > best) {
        best = mag;
        imax = r;
      }
    }
    if (X(imax, c) < 0) X.col(c) = -X.col(c);
  }
}

bool lex_less(const Vector& a, const Vector& b) {
  for (Index i = 0; i < a.size(); ++i) {
    if (a(i) < b(i)) return true;
    if (a(i) > b(i)) return false;
  }
  return false;
}

void align_column_signs(VariableSet& X, const VariableSet& ref) {
  if (X.empty()) return;
  if (X.size() != ref.size()) throw Error("sign alignment: arity mismatch");
  const Index Q = X[0].cols();
  for (const auto& m : X)
    if (m.cols() != Q) throw Error("sign alignment: column count mismatch");

  for (Index c = 0; c < Q; ++c) {
    double dot = 0;
    for (size_t v = 0; v < X.size(); ++v) dot += X[v].col(c).dot(ref[v].col(c));
    bool flip;
    if (dot > 0) {
      flip = false;
    } else if (dot < 0) {
      flip = true;
    } else {
      // Equidistant candidates: compare the stacked column lexicographically.
      Index rows = 0;
      for (const auto& m : X) rows += m.rows();
      Vector plus(rows);
      Index at = 0;
      for (const auto& m : X) {
        plus.segment(at, m.rows()) = m.col(c);
        at += m.rows();
      }
      flip = lex_less(-plus, plus);
    }
    if (flip)
      for (auto& m : X) m.col(c) = -m.col(c);
  }
}

double eigengap_after(const Vector& values, int q) {
  if (q <= 0 || q > values.size()) throw Error("eigengap: index out of range");
  if (q == values.size()) return std::numeric_limits<double>::infinity();
  return values(q - 1) - values(q);
}

}  // namespace dasf
