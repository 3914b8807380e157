#pragma once

#include "dasf/types.hpp"

namespace dasf {

// Full decomposition of the symmetric-definite pencil (A, B): values descending,
// vectors satisfying vectors^T B vectors = I and A vectors = B vectors diag(values).
struct PencilEvd {
  Vector values;
  Matrix vectors;
};

// Solved by Cholesky whitening: B = L L^T, then a symmetric eigensolve of
// L^{-1} A L^{-T} mapped back through L^{-T}. Throws if B is not positive definite.
PencilEvd pencil_evd(const Matrix& A, const Matrix& B);

// Principal inverse square root of a symmetric positive definite matrix.
Matrix inverse_sqrt_spd(const Matrix& A);

// Deterministic column-sign convention: each column's largest-magnitude entry is
// made positive (lowest index wins ties in magnitude).
void canonicalize_column_signs(Matrix& X);

// Strict lexicographic order on columns, used to settle exact sign-flip ties.
bool lex_less(const Vector& a, const Vector& b);

// Per-column sign flips minimizing the Frobenius distance to `ref`, applied jointly
// across all variables of the set (column c of every variable shares one sign).
// Exact ties pick the lexicographically smaller stacked column. Distance over sign
// patterns separates per column, so this equals the minimum over all 2^Q patterns.
void align_column_signs(VariableSet& X, const VariableSet& ref);

inline void align_column_signs(Matrix& X, const Matrix& ref) {
  VariableSet xs{X}, rs{ref};
  align_column_signs(xs, rs);
  X = xs[0];
}

// values[q-1] - values[q] for descending values; +inf when q == values.size().
double eigengap_after(const Vector& values, int q);

}  // namespace dasf
