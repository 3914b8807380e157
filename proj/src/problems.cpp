#include "dasf/problems.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>
#include <cmath>

#include "dasf/pencil.hpp"

namespace dasf {

namespace {

const Matrix& need(const Matrix& m, const char* what) {
  if (m.size() == 0) throw Error(std::string("statistics missing field: ") + what);
  return m;
}

Matrix gamma_or_identity(const StatisticsSet& S, Index n) {
  if (S.Gamma.size() > 0) {
    if (S.Gamma.rows() != n || S.Gamma.cols() != n) throw Error("Gamma shape mismatch");
    return S.Gamma;
  }
  return Matrix::Identity(n, n);
}

// SPD solve with iterative refinement so residuals stay near machine precision
// even for moderately conditioned systems.
Matrix refined_spd_solve(const Matrix& A, const Matrix& B) {
  Eigen::LLT<Matrix> llt(A);
  if (llt.info() != Eigen::Success) throw Error("spd solve: matrix not positive definite");
  Matrix X = llt.solve(B);
  for (int sweep = 0; sweep < 2; ++sweep) X += llt.solve(B - A * X);
  return X;
}

void check_condition_number(const Matrix& A, double cap, const char* what,
                            const char* advice = "") {
  Eigen::SelfAdjointEigenSolver<Matrix> es(A, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (lo <= 0) throw Error(std::string(what) + ": matrix not positive definite" + advice);
  if (hi / lo > cap) throw Error(std::string(what) + ": condition number above cap" + advice);
}

// Symmetric constraint families h_{ml}, l <= m, enumerated j = m(m+1)/2 + l.
std::pair<int, int> sym_pair(int j) {
  int m = 0;
  while ((m + 1) * (m + 2) / 2 <= j) ++m;
  return {m, j - m * (m + 1) / 2};
}

Vector vec_all(const VariableSet& xs) {
  Index n = 0;
  for (const auto& x : xs) n += x.size();
  Vector v(n);
  Index at = 0;
  for (const auto& x : xs) {
    v.segment(at, x.size()) = Eigen::Map<const Vector>(x.data(), x.size());
    at += x.size();
  }
  return v;
}

}  // namespace

// ---------------------------------------------------------------------------
// Solvers
// ---------------------------------------------------------------------------

Matrix mmse_solve(const StatisticsSet& S, double cond_cap) {
  const Matrix& R = need(S.R_yy, "R_yy");
  const Matrix& r = need(S.R_yd, "R_yd");
  check_condition_number(R, cond_cap, "mmse", "; consider the ridge variant");
  Matrix X = refined_spd_solve(R, r);
  const double rel = (R * X - r).norm() / std::max(1e-300, r.norm());
  if (rel > 1e-10) throw Error("mmse: residual above tolerance (ill-conditioned statistics)");
  return X;
}

Matrix ridge_solve(const StatisticsSet& S, double alpha) {
  if (alpha <= 0) throw Error("ridge: alpha must be positive");
  const Matrix& R = need(S.R_yy, "R_yy");
  const Matrix& r = need(S.R_yd, "R_yd");
  const Matrix G = gamma_or_identity(S, R.rows());
  return refined_spd_solve(R + alpha * G, r);
}

Matrix lcmv_solve(const StatisticsSet& S) {
  const Matrix& R = need(S.R_yy, "R_yy");
  const Matrix& B = need(S.B, "B");
  const Matrix& A = need(S.A, "A");
  if (A.cols() != B.cols()) throw Error("lcmv: A/B column mismatch");
  Eigen::ColPivHouseholderQR<Matrix> qr(B);
  if (qr.rank() < B.cols()) throw Error("lcmv: steering matrix rank deficient");

  Eigen::LLT<Matrix> llt(R);
  if (llt.info() != Eigen::Success) throw Error("lcmv: covariance not positive definite");

  // Whiten the steering matrix and factor it once; working with G = L^{-1}B
  // keeps the sensitivity at cond(G) instead of its square through B^T R^{-1} B,
  // which matters when the compressed steering columns are nearly dependent.
  const Index L = B.cols();
  Matrix G = llt.matrixL().solve(B);
  Eigen::ColPivHouseholderQR<Matrix> qr_g(G);
  const Matrix Rg = qr_g.matrixQR().topRows(L).triangularView<Eigen::Upper>();
  // R^{-1}B (B^T R^{-1}B)^{-1} rhs^T collapses to L^{-T} Q Rg^{-T} P^T rhs^T.
  auto solve_for = [&](const Matrix& rhs) {
    Matrix Z = qr_g.colsPermutation().transpose() * rhs.transpose();
    Rg.triangularView<Eigen::Upper>().transpose().solveInPlace(Z);
    Matrix Y = Matrix::Zero(G.rows(), Z.cols());
    Y.topRows(L) = Z;
    Y.applyOnTheLeft(qr_g.householderQ());
    return Matrix(llt.matrixU().solve(Y));
  };

  Matrix X = solve_for(A);
  const double scale = std::max(1.0, A.norm());
  for (int sweep = 0; sweep < 3; ++sweep) {
    const Matrix res = A - X.transpose() * B;
    if (res.norm() <= 1e-13 * scale) break;
    X += solve_for(res);
  }
  const double rel = (X.transpose() * B - A).norm() / scale;
  if (rel > 1e-10) throw Error("lcmv: constraint residual above tolerance");
  return X;
}

GevdSolution gevd_solve(const StatisticsSet& S, int Q) {
  const Matrix& Ry = need(S.R_yy, "R_yy");
  const Matrix& Rv = need(S.R_vv, "R_vv");
  if (Q <= 0 || Q > Ry.rows()) throw Error("gevd: Q out of range");
  PencilEvd evd = pencil_evd(Ry, Rv);
  GevdSolution out;
  out.values = evd.values;
  out.X = evd.vectors.leftCols(Q);
  canonicalize_column_signs(out.X);
  out.gap = eigengap_after(evd.values, Q);
  return out;
}

TroSolution tro_solve(const StatisticsSet& S, int Q, double rho_tol, int max_iter) {
  const Matrix& Ry = need(S.R_yy, "R_yy");
  const Matrix& Rv = need(S.R_vv, "R_vv");
  const Matrix G = gamma_or_identity(S, Ry.rows());
  if (Q <= 0 || Q > Ry.rows()) throw Error("tro: Q out of range");

  TroSolution out;
  out.rho = 0.0;
  out.gap = 0.0;
  Matrix X;
  for (out.iterations = 0; out.iterations < max_iter; ++out.iterations) {
    PencilEvd evd = pencil_evd(Ry - out.rho * Rv, G);
    X = evd.vectors.leftCols(Q);
    out.gap = eigengap_after(evd.values, Q);
    const double num = (X.transpose() * Ry * X).trace();
    const double den = (X.transpose() * Rv * X).trace();
    if (den <= 0) throw Error("tro: denominator statistics not positive definite");
    const double rho_new = num / den;
    const double delta = std::abs(rho_new - out.rho);
    out.rho = rho_new;
    if (delta <= rho_tol) {
      canonicalize_column_signs(X);
      out.X = X;
      return out;
    }
  }
  throw Error("tro: trace-ratio iteration did not converge");
}

CcaSolution cca_solve(const StatisticsSet& S, int Q) {
  const Matrix& Ry = need(S.R_yy, "R_yy");
  const Matrix& Rv = need(S.R_vv, "R_vv");
  const Matrix& Ryv = need(S.R_yv, "R_yv");
  if (Q <= 0 || Q > Ry.rows()) throw Error("cca: Q out of range");

  Eigen::LLT<Matrix> llt_v(Rv);
  if (llt_v.info() != Eigen::Success) throw Error("cca: R_vv not positive definite");
  Matrix M1 = Ryv * llt_v.solve(Ryv.transpose());
  M1 = 0.5 * (M1 + M1.transpose()).eval();

  PencilEvd evd = pencil_evd(M1, Ry);
  CcaSolution out;
  out.gap = eigengap_after(evd.values, Q);
  Vector lam = evd.values.head(Q);
  if (lam.minCoeff() <= 0) throw Error("cca: fewer than Q positive canonical correlations");
  out.X = evd.vectors.leftCols(Q);
  canonicalize_column_signs(out.X);
  out.correlations = lam.cwiseSqrt();
  out.W = llt_v.solve(Ryv.transpose() * out.X) * out.correlations.cwiseInverse().asDiagonal();
  return out;
}

// ---------------------------------------------------------------------------
// Problem classes
// ---------------------------------------------------------------------------

namespace {

class MmseProblem : public SfoProblem {
 public:
  MmseProblem(int Q, double cond_cap) : Q_(Q), cond_cap_(cond_cap) {}
  std::string name() const override { return "mmse"; }
  int output_dim() const override { return Q_; }
  int constraint_count() const override { return 0; }
  bool uses_desired_signal() const override { return true; }

  double objective(const VariableSet& X, const StatisticsSet& S) const override {
    const Matrix& x = X.at(0);
    double f = (x.transpose() * S.R_yy * x).trace() - 2.0 * (x.transpose() * S.R_yd).trace();
    if (S.R_dd.size() > 0) f += S.R_dd.trace();
    return f;
  }
  double constraint(int, const VariableSet&, const StatisticsSet&) const override {
    throw Error("mmse: unconstrained");
  }
  VariableSet objective_gradient(const VariableSet& X, const StatisticsSet& S) const override {
    return {2.0 * (S.R_yy * X.at(0) - S.R_yd)};
  }
  VariableSet constraint_gradient(int, const VariableSet&, const StatisticsSet&) const override {
    throw Error("mmse: unconstrained");
  }
  VariableSet solve(const StatisticsSet& S, const VariableSet*, SolveInfo* info) const override {
    if (info) *info = SolveInfo{};
    return {mmse_solve(S, cond_cap_)};
  }

 private:
  int Q_;
  double cond_cap_;
};

class RidgeProblem : public SfoProblem {
 public:
  RidgeProblem(int Q, double alpha) : Q_(Q), alpha_(alpha) {
    if (alpha <= 0) throw Error("ridge: alpha must be positive");
  }
  std::string name() const override { return "ridge"; }
  int output_dim() const override { return Q_; }
  int constraint_count() const override { return 0; }
  bool uses_desired_signal() const override { return true; }
  bool uses_gamma() const override { return true; }

  double objective(const VariableSet& X, const StatisticsSet& S) const override {
    const Matrix& x = X.at(0);
    const Matrix G = gamma_or_identity(S, x.rows());
    double f = (x.transpose() * S.R_yy * x).trace() - 2.0 * (x.transpose() * S.R_yd).trace() +
               alpha_ * (x.transpose() * G * x).trace();
    if (S.R_dd.size() > 0) f += S.R_dd.trace();
    return f;
  }
  double constraint(int, const VariableSet&, const StatisticsSet&) const override {
    throw Error("ridge: unconstrained");
  }
  VariableSet objective_gradient(const VariableSet& X, const StatisticsSet& S) const override {
    const Matrix& x = X.at(0);
    const Matrix G = gamma_or_identity(S, x.rows());
    return {2.0 * (S.R_yy * x - S.R_yd + alpha_ * (G * x))};
  }
  VariableSet constraint_gradient(int, const VariableSet&, const StatisticsSet&) const override {
    throw Error("ridge: unconstrained");
  }
  VariableSet solve(const StatisticsSet& S, const VariableSet*, SolveInfo* info) const override {
    if (info) *info = SolveInfo{};
    return {ridge_solve(S, alpha_)};
  }

 private:
  int Q_;
  double alpha_;
};

class LcmvProblem : public SfoProblem {
 public:
  LcmvProblem(int Q, int L) : Q_(Q), L_(L) {
    if (Q <= 0 || L <= 0) throw Error("lcmv: Q and L must be positive");
  }
  std::string name() const override { return "lcmv"; }
  int output_dim() const override { return Q_; }
  int constraint_count() const override { return Q_ * L_; }
  bool uses_steering() const override { return true; }

  double objective(const VariableSet& X, const StatisticsSet& S) const override {
    return (X.at(0).transpose() * S.R_yy * X.at(0)).trace();
  }
  double constraint(int j, const VariableSet& X, const StatisticsSet& S) const override {
    const int m = j / L_, l = j % L_;
    return X.at(0).col(m).dot(S.B.col(l)) - S.A(m, l);
  }
  VariableSet objective_gradient(const VariableSet& X, const StatisticsSet& S) const override {
    return {2.0 * (S.R_yy * X.at(0))};
  }
  VariableSet constraint_gradient(int j, const VariableSet& X, const StatisticsSet& S) const override {
    const int m = j / L_, l = j % L_;
    Matrix g = Matrix::Zero(X.at(0).rows(), Q_);
    g.col(m) = S.B.col(l);
    return {g};
  }
  VariableSet solve(const StatisticsSet& S, const VariableSet*, SolveInfo* info) const override {
    if (info) *info = SolveInfo{};
    return {lcmv_solve(S)};
  }
  VariableSet project_feasible(const VariableSet& X, const StatisticsSet& S) const override {
    const Matrix& x = X.at(0);
    const Matrix G = S.B.transpose() * S.B;
    const Matrix corr = refined_spd_solve(G, S.A.transpose() - S.B.transpose() * x);
    return {x + S.B * corr};
  }

 private:
  int Q_;
  int L_;
};

// Shared machinery for the orthonormality-style families h_{ml} = x_m^T M x_l - delta.
class SubspaceProblem : public SfoProblem {
 public:
  SubspaceProblem(int Q, double gap_threshold) : Q_(Q), gap_threshold_(gap_threshold) {
    if (Q <= 0) throw Error("subspace problem: Q must be positive");
  }
  int output_dim() const override { return Q_; }
  int constraint_count() const override { return Q_ * (Q_ + 1) / 2; }
  Ambiguity ambiguity() const override { return Ambiguity::ColumnSign; }
  bool uses_second_signal() const override { return true; }

 protected:
  // Constraint metric (R_vv, Gamma, ...) of the single-variable families.
  virtual Matrix metric(const StatisticsSet& S, Index n) const = 0;

  double sym_constraint(int j, const Matrix& x, const Matrix& M) const {
    auto [m, l] = sym_pair(j);
    return x.col(m).dot(M * x.col(l)) - (m == l ? 1.0 : 0.0);
  }
  Matrix sym_constraint_gradient(int j, const Matrix& x, const Matrix& M) const {
    auto [m, l] = sym_pair(j);
    Matrix g = Matrix::Zero(x.rows(), Q_);
    g.col(l) += M * x.col(m);
    g.col(m) += M * x.col(l);
    return g;
  }

  int Q_;
  double gap_threshold_;
};

class GevdProblem : public SubspaceProblem {
 public:
  using SubspaceProblem::SubspaceProblem;
  std::string name() const override { return "gevd"; }

  double objective(const VariableSet& X, const StatisticsSet& S) const override {
    return -(X.at(0).transpose() * S.R_yy * X.at(0)).trace();
  }
  double constraint(int j, const VariableSet& X, const StatisticsSet& S) const override {
    return sym_constraint(j, X.at(0), S.R_vv);
  }
  VariableSet objective_gradient(const VariableSet& X, const StatisticsSet& S) const override {
    return {-2.0 * (S.R_yy * X.at(0))};
  }
  VariableSet constraint_gradient(int j, const VariableSet& X, const StatisticsSet& S) const override {
    return {sym_constraint_gradient(j, X.at(0), S.R_vv)};
  }
  VariableSet solve(const StatisticsSet& S, const VariableSet* tie_break, SolveInfo* info) const override {
    GevdSolution sol = gevd_solve(S, Q_);
    if (info) {
      info->eigengap = sol.gap;
      info->degenerate = sol.gap < gap_threshold_;
    }
    VariableSet X{sol.X};
    if (tie_break) align_column_signs(X, *tie_break);
    return X;
  }
  VariableSet project_feasible(const VariableSet& X, const StatisticsSet& S) const override {
    const Matrix& x = X.at(0);
    return {x * inverse_sqrt_spd(x.transpose() * S.R_vv * x)};
  }

 protected:
  Matrix metric(const StatisticsSet& S, Index) const override { return S.R_vv; }
};

class TroProblem : public SubspaceProblem {
 public:
  using SubspaceProblem::SubspaceProblem;
  std::string name() const override { return "tro"; }
  bool uses_gamma() const override { return true; }

  double objective(const VariableSet& X, const StatisticsSet& S) const override {
    const Matrix& x = X.at(0);
    const double num = (x.transpose() * S.R_yy * x).trace();
    const double den = (x.transpose() * S.R_vv * x).trace();
    return -num / den;
  }
  double constraint(int j, const VariableSet& X, const StatisticsSet& S) const override {
    return sym_constraint(j, X.at(0), metric(S, X.at(0).rows()));
  }
  VariableSet objective_gradient(const VariableSet& X, const StatisticsSet& S) const override {
    const Matrix& x = X.at(0);
    const double num = (x.transpose() * S.R_yy * x).trace();
    const double den = (x.transpose() * S.R_vv * x).trace();
    const double rho = num / den;
    return {(2.0 / den) * (rho * (S.R_vv * x) - S.R_yy * x)};
  }
  VariableSet constraint_gradient(int j, const VariableSet& X, const StatisticsSet& S) const override {
    return {sym_constraint_gradient(j, X.at(0), metric(S, X.at(0).rows()))};
  }
  VariableSet solve(const StatisticsSet& S, const VariableSet* tie_break, SolveInfo* info) const override {
    TroSolution sol = tro_solve(S, Q_);
    if (info) {
      info->eigengap = sol.gap;
      info->degenerate = sol.gap < gap_threshold_;
      info->inner_iterations = sol.iterations;
    }
    VariableSet X{sol.X};
    if (tie_break) align_column_signs(X, *tie_break);
    return X;
  }
  VariableSet project_feasible(const VariableSet& X, const StatisticsSet& S) const override {
    const Matrix& x = X.at(0);
    return {x * inverse_sqrt_spd(x.transpose() * metric(S, x.rows()) * x)};
  }

 protected:
  Matrix metric(const StatisticsSet& S, Index n) const override { return gamma_or_identity(S, n); }
};

class CcaProblem : public SfoProblem {
 public:
  CcaProblem(int Q, double gap_threshold) : Q_(Q), gap_threshold_(gap_threshold) {
    if (Q <= 0) throw Error("cca: Q must be positive");
  }
  std::string name() const override { return "cca"; }
  int output_dim() const override { return Q_; }
  int variable_count() const override { return 2; }
  int constraint_count() const override { return Q_ * (Q_ + 1); }
  Ambiguity ambiguity() const override { return Ambiguity::ColumnSign; }
  bool uses_second_signal() const override { return true; }

  double objective(const VariableSet& X, const StatisticsSet& S) const override {
    return -(X.at(0).transpose() * S.R_yv * X.at(1)).trace();
  }
  double constraint(int j, const VariableSet& X, const StatisticsSet& S) const override {
    const int half = Q_ * (Q_ + 1) / 2;
    const bool first = j < half;
    auto [m, l] = sym_pair(first ? j : j - half);
    const Matrix& x = X.at(first ? 0 : 1);
    const Matrix& M = first ? S.R_yy : S.R_vv;
    return x.col(m).dot(M * x.col(l)) - (m == l ? 1.0 : 0.0);
  }
  VariableSet objective_gradient(const VariableSet& X, const StatisticsSet& S) const override {
    return {-(S.R_yv * X.at(1)), -(S.R_yv.transpose() * X.at(0))};
  }
  VariableSet constraint_gradient(int j, const VariableSet& X, const StatisticsSet& S) const override {
    const int half = Q_ * (Q_ + 1) / 2;
    const bool first = j < half;
    auto [m, l] = sym_pair(first ? j : j - half);
    const Matrix& x = X.at(first ? 0 : 1);
    const Matrix& M = first ? S.R_yy : S.R_vv;
    Matrix g = Matrix::Zero(x.rows(), Q_);
    g.col(l) += M * x.col(m);
    g.col(m) += M * x.col(l);
    VariableSet out{Matrix::Zero(X.at(0).rows(), Q_), Matrix::Zero(X.at(1).rows(), Q_)};
    out.at(first ? 0 : 1) = g;
    return out;
  }
  VariableSet solve(const StatisticsSet& S, const VariableSet* tie_break, SolveInfo* info) const override {
    CcaSolution sol = cca_solve(S, Q_);
    if (info) {
      info->eigengap = sol.gap;
      info->degenerate = sol.gap < gap_threshold_;
    }
    VariableSet X{sol.X, sol.W};
    if (tie_break) align_column_signs(X, *tie_break);
    return X;
  }
  VariableSet project_feasible(const VariableSet& X, const StatisticsSet& S) const override {
    const Matrix& x = X.at(0);
    const Matrix& w = X.at(1);
    return {x * inverse_sqrt_spd(x.transpose() * S.R_yy * x),
            w * inverse_sqrt_spd(w.transpose() * S.R_vv * w)};
  }

 private:
  int Q_;
  double gap_threshold_;
};

}  // namespace

VariableSet SfoProblem::project_feasible(const VariableSet& X, const StatisticsSet&) const {
  return X;
}

double SfoProblem::max_violation(const VariableSet& X, const StatisticsSet& S) const {
  double worst = 0;
  for (int j = 0; j < constraint_count(); ++j) {
    const double h = constraint(j, X, S);
    const double v = constraint_kind(j) == ConstraintKind::Equality ? std::abs(h) : std::max(h, 0.0);
    worst = std::max(worst, v);
  }
  return worst;
}

std::unique_ptr<SfoProblem> make_mmse(int Q, double cond_cap) {
  return std::make_unique<MmseProblem>(Q, cond_cap);
}
std::unique_ptr<SfoProblem> make_ridge(int Q, double alpha) {
  return std::make_unique<RidgeProblem>(Q, alpha);
}
std::unique_ptr<SfoProblem> make_lcmv(int Q, int L) { return std::make_unique<LcmvProblem>(Q, L); }
std::unique_ptr<SfoProblem> make_gevd(int Q, double gap_threshold) {
  return std::make_unique<GevdProblem>(Q, gap_threshold);
}
std::unique_ptr<SfoProblem> make_tro(int Q, double gap_threshold) {
  return std::make_unique<TroProblem>(Q, gap_threshold);
}
std::unique_ptr<SfoProblem> make_cca(int Q, double gap_threshold) {
  return std::make_unique<CcaProblem>(Q, gap_threshold);
}

KktReport kkt_residual(const SfoProblem& p, const VariableSet& X, const StatisticsSet& S,
                       double active_tol) {
  KktReport rep;
  const Vector grad_f = vec_all(p.objective_gradient(X, S));

  std::vector<int> active;
  for (int j = 0; j < p.constraint_count(); ++j) {
    const double h = p.constraint(j, X, S);
    const bool eq = p.constraint_kind(j) == ConstraintKind::Equality;
    rep.max_primal = std::max(rep.max_primal, eq ? std::abs(h) : std::max(h, 0.0));
    if (eq || h >= -active_tol) active.push_back(j);
  }

  if (active.empty()) {
    rep.stationarity = grad_f.norm();
    return rep;
  }

  Matrix G(grad_f.size(), static_cast<Index>(active.size()));
  for (size_t c = 0; c < active.size(); ++c)
    G.col(static_cast<Index>(c)) = vec_all(p.constraint_gradient(active[c], X, S));

  // Minimum-norm least squares keeps the report meaningful when the constraint
  // gradients are dependent (multipliers need not be unique there).
  Eigen::BDCSVD<Matrix> svd(G, Eigen::ComputeThinU | Eigen::ComputeThinV);
  rep.multipliers = svd.solve(-grad_f);
  rep.stationarity = (grad_f + G * rep.multipliers).norm();

  double min_ineq = 0;
  bool any_ineq = false;
  for (size_t c = 0; c < active.size(); ++c) {
    const int j = active[c];
    if (p.constraint_kind(j) == ConstraintKind::Inequality) {
      const double lam = rep.multipliers(static_cast<Index>(c));
      const double h = p.constraint(j, X, S);
      rep.max_complementarity = std::max(rep.max_complementarity, std::abs(lam * h));
      min_ineq = any_ineq ? std::min(min_ineq, lam) : lam;
      any_ineq = true;
    }
  }
  rep.min_inequality_multiplier = any_ineq ? min_ineq : 0.0;
  return rep;
}

}  // namespace dasf
