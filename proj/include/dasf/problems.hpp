#pragma once

#include <limits>
#include <memory>
#include <string>

#include "dasf/signals.hpp"
#include "dasf/types.hpp"

namespace dasf {

enum class ConstraintKind { Equality, Inequality };

// How the solution set is ambiguous, for error metrics and tie-breaking.
enum class Ambiguity { None, ColumnSign };

struct SolveInfo {
  // Spectral gap between the selected and first discarded direction of the pencil
  // behind the solve; NaN for closed-form problems without one.
  double eigengap = std::numeric_limits<double>::quiet_NaN();
  bool degenerate = false;  // gap fell below the problem's threshold
  int inner_iterations = 0; // fractional-program refinements, when applicable
};

struct KktReport {
  Vector multipliers;               // one per active constraint
  double stationarity = 0;          // Frobenius norm of the Lagrangian gradient
  double max_primal = 0;            // worst constraint violation
  double max_complementarity = 0;   // worst |lambda_j h_j| over inequalities
  double min_inequality_multiplier = 0;  // dual feasibility witness (0 if none)
};

// A problem instance over second-order statistics whose compressed version has the
// same structure, so one object solves both network-wide and node-local instances
// (dimensions are read from the statistics, never stored).
class SfoProblem {
 public:
  virtual ~SfoProblem() = default;

  virtual std::string name() const = 0;
  virtual int output_dim() const = 0;  // Q
  virtual int variable_count() const { return 1; }
  virtual int constraint_count() const = 0;  // J
  virtual ConstraintKind constraint_kind(int) const { return ConstraintKind::Equality; }
  virtual Ambiguity ambiguity() const { return Ambiguity::None; }

  virtual bool uses_second_signal() const { return false; }
  virtual bool uses_desired_signal() const { return false; }
  virtual bool uses_gamma() const { return false; }
  virtual bool uses_steering() const { return false; }

  virtual double objective(const VariableSet& X, const StatisticsSet& S) const = 0;
  virtual double constraint(int j, const VariableSet& X, const StatisticsSet& S) const = 0;
  virtual VariableSet objective_gradient(const VariableSet& X, const StatisticsSet& S) const = 0;
  virtual VariableSet constraint_gradient(int j, const VariableSet& X, const StatisticsSet& S) const = 0;

  // Global minimizer for the statistics at hand. When `tie_break` is given, the
  // returned candidate of the solver's finite solution set minimizes the Frobenius
  // distance to it; otherwise the deterministic sign convention applies.
  virtual VariableSet solve(const StatisticsSet& S, const VariableSet* tie_break = nullptr,
                            SolveInfo* info = nullptr) const = 0;

  // Cheap map onto the feasible set (identity for unconstrained problems).
  virtual VariableSet project_feasible(const VariableSet& X, const StatisticsSet& S) const;

  double max_violation(const VariableSet& X, const StatisticsSet& S) const;
};

std::unique_ptr<SfoProblem> make_mmse(int Q, double cond_cap = 1e12);
std::unique_ptr<SfoProblem> make_ridge(int Q, double alpha);
std::unique_ptr<SfoProblem> make_lcmv(int Q, int L);
std::unique_ptr<SfoProblem> make_gevd(int Q, double gap_threshold = 1e-8);
std::unique_ptr<SfoProblem> make_tro(int Q, double gap_threshold = 1e-8);
std::unique_ptr<SfoProblem> make_cca(int Q, double gap_threshold = 1e-8);

// Closed-form / iterative solvers underneath the problem classes.

// argmin_X E||X^T y - d||^2 = R_yy^{-1} R_yd. Errors if R_yy is singular or its
// condition number exceeds cond_cap; the residual is checked to 1e-10 relative.
Matrix mmse_solve(const StatisticsSet& S, double cond_cap = 1e12);

// argmin_X E||X^T y - d||^2 + alpha ||X||_F^2 = (R_yy + alpha Gamma)^{-1} R_yd,
// with Gamma defaulting to the identity when the statistics carry none.
Matrix ridge_solve(const StatisticsSet& S, double alpha);

// argmin tr(X^T R_yy X) s.t. X^T B = A:  R_yy^{-1} B (B^T R_yy^{-1} B)^{-1} A^T.
// Errors if B is rank deficient or the constraints cannot be met to 1e-10.
Matrix lcmv_solve(const StatisticsSet& S);

struct GevdSolution {
  Matrix X;       // M x Q, X^T R_vv X = I
  Vector values;  // all generalized eigenvalues, descending
  double gap;     // values[Q-1] - values[Q]
};
GevdSolution gevd_solve(const StatisticsSet& S, int Q);

struct TroSolution {
  Matrix X;    // M x Q, X^T Gamma X = I
  double rho;  // optimal trace ratio
  int iterations;
  double gap;  // spectral gap of the final shifted pencil
};
TroSolution tro_solve(const StatisticsSet& S, int Q, double rho_tol = 1e-12, int max_iter = 200);

struct CcaSolution {
  Matrix X;              // M x Q, X^T R_yy X = I
  Matrix W;              // M x Q, W^T R_vv W = I
  Vector correlations;   // top-Q canonical correlations, descending
  double gap;            // gap of the squared-correlation pencil after Q
};
CcaSolution cca_solve(const StatisticsSet& S, int Q);

// First-order optimality report at X: least-squares multipliers over the active
// constraints, stationarity residual, and feasibility/complementarity summaries.
// Never throws.
KktReport kkt_residual(const SfoProblem& p, const VariableSet& X, const StatisticsSet& S,
                       double active_tol = 1e-8);

}  // namespace dasf
