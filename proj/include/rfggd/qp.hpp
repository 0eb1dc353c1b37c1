#pragma once

#include "rfggd/common.hpp"

#include <optional>
#include <vector>

namespace rfggd::qp {

/// Dense convex QP
///
///   minimize    1/2 z'Hz + f'z
///   subject to  G z >= w
///
/// Every constraint row is read as a margin e = G z - w that is satisfied when
/// nonnegative. H must be symmetric positive semidefinite; the solver adds a
/// small multiple of the identity so the working-set systems stay regular.
struct QpProblem {
  Mat H;
  Vec f;
  Mat G;
  Vec w;

  Index n_vars() const { return f.size(); }
  Index n_cons() const { return w.size(); }

  Vec margins(const Vec& z) const;
  double objective(const Vec& z) const;
};

/// Throws DimensionError on shape mismatch and std::invalid_argument when H
/// is not symmetric PSD or an entry is not finite.
void validate(const QpProblem& p);

enum class QpStatus { Optimal, Infeasible, NumericalFailure };

const char* to_string(QpStatus s);

struct QpSolution {
  QpStatus status = QpStatus::NumericalFailure;
  Vec z;
  Vec duals;                       // one multiplier per row, >= 0
  std::vector<Index> active_set;   // margin <= kActiveTol and dual > kDualTol
  double objective = 0.0;
  int iterations = 0;

  bool optimal() const { return status == QpStatus::Optimal; }
};

struct RelaxationReport {
  Vec slacks;                          // s >= 0 with G z + s >= w
  std::optional<Index> limiting_index; // argmax of slacks, none if feasible
  Vec relaxed_solution;

  double max_slack() const;
  /// Rows whose slack is within kTieTol of the largest one (empty if feasible).
  std::vector<Index> tied_rows() const;
};

struct KktResiduals {
  double stationarity = 0.0;     // ||Hz + f - G'lambda||_inf
  double primal = 0.0;           // max(0, -min margin)
  double complementarity = 0.0;  // max |lambda_i * margin_i|
  double dual = 0.0;             // max(0, -min lambda)
};

inline constexpr double kFeasTol = 1e-8;
inline constexpr double kActiveTol = 1e-7;
inline constexpr double kDualTol = 1e-7;
inline constexpr double kRegularization = 1e-9;
inline constexpr double kTieTol = 1e-9;

/// Primal active-set solve preceded by a slack-minimization phase 1 that
/// decides feasibility. `tol` bounds the admissible margin violation.
QpSolution solve(const QpProblem& p, double tol = kFeasTol);

/// Same, but starts the active-set phase from `start` when its margins are
/// all >= -tol (phase 1 is skipped); otherwise falls back to solve(p, tol).
QpSolution solve(const QpProblem& p, const Vec& start, double tol = kFeasTol);

/// Minimal sum-of-squares slack relaxation of the constraints.
/// Throws NumericalFailure if the inner solve breaks down.
RelaxationReport min_relaxation(const QpProblem& p, double tol = kFeasTol);

KktResiduals kkt_residuals(const QpProblem& p, const QpSolution& s);

/// Stationarity bound used for the Optimal postcondition.
double stationarity_bound(const QpProblem& p);

}  // namespace rfggd::qp
