#pragma once

#include "rfggd/common.hpp"
#include "rfggd/qp.hpp"

#include <Eigen/LU>

#include <vector>

namespace rfggd::qp {

/// A perturbation of the QP data (dH, df, dG, dw). Empty matrices/vectors
/// stand for zero blocks.
struct QpPerturbation {
  Mat dH;
  Vec df;
  Mat dG;
  Vec dw;

  static QpPerturbation zero(Index n, Index m);
};

/// Per-constraint classification at a solution.
enum class Degeneracy { StrictlyActive, StrictlyInactive, Degenerate };

struct SolutionDerivative {
  Vec dz;
  Vec dlambda;  // full length m, zero on rows treated as inactive
};

/// Linear map from QP data perturbations to (dz, dlambda), obtained by
/// differentiating the KKT conditions on the strictly active rows. The
/// reduced KKT matrix is factorized once at construction.
class SolutionJacobian {
 public:
  SolutionJacobian(const QpProblem& p, const QpSolution& s, std::vector<Index> active);

  SolutionDerivative apply(const QpPerturbation& d) const;

  /// dz for each perturbation, stacked as columns.
  Mat apply_columns(const std::vector<QpPerturbation>& ds) const;

  const std::vector<Index>& active_rows() const { return active_; }
  Index n_vars() const { return n_; }
  Index n_cons() const { return m_; }
  bool regularized() const { return regularized_; }

 private:
  Index n_ = 0;
  Index m_ = 0;
  std::vector<Index> active_;
  Mat G_;
  Vec z_;
  Vec lambda_;
  Vec margins_;
  Eigen::FullPivLU<Mat> lu_;
  bool regularized_ = false;
};

struct JacobianResult {
  SolutionJacobian jacobian;
  std::vector<Degeneracy> flags;

  bool any_degenerate() const;
};

inline constexpr double kDiffActiveTol = 1e-7;
inline constexpr double kDiffDualTol = 1e-7;

/// Rows with |margin| <= tol_act and dual <= tol_dual are Degenerate and are
/// differentiated as inactive. Throws SingularKkt if the active rows are
/// linearly dependent and the regularized system is still singular.
JacobianResult solution_jacobian(const QpProblem& p, const QpSolution& s,
                                 double tol_act = kDiffActiveTol, double tol_dual = kDiffDualTol);

struct InputSensitivity {
  Mat du_dx;      // n_u x n_x
  Mat du_dtheta;  // n_u x n_theta
};

/// Compose the solution Jacobian with the structural gradients of the QP data
/// and keep the first n_u components of z (the control part).
InputSensitivity chain_to_inputs(const SolutionJacobian& J, const std::vector<QpPerturbation>& dP_dx,
                                 const std::vector<QpPerturbation>& dP_dtheta, Index n_u);

}  // namespace rfggd::qp
