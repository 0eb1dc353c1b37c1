#include "rfggd/qp_diff.hpp"

#include <cmath>

namespace rfggd::qp {

QpPerturbation QpPerturbation::zero(Index n, Index m) {
  return {Mat::Zero(n, n), Vec::Zero(n), Mat::Zero(m, n), Vec::Zero(m)};
}

bool JacobianResult::any_degenerate() const {
  for (Degeneracy d : flags)
    if (d == Degeneracy::Degenerate) return true;
  return false;
}

SolutionJacobian::SolutionJacobian(const QpProblem& p, const QpSolution& s, std::vector<Index> active)
    : n_(p.n_vars()), m_(p.n_cons()), active_(std::move(active)), G_(p.G), z_(s.z), lambda_(s.duals) {
  margins_ = m_ ? p.margins(z_) : Vec();
  const Index k = static_cast<Index>(active_.size());
  // Differentiated KKT system on the active rows A:
  //   [ H              -G_A'          ] [dz ]
  //   [ diag(l_A) G_A   diag(e_A)     ] [dl_A]
  Mat kkt = Mat::Zero(n_ + k, n_ + k);
  kkt.topLeftCorner(n_, n_) = 0.5 * (p.H + p.H.transpose()) + kRegularization * Mat::Identity(n_, n_);
  for (Index j = 0; j < k; ++j) {
    const Index i = active_[static_cast<std::size_t>(j)];
    kkt.block(0, n_ + j, n_, 1) = -G_.row(i).transpose();
    kkt.block(n_ + j, 0, 1, n_) = lambda_(i) * G_.row(i);
    kkt(n_ + j, n_ + j) = margins_(i);
  }
  lu_.compute(kkt);
  if (!lu_.isInvertible()) {
    // Linearly dependent active gradients: perturb the complementarity block.
    double lam_scale = 1.0;
    for (Index i : active_) lam_scale = std::max(lam_scale, std::abs(lambda_(i)));
    for (Index j = 0; j < k; ++j) kkt(n_ + j, n_ + j) -= 1e-10 * lam_scale;
    lu_.compute(kkt);
    regularized_ = true;
    if (!lu_.isInvertible()) throw SingularKkt("solution_jacobian: reduced KKT system is singular");
  }
}

SolutionDerivative SolutionJacobian::apply(const QpPerturbation& d) const {
  const Index k = static_cast<Index>(active_.size());
  Vec rhs = Vec::Zero(n_ + k);
  if (d.dH.size()) {
    require_dims(d.dH.rows() == n_ && d.dH.cols() == n_, "perturbation dH has wrong shape");
    rhs.head(n_) -= 0.5 * (d.dH + d.dH.transpose()) * z_;
  }
  if (d.df.size()) {
    require_dims(d.df.size() == n_, "perturbation df has wrong size");
    rhs.head(n_) -= d.df;
  }
  const bool has_dG = d.dG.size() > 0;
  const bool has_dw = d.dw.size() > 0;
  if (has_dG) require_dims(d.dG.rows() == m_ && d.dG.cols() == n_, "perturbation dG has wrong shape");
  if (has_dw) require_dims(d.dw.size() == m_, "perturbation dw has wrong size");
  for (Index j = 0; j < k; ++j) {
    const Index i = active_[static_cast<std::size_t>(j)];
    double row_change = 0.0;  // dG_i z - dw_i
    if (has_dG) {
      rhs.head(n_) += lambda_(i) * d.dG.row(i).transpose();
      row_change += d.dG.row(i).dot(z_);
    }
    if (has_dw) row_change -= d.dw(i);
    rhs(n_ + j) = -lambda_(i) * row_change;
  }
  const Vec sol = lu_.solve(rhs);
  SolutionDerivative out;
  out.dz = sol.head(n_);
  out.dlambda = Vec::Zero(m_);
  for (Index j = 0; j < k; ++j) out.dlambda(active_[static_cast<std::size_t>(j)]) = sol(n_ + j);
  return out;
}

Mat SolutionJacobian::apply_columns(const std::vector<QpPerturbation>& ds) const {
  Mat out(n_, static_cast<Index>(ds.size()));
  for (std::size_t c = 0; c < ds.size(); ++c) out.col(static_cast<Index>(c)) = apply(ds[c]).dz;
  return out;
}

JacobianResult solution_jacobian(const QpProblem& p, const QpSolution& s, double tol_act, double tol_dual) {
  if (!s.optimal()) throw std::invalid_argument("solution_jacobian: solution is not optimal");
  require_dims(s.z.size() == p.n_vars() && s.duals.size() == p.n_cons(), "solution does not match problem");
  const Index m = p.n_cons();
  std::vector<Degeneracy> flags(static_cast<std::size_t>(m), Degeneracy::StrictlyInactive);
  std::vector<Index> active;
  if (m > 0) {
    const Vec e = p.margins(s.z);
    for (Index i = 0; i < m; ++i) {
      const bool tight = std::abs(e(i)) <= tol_act;
      const bool positive_dual = s.duals(i) > tol_dual;
      if (tight && positive_dual) {
        flags[static_cast<std::size_t>(i)] = Degeneracy::StrictlyActive;
        active.push_back(i);
      } else if (tight) {
        flags[static_cast<std::size_t>(i)] = Degeneracy::Degenerate;
      } else if (positive_dual) {
        // Positive multiplier on a slack row can only be round-off; keep the
        // row in the active system so the derivative stays consistent.
        flags[static_cast<std::size_t>(i)] = Degeneracy::StrictlyActive;
        active.push_back(i);
      }
    }
  }
  return {SolutionJacobian(p, s, std::move(active)), std::move(flags)};
}

InputSensitivity chain_to_inputs(const SolutionJacobian& J, const std::vector<QpPerturbation>& dP_dx,
                                 const std::vector<QpPerturbation>& dP_dtheta, Index n_u) {
  require_dims(n_u >= 0 && n_u <= J.n_vars(), "chain_to_inputs: n_u exceeds decision size");
  InputSensitivity out;
  out.du_dx = J.apply_columns(dP_dx).topRows(n_u);
  out.du_dtheta = J.apply_columns(dP_dtheta).topRows(n_u);
  return out;
}

}  // namespace rfggd::qp
