#include "rfggd/qp.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rfggd::qp {

namespace {

// Weight of the proximal term that keeps the phase-1 Hessian regular.
constexpr double kProxWeight = 1e-8;
constexpr int kMaxProxRounds = 40;

int iteration_cap(Index n, Index m) { return static_cast<int>(20 * (n + m) + 100); }

struct EqpStep {
  bool ok = false;
  Vec step;
  Vec multipliers;  // one per working-set entry
};

// Equality-constrained subproblem on the working set W:
//   [H  -G_W'] [p]   [-(Hz + f)   ]
//   [G_W  0  ] [mu] = [w_W - G_W z ]
// The second block also repairs small residual violations of working rows.
EqpStep solve_eqp(const Mat& H, const Vec& grad, const Mat& G, const Vec& w, const Vec& z,
                  const std::vector<Index>& work) {
  const Index n = H.rows();
  const Index k = static_cast<Index>(work.size());
  Mat kkt = Mat::Zero(n + k, n + k);
  Vec rhs(n + k);
  kkt.topLeftCorner(n, n) = H;
  rhs.head(n) = -grad;
  for (Index j = 0; j < k; ++j) {
    const Index i = work[static_cast<std::size_t>(j)];
    kkt.block(0, n + j, n, 1) = -G.row(i).transpose();
    kkt.block(n + j, 0, 1, n) = G.row(i);
    rhs(n + j) = w(i) - G.row(i).dot(z);
  }
  Eigen::FullPivLU<Mat> lu(kkt);
  EqpStep out;
  if (!lu.isInvertible()) return out;
  const Vec sol = lu.solve(rhs);
  if (!sol.allFinite()) return out;
  out.ok = true;
  out.step = sol.head(n);
  out.multipliers = sol.tail(k);
  return out;
}

struct ActiveSetResult {
  bool ok = false;
  Vec z;
  Vec duals;  // full length m
  std::vector<Index> work;
  int iterations = 0;
};

// Primal active-set method for a strictly convex QP started from a point
// whose margins are nonnegative up to round-off.
ActiveSetResult primal_active_set(const Mat& H, const Vec& f, const Mat& G, const Vec& w, Vec z,
                                  std::vector<Index> work, int max_iter) {
  const Index m = G.rows();
  std::vector<char> in_work(static_cast<std::size_t>(m), 0);
  for (Index i : work) in_work[static_cast<std::size_t>(i)] = 1;

  ActiveSetResult res;
  for (int iter = 0; iter < max_iter; ++iter) {
    res.iterations = iter + 1;
    const Vec grad = H * z + f;
    const EqpStep eqp = solve_eqp(H, grad, G, w, z, work);
    if (!eqp.ok) return res;

    const Vec& p = eqp.step;
    const double scale = 1.0 + z.lpNorm<Eigen::Infinity>();
    if (p.lpNorm<Eigen::Infinity>() <= 1e-12 * scale) {
      z += p;
      const double tau = 1e-12 * (1.0 + (eqp.multipliers.size() ? eqp.multipliers.lpNorm<Eigen::Infinity>() : 0.0));
      Index drop = -1;
      double most_negative = -tau;
      for (Index j = 0; j < eqp.multipliers.size(); ++j) {
        if (eqp.multipliers(j) < most_negative) {
          most_negative = eqp.multipliers(j);
          drop = j;
        }
      }
      if (drop < 0) {
        res.ok = true;
        res.z = std::move(z);
        res.duals = Vec::Zero(m);
        for (std::size_t j = 0; j < work.size(); ++j)
          res.duals(work[j]) = std::max(0.0, eqp.multipliers(static_cast<Index>(j)));
        res.work = std::move(work);
        return res;
      }
      in_work[static_cast<std::size_t>(work[static_cast<std::size_t>(drop)])] = 0;
      work.erase(work.begin() + drop);
      continue;
    }

    double alpha = 1.0;
    Index blocking = -1;
    const double pnorm = p.norm();
    for (Index i = 0; i < m; ++i) {
      if (in_work[static_cast<std::size_t>(i)]) continue;
      const double gp = G.row(i).dot(p);
      if (gp >= -1e-14 * G.row(i).norm() * pnorm) continue;
      const double margin = G.row(i).dot(z) - w(i);
      const double a = std::max(0.0, margin) / -gp;
      if (a < alpha) {
        alpha = a;
        blocking = i;
      }
    }
    z += alpha * p;
    if (blocking >= 0) {
      work.push_back(blocking);
      in_work[static_cast<std::size_t>(blocking)] = 1;
    }
  }
  return res;
}

struct PhaseOne {
  Vec z;
  Vec slacks;
  int iterations = 0;
};

// min 1/2 |s|^2 + prox/2 |z - z_ref|^2  s.t.  G z + s >= w, repeated with
// z_ref <- z until the slacks drop below stop_tol or z stops moving. The
// proximal rounds remove the bias the regularizer puts on the slacks.
PhaseOne minimize_slacks(const QpProblem& p, double stop_tol) {
  const Index n = p.n_vars();
  const Index m = p.n_cons();
  PhaseOne out;
  out.z = Vec::Zero(n);
  out.slacks = Vec::Zero(m);
  if (m == 0) return out;

  Mat H1 = Mat::Zero(n + m, n + m);
  H1.topLeftCorner(n, n).diagonal().setConstant(kProxWeight);
  H1.bottomRightCorner(m, m).diagonal().setOnes();
  Mat G1(m, n + m);
  G1.leftCols(n) = p.G;
  G1.rightCols(m) = Mat::Identity(m, m);

  Vec y(n + m);
  y.head(n).setZero();
  y.tail(m) = (p.w - p.G * y.head(n)).cwiseMax(0.0);
  Vec z_ref = y.head(n);
  std::vector<Index> work;
  Vec f1 = Vec::Zero(n + m);

  for (int round = 0; round < kMaxProxRounds; ++round) {
    f1.head(n) = -kProxWeight * z_ref;
    ActiveSetResult r = primal_active_set(H1, f1, G1, p.w, y, work, iteration_cap(n + m, m));
    out.iterations += r.iterations;
    if (!r.ok) throw NumericalFailure("phase-1 slack minimization did not converge");
    y = r.z;
    work = std::move(r.work);
    // Recompute the slacks from z so they are consistent with it exactly.
    const Vec z = y.head(n);
    const Vec s = (p.w - p.G * z).cwiseMax(0.0);
    out.z = z;
    out.slacks = s;
    if (s.maxCoeff() <= stop_tol) break;
    if ((z - z_ref).lpNorm<Eigen::Infinity>() <= 1e-13 * (1.0 + z.lpNorm<Eigen::Infinity>())) break;
    z_ref = z;
  }
  return out;
}

}  // namespace

Vec QpProblem::margins(const Vec& z) const { return G * z - w; }

double QpProblem::objective(const Vec& z) const { return 0.5 * z.dot(H * z) + f.dot(z); }

const char* to_string(QpStatus s) {
  switch (s) {
    case QpStatus::Optimal: return "optimal";
    case QpStatus::Infeasible: return "infeasible";
    case QpStatus::NumericalFailure: return "numerical_failure";
  }
  return "unknown";
}

void validate(const QpProblem& p) {
  const Index n = p.f.size();
  const Index m = p.w.size();
  require_dims(p.H.rows() == n && p.H.cols() == n, "QpProblem: H must be n x n");
  require_dims(p.G.rows() == m && (m == 0 || p.G.cols() == n), "QpProblem: G must be m x n");
  if (!p.H.allFinite() || !p.f.allFinite() || !p.G.allFinite() || !p.w.allFinite())
    throw std::invalid_argument("QpProblem: non-finite entry");
  if (n == 0) return;
  if ((p.H - p.H.transpose()).cwiseAbs().maxCoeff() > 1e-12)
    throw std::invalid_argument("QpProblem: H is not symmetric");
  const Mat sym = 0.5 * (p.H + p.H.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> eig(sym, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() < -1e-10)
    throw std::invalid_argument("QpProblem: H is not positive semidefinite");
}

double RelaxationReport::max_slack() const { return slacks.size() ? slacks.maxCoeff() : 0.0; }

std::vector<Index> RelaxationReport::tied_rows() const {
  std::vector<Index> rows;
  if (!limiting_index) return rows;
  const double top = max_slack();
  for (Index i = 0; i < slacks.size(); ++i)
    if (slacks(i) >= top - kTieTol) rows.push_back(i);
  return rows;
}

double stationarity_bound(const QpProblem& p) {
  return 1e-6 * (1.0 + (p.f.size() ? p.f.lpNorm<Eigen::Infinity>() : 0.0));
}

KktResiduals kkt_residuals(const QpProblem& p, const QpSolution& s) {
  KktResiduals r;
  Vec station = p.H * s.z + p.f;
  if (p.n_cons() > 0) station -= p.G.transpose() * s.duals;
  r.stationarity = p.n_vars() ? station.lpNorm<Eigen::Infinity>() : 0.0;
  if (p.n_cons() > 0) {
    const Vec e = p.margins(s.z);
    r.primal = std::max(0.0, -e.minCoeff());
    r.complementarity = e.cwiseProduct(s.duals).cwiseAbs().maxCoeff();
    r.dual = std::max(0.0, -s.duals.minCoeff());
  }
  return r;
}

namespace {

QpSolution finish_solve(const QpProblem& p, const Vec& start, double tol, int phase_one_iters) {
  const Index n = p.n_vars();
  const Index m = p.n_cons();
  const Mat Hr = p.H + kRegularization * Mat::Identity(n, n);
  QpSolution sol;
  sol.duals = Vec::Zero(m);
  sol.iterations = phase_one_iters;

  ActiveSetResult r = primal_active_set(Hr, p.f, p.G, p.w, start, {}, iteration_cap(n, m));
  sol.iterations += r.iterations;
  if (!r.ok) {
    sol.z = start;
    return sol;
  }
  sol.z = std::move(r.z);
  sol.duals = std::move(r.duals);
  sol.objective = p.objective(sol.z);

  const KktResiduals kkt = kkt_residuals(p, sol);
  if (kkt.stationarity > stationarity_bound(p) || kkt.primal > tol || kkt.complementarity > 1e-6 ||
      !sol.z.allFinite()) {
    sol.status = QpStatus::NumericalFailure;
    return sol;
  }
  if (m > 0) {
    const Vec e = p.margins(sol.z);
    for (Index i = 0; i < m; ++i)
      if (e(i) <= kActiveTol && sol.duals(i) > kDualTol) sol.active_set.push_back(i);
  }
  sol.status = QpStatus::Optimal;
  return sol;
}

}  // namespace

QpSolution solve(const QpProblem& p, double tol) {
  validate(p);
  if (!(tol > 0.0)) throw std::invalid_argument("solve: tol must be positive");
  QpSolution sol;
  PhaseOne start;
  try {
    start = minimize_slacks(p, 0.1 * tol);
  } catch (const NumericalFailure&) {
    sol.z = Vec::Zero(p.n_vars());
    sol.duals = Vec::Zero(p.n_cons());
    return sol;
  }
  if (p.n_cons() > 0 && start.slacks.maxCoeff() > tol) {
    sol.status = QpStatus::Infeasible;
    sol.z = start.z;
    sol.duals = Vec::Zero(p.n_cons());
    sol.objective = p.objective(sol.z);
    sol.iterations = start.iterations;
    return sol;
  }
  return finish_solve(p, start.z, tol, start.iterations);
}

QpSolution solve(const QpProblem& p, const Vec& start, double tol) {
  validate(p);
  if (!(tol > 0.0)) throw std::invalid_argument("solve: tol must be positive");
  require_dims(start.size() == p.n_vars(), "solve: start point has wrong size");
  if (p.n_cons() > 0 && p.margins(start).minCoeff() < -tol) return solve(p, tol);
  return finish_solve(p, start, tol, 0);
}

RelaxationReport min_relaxation(const QpProblem& p, double tol) {
  validate(p);
  const PhaseOne ph = minimize_slacks(p, 0.0);
  RelaxationReport rep;
  rep.relaxed_solution = ph.z;
  rep.slacks = ph.slacks;
  if (p.n_cons() == 0 || ph.slacks.maxCoeff() <= tol) {
    rep.slacks.setZero();
    return rep;
  }
  const double top = ph.slacks.maxCoeff();
  for (Index i = 0; i < ph.slacks.size(); ++i) {
    if (ph.slacks(i) >= top - kTieTol) {
      rep.limiting_index = i;
      break;
    }
  }
  return rep;
}

}  // namespace rfggd::qp
