#include "rfggd/rfggd.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace rfggd::update {

using rollout::RolloutTrace;

void RfggdConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw std::invalid_argument("learning_rate must be >= 0");
  if (!(trust_radius > 0.0)) throw std::invalid_argument("trust_radius must be > 0");
  if (!(regularization >= 0.0) || !std::isfinite(regularization))
    throw std::invalid_argument("regularization must be >= 0");
  if (max_case2_iters < 1) throw std::invalid_argument("max_case2_iters must be >= 1");
  if (max_backtracks < 0) throw std::invalid_argument("max_backtracks must be >= 0");
  if (lookahead < 1) throw std::invalid_argument("lookahead must be >= 1");
  if (!(box.rate_min > 0.0 && box.rate_min < box.rate_max))
    throw std::invalid_argument("parameter box must satisfy 0 < rate_min < rate_max");
}

double DirectionResult::min_predicted_margin() const {
  double lo = std::numeric_limits<double>::infinity();
  for (const auto& e : predicted_margins)
    if (e.size()) lo = std::min(lo, e.minCoeff());
  return lo;
}

const char* to_string(UpdateOutcome o) {
  switch (o) {
    case UpdateOutcome::Accepted: return "accepted";
    case UpdateOutcome::Stationary: return "stationary";
    case UpdateOutcome::BacktrackExhausted: return "backtrack_exhausted";
  }
  return "unknown";
}

const char* to_string(Case2Outcome o) {
  switch (o) {
    case Case2Outcome::AlreadyFeasible: return "already_feasible";
    case Case2Outcome::Extended: return "extended";
    case Case2Outcome::Stalled: return "stall_detected";
    case Case2Outcome::NumericalFailure: return "numerical_failure";
  }
  return "unknown";
}

DirectionResult feasible_direction(const rollout::GradientBundle& bundle, const Vec& ascent, const RfggdConfig& cfg) {
  const Index n = ascent.size();
  require_dims(n == bundle.n_theta || bundle.n_steps() == 0, "feasible_direction: ascent and bundle disagree on n_theta");

  DirectionResult out;
  out.d_theta = Vec::Zero(n);
  if (!ascent.isZero(0.0)) {
    // Rows with a vanishing gradient cannot be moved by d and are dropped;
    // their predicted margin equals the current one. The others are scaled
    // to unit norm: gradients of unstable closed loops span many decades.
    std::vector<std::pair<Vec, double>> rows;
    for (Index t = 0; t < bundle.n_steps(); ++t) {
      const Vec& e = bundle.margin_values[static_cast<std::size_t>(t)];
      const Mat& g = bundle.margin_grads[static_cast<std::size_t>(t)];
      for (Index i = 0; i < e.size(); ++i) {
        const double norm = g.row(i).norm();
        if (norm <= 1e-14) continue;
        rows.emplace_back(g.row(i).transpose() / norm, -std::max(e(i), 0.0) / norm);
      }
    }
    const bool boxed = std::isfinite(cfg.trust_radius);
    const Index m = static_cast<Index>(rows.size()) + (boxed ? 2 * n : 0);
    qp::QpProblem p;
    p.H = cfg.regularization * Mat::Identity(n, n);
    p.f = -ascent;
    p.G = Mat::Zero(m, n);
    p.w = Vec::Zero(m);
    Index r = 0;
    for (const auto& [g, w] : rows) {
      p.G.row(r) = g.transpose();
      p.w(r) = w;
      ++r;
    }
    if (boxed) {
      for (Index j = 0; j < n; ++j) {
        p.G(r, j) = 1.0;
        p.w(r++) = -cfg.trust_radius;
        p.G(r, j) = -1.0;
        p.w(r++) = -cfg.trust_radius;
      }
    }
    const qp::QpSolution sol = qp::solve(p, Vec::Zero(n));
    out.solver_status = sol.status;
    if (sol.status != qp::QpStatus::Optimal)
      throw NumericalFailure(std::string("feasible_direction: direction QP returned ") + qp::to_string(sol.status));
    out.d_theta = sol.z;
  }
  out.objective_projection = ascent.dot(out.d_theta);
  for (Index t = 0; t < bundle.n_steps(); ++t) {
    const auto ts = static_cast<std::size_t>(t);
    out.predicted_margins.push_back(bundle.margin_values[ts] + bundle.margin_grads[ts] * out.d_theta);
  }
  return out;
}

namespace {

ParamVector step_params(const ParamVector& theta, const Vec& d, double beta, const ParamBox& box) {
  return theta.with_values(theta.flatten() + beta * d).clipped(box);
}

FeasibleUpdate update_from_trace(const plant::PlantModel& model, const Vec& x0, double t0, RolloutTrace trace,
                                 Index horizon, const RfggdConfig& cfg) {
  if (!trace.complete()) throw std::invalid_argument("update_feasible: theta is not feasible over the horizon");
  FeasibleUpdate up;
  up.theta = trace.theta;
  up.objective_before = rollout::objective(trace, model);
  up.objective_after = up.objective_before;
  const Vec ascent = rollout::grad_objective(trace, model);
  up.direction = feasible_direction(rollout::grad_margins(trace), ascent, cfg);
  up.before = std::move(trace);

  const Vec& d = up.direction.d_theta;
  if (d.lpNorm<Eigen::Infinity>() <= 1e-12 || cfg.learning_rate == 0.0) {
    up.outcome = UpdateOutcome::Stationary;
    up.after = up.before;
    return up;
  }
  double beta = cfg.learning_rate;
  for (int k = 0; k <= cfg.max_backtracks; ++k, beta *= 0.5) {
    const ParamVector cand = step_params(up.before.theta, d, beta, cfg.box);
    RolloutTrace tr = rollout::rollout(model, x0, t0, cand, horizon);
    if (tr.complete()) {
      const double J = rollout::objective(tr, model);
      if (J >= up.objective_before) {
        up.theta = cand;
        up.after = std::move(tr);
        up.objective_after = J;
        up.step_size = beta;
        up.backtracks = k;
        up.outcome = UpdateOutcome::Accepted;
        return up;
      }
    }
  }
  up.outcome = UpdateOutcome::BacktrackExhausted;
  up.backtracks = cfg.max_backtracks + 1;
  up.after = up.before;
  return up;
}

// Lexicographic infeasibility merit: more feasible steps first, then a
// smaller relaxation at the first failing step.
struct Merit {
  Index steps = 0;
  double slack = 0.0;
};

Merit merit_of(const RolloutTrace& tr) {
  Merit m{tr.feasible_steps(), 0.0};
  if (tr.termination == rollout::Termination::Infeasible && tr.failed_qp)
    m.slack = qp::min_relaxation(tr.failed_qp->problem).max_slack();
  return m;
}

bool improves(const Merit& cand, const Merit& cur) {
  if (cand.steps != cur.steps) return cand.steps > cur.steps;
  return cand.slack < cur.slack;
}

}  // namespace

FeasibleUpdate update_feasible(const plant::PlantModel& model, const Vec& x0, double t0, const ParamVector& theta,
                               Index horizon, const RfggdConfig& cfg) {
  cfg.validate();
  return update_from_trace(model, x0, t0, rollout::rollout(model, x0, t0, theta, horizon), horizon, cfg);
}

Case2Step case2_step(const plant::PlantModel& model, const Vec& x0, double t0, const RolloutTrace& trace,
                     const RfggdConfig& cfg) {
  if (trace.termination != rollout::Termination::Infeasible || !trace.failed_qp)
    throw std::invalid_argument("case2_step: trace does not end in an infeasible QP");
  Case2Step out;
  out.theta = trace.theta;
  out.trace = trace;

  const plant::PolicyQp& failed = *trace.failed_qp;
  const qp::RelaxationReport rep = qp::min_relaxation(failed.problem);
  if (!rep.limiting_index) {
    // Numerically borderline: the relaxation finds the QP feasible.
    return out;
  }
  out.limiting_row = *rep.limiting_index;
  out.tied_rows = rep.tied_rows();
  out.ascent = Vec::Zero(trace.theta.size());
  for (Index row : out.tied_rows)
    out.ascent += rollout::frozen_margin_gradient(failed, rep.relaxed_solution, row, trace.final_state_sens);

  out.direction = feasible_direction(rollout::grad_margins(trace), out.ascent, cfg);
  const Vec& d = out.direction.d_theta;
  if (d.lpNorm<Eigen::Infinity>() <= 1e-12 || cfg.learning_rate == 0.0) return out;

  const Merit current{trace.feasible_steps(), rep.max_slack()};
  double beta = cfg.learning_rate;
  for (int k = 0; k <= cfg.max_backtracks; ++k, beta *= 0.5) {
    const ParamVector cand = step_params(trace.theta, d, beta, cfg.box);
    RolloutTrace tr = rollout::rollout(model, x0, t0, cand, trace.horizon);
    if (tr.termination == rollout::Termination::NumericalFailure) continue;
    if (improves(merit_of(tr), current)) {
      out.theta = cand;
      out.trace = std::move(tr);
      out.accepted = true;
      return out;
    }
  }
  return out;
}

InfeasibleUpdate update_infeasible(const plant::PlantModel& model, const Vec& x0, double t0, const ParamVector& theta,
                                   const RfggdConfig& cfg) {
  cfg.validate();
  InfeasibleUpdate up;
  up.theta = theta;
  RolloutTrace tr = rollout::rollout(model, x0, t0, theta, cfg.lookahead);
  up.initial_feasible_steps = tr.feasible_steps();
  if (tr.complete()) {
    up.outcome = Case2Outcome::AlreadyFeasible;
    return up;
  }
  if (tr.termination == rollout::Termination::NumericalFailure) {
    up.outcome = Case2Outcome::NumericalFailure;
    up.error = tr.error;
    return up;
  }
  up.outcome = Case2Outcome::Stalled;
  for (int it = 0; it < cfg.max_case2_iters; ++it) {
    Case2Step st;
    try {
      st = case2_step(model, x0, t0, tr, cfg);
    } catch (const NumericalFailure& e) {
      up.outcome = Case2Outcome::NumericalFailure;
      up.error = e.what();
      return up;
    }
    ++up.iterations;
    tr = std::move(st.trace);
    up.theta = tr.theta;
    up.feasibility_history.push_back(tr.feasible_steps());
    up.iterates.push_back(up.theta);
    if (tr.feasible_steps() > up.initial_feasible_steps) {
      up.outcome = Case2Outcome::Extended;
      return up;
    }
  }
  return up;
}

double OnlineResult::total_objective() const {
  double J = 0.0;
  for (const auto& s : steps) J += s.horizon_objective;
  return J;
}

double OnlineResult::min_barrier() const {
  double lo = std::numeric_limits<double>::infinity();
  for (const auto& s : steps)
    if (s.barriers.size()) lo = std::min(lo, s.barriers.minCoeff());
  return lo;
}

OnlineResult online_adapt(const plant::PlantModel& model, const Vec& x0, const ParamVector& theta0, Index sim_steps,
                          const RfggdConfig& cfg) {
  cfg.validate();
  const plant::ModelDims dims = model.dims();
  const double dt = model.dt();
  OnlineResult res;
  Vec x = x0;
  ParamVector theta = theta0;
  for (Index k = 0; k < sim_steps; ++k) {
    const double t = static_cast<double>(k) * dt;
    OnlineStep st;
    st.time = t;
    st.state = x;
    if (cfg.learning_rate > 0.0) {
      try {
        RolloutTrace tr = rollout::rollout(model, x, t, theta, cfg.lookahead);
        if (tr.complete()) {
          FeasibleUpdate up = update_from_trace(model, x, t, std::move(tr), cfg.lookahead, cfg);
          theta = up.theta;
          st.annotation = to_string(up.outcome);
        } else if (tr.termination == rollout::Termination::Infeasible) {
          InfeasibleUpdate up = update_infeasible(model, x, t, theta, cfg);
          theta = up.theta;
          st.annotation = to_string(up.outcome);
        } else {
          st.annotation = "numerical_failure";
        }
      } catch (const NumericalFailure& e) {
        st.annotation = "numerical_failure";
      }
    }
    st.theta = theta;

    const RolloutTrace look = rollout::rollout(model, x, t, theta, cfg.lookahead, {.sensitivities = false});
    st.horizon_objective = rollout::objective(look, model);
    st.lookahead_feasible = look.feasible_steps();

    st.barriers = Vec(dims.barriers);
    for (Index i = 0; i < dims.barriers; ++i) st.barriers(i) = model.barrier(i, t, x).value;

    const plant::PolicyQp pq = plant::build_qp(model, t, x, theta);
    const qp::QpSolution sol = qp::solve(pq.problem);
    if (sol.optimal()) {
      st.input = sol.z.head(dims.input);
    } else {
      // No admissible control: apply the least-violating one and flag it.
      st.qp_feasible = false;
      st.input = qp::min_relaxation(pq.problem).relaxed_solution.head(dims.input);
      st.annotation += st.annotation.empty() ? "qp_infeasible" : ";qp_infeasible";
    }
    x = model.step(t, x, st.input).next;
    res.steps.push_back(std::move(st));
  }
  res.final_state = x;
  res.final_time = static_cast<double>(sim_steps) * dt;
  return res;
}

}  // namespace rfggd::update
