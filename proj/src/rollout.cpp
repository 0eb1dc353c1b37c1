#include "rfggd/rollout.hpp"

#include "rfggd/csv.hpp"

#include <ostream>

namespace rfggd::rollout {

const char* to_string(Termination t) {
  switch (t) {
    case Termination::Completed: return "completed";
    case Termination::Infeasible: return "infeasible";
    case Termination::NumericalFailure: return "numerical_failure";
  }
  return "unknown";
}

bool RolloutTrace::any_degenerate() const {
  for (const auto& s : steps)
    for (auto f : s.flags)
      if (f == qp::Degeneracy::Degenerate) return true;
  return false;
}

std::vector<Vec> RolloutTrace::states() const {
  std::vector<Vec> out;
  out.reserve(steps.size() + 1);
  for (const auto& s : steps) out.push_back(s.state);
  out.push_back(final_state);
  return out;
}

RolloutTrace rollout(const plant::PlantModel& model, const Vec& x0, double t0, const ParamVector& theta,
                     Index horizon, RolloutOptions opts) {
  const plant::ModelDims dims = model.dims();
  require_dims(x0.size() == dims.state, "rollout: initial state has wrong size");
  if (horizon < 1) throw std::invalid_argument("rollout: horizon must be >= 1");
  if (!x0.allFinite()) throw std::invalid_argument("rollout: initial state is not finite");

  const Index n_theta = theta.size();
  const double dt = model.dt();
  RolloutTrace tr;
  tr.t0 = t0;
  tr.horizon = horizon;
  tr.theta = theta;
  tr.sensitivities = opts.sensitivities;
  tr.steps.reserve(static_cast<std::size_t>(horizon));

  Vec x = x0;
  Mat D = Mat::Zero(dims.state, n_theta);
  for (Index k = 0; k < horizon; ++k) {
    const double t = t0 + static_cast<double>(k) * dt;
    StepRecord rec;
    rec.time = t;
    rec.state = x;
    try {
      rec.qp = plant::build_qp(model, t, x, theta);
    } catch (const DomainError& e) {
      tr.termination = Termination::NumericalFailure;
      tr.error = e.what();
      break;
    }
    const qp::QpSolution sol = qp::solve(rec.qp.problem);
    if (sol.status == qp::QpStatus::Infeasible) {
      tr.termination = Termination::Infeasible;
      tr.failed_qp = std::move(rec.qp);
      break;
    }
    if (sol.status != qp::QpStatus::Optimal) {
      tr.termination = Termination::NumericalFailure;
      tr.error = "QP solve failed at step " + std::to_string(k + 1);
      break;
    }
    rec.decision = sol.z;
    rec.input = sol.z.head(dims.input);
    rec.margins = rec.qp.problem.margins(sol.z);
    rec.duals = sol.duals;
    rec.active_set = sol.active_set;
    rec.state_sens = D;

    const plant::StepResult nxt = model.step(t, x, rec.input);
    if (opts.sensitivities) {
      try {
        qp::JacobianResult jr = qp::solution_jacobian(rec.qp.problem, sol);
        const Mat dz_dx = jr.jacobian.apply_columns(rec.qp.gradients.wrt_state);
        const Mat dz_dtheta = jr.jacobian.apply_columns(rec.qp.gradients.wrt_params);
        rec.flags = std::move(jr.flags);
        rec.decision_sens = dz_dx * D + dz_dtheta;
      } catch (const SingularKkt& e) {
        tr.termination = Termination::NumericalFailure;
        tr.error = e.what();
        break;
      }
      rec.input_sens = rec.decision_sens.topRows(dims.input);
      D = nxt.jac_x * D + nxt.jac_u * rec.input_sens;
    }
    x = nxt.next;
    tr.steps.push_back(std::move(rec));
  }
  tr.final_state = x;
  tr.final_state_sens = D;
  tr.final_time = t0 + static_cast<double>(tr.steps.size()) * dt;
  return tr;
}

double objective(const RolloutTrace& trace, const plant::PlantModel& model) {
  double J = 0.0;
  for (const auto& s : trace.steps) J += model.reward(s.time, s.state, s.input).value;
  return J;
}

Vec grad_objective(const RolloutTrace& trace, const plant::PlantModel& model) {
  if (!trace.complete()) throw std::invalid_argument("grad_objective: trace is not feasible over its horizon");
  if (!trace.sensitivities) throw std::invalid_argument("grad_objective: trace has no sensitivities");
  Vec g = Vec::Zero(trace.theta.size());
  for (const auto& s : trace.steps) {
    const plant::RewardEval r = model.reward(s.time, s.state, s.input);
    g += s.state_sens.transpose() * r.grad_x + s.input_sens.transpose() * r.grad_u;
  }
  return g;
}

GradientBundle grad_margins(const RolloutTrace& trace) {
  if (!trace.sensitivities) throw std::invalid_argument("grad_margins: trace has no sensitivities");
  GradientBundle b;
  b.n_theta = trace.theta.size();
  for (const auto& s : trace.steps) {
    const Mat de_dx = s.qp.margin_state_jacobian(s.decision);
    const Mat direct = s.qp.margin_param_jacobian(s.decision);
    b.margin_values.push_back(s.margins);
    b.margin_grads.push_back(de_dx * s.state_sens + s.qp.problem.G * s.decision_sens + direct);
  }
  return b;
}

Vec frozen_margin_gradient(const plant::PolicyQp& qp, const Vec& z, Index row, const Mat& state_sens) {
  require_dims(row >= 0 && row < qp.n_rows(), "frozen_margin_gradient: row out of range");
  const Mat de_dx = qp.margin_state_jacobian(z);
  const Mat direct = qp.margin_param_jacobian(z);
  return (de_dx.row(row) * state_sens + direct.row(row)).transpose();
}

void write_trace_csv(std::ostream& os, const RolloutTrace& trace) {
  const Index n_x = trace.final_state.size();
  Index n_u = 0;
  Index m = 0;
  if (!trace.steps.empty()) {
    n_u = trace.steps.front().input.size();
    m = trace.steps.front().margins.size();
  } else if (trace.failed_qp) {
    n_u = trace.failed_qp->n_u;
    m = trace.failed_qp->n_rows();
  }
  csv::Writer w(os);
  std::vector<std::string> header{"step", "t"};
  for (Index i = 0; i < n_x; ++i) header.push_back("x" + std::to_string(i));
  for (Index i = 0; i < n_u; ++i) header.push_back("u" + std::to_string(i));
  for (Index i = 0; i < m; ++i) header.push_back("e" + std::to_string(i));
  header.push_back("status");
  w.header(header);
  Index k = 1;
  for (const auto& s : trace.steps) {
    w.field(k++).field(s.time).fields(s.state).fields(s.input).fields(s.margins).field("solved").end_row();
  }
  w.field(k).field(trace.final_time).fields(trace.final_state);
  for (Index i = 0; i < n_u + m; ++i) w.empty();
  w.field(trace.complete() ? "final" : to_string(trace.termination)).end_row();
}

}  // namespace rfggd::rollout
