#include "rfggd/plant.hpp"

#include <cmath>
#include <string>

namespace rfggd::plant {

Mat Dynamics::state_jacobian(const Vec& u) const {
  Mat jac = drift_jacobian;
  for (std::size_t k = 0; k < input_gain_jacobian.size(); ++k)
    jac.col(static_cast<Index>(k)) += input_gain_jacobian[k] * u;
  return jac;
}

ScalarField PlantModel::lyapunov(double, const Vec&) const {
  throw std::logic_error("PlantModel::lyapunov: model has no Lyapunov function");
}

StepResult PlantModel::step(double t, const Vec& x, const Vec& u) const {
  const ModelDims d = dims();
  require_dims(x.size() == d.state && u.size() == d.input, "step: state or input has wrong size");
  const Dynamics dyn = dynamics(t, x);
  return {dyn.next(u), dyn.state_jacobian(u), dyn.input_gain};
}

Mat PolicyQp::margin_state_jacobian(const Vec& z) const {
  const auto& ws = gradients.wrt_state;
  Mat out(n_rows(), static_cast<Index>(ws.size()));
  for (std::size_t k = 0; k < ws.size(); ++k) out.col(static_cast<Index>(k)) = ws[k].dG * z - ws[k].dw;
  return out;
}

Mat PolicyQp::margin_param_jacobian(const Vec& z) const {
  const auto& wp = gradients.wrt_params;
  Mat out(n_rows(), static_cast<Index>(wp.size()));
  for (std::size_t j = 0; j < wp.size(); ++j) out.col(static_cast<Index>(j)) = wp[j].dG * z - wp[j].dw;
  return out;
}

namespace {

void check_field(const ScalarField& s, Index n_x, const std::string& name) {
  require_dims(s.grad.size() == n_x && s.hessian.rows() == n_x && s.hessian.cols() == n_x &&
                   s.rate_grad.size() == n_x,
               name + ": derivative shapes do not match the state");
  if (!std::isfinite(s.value) || !std::isfinite(s.rate) || !s.grad.allFinite() || !s.hessian.allFinite() ||
      !s.rate_grad.allFinite())
    throw DomainError(name + ": non-finite value (state outside the modeled domain)");
}

// Fill row `row` of the QP and its state derivatives for a linearized
// constraint  sign * (grad'(x+ - x) + dt*rate) + coeff*value [+ delta] >= 0.
// For a barrier sign = +1, coeff = alpha; for the CLF sign = -1, coeff = -alpha_0.
void fill_row(PolicyQp& out, Index row, const ScalarField& fld, const Dynamics& dyn, const Vec& x, double dt,
              double sign, double coeff) {
  const Index n_x = x.size();
  const Index n_u = out.n_u;
  const Vec drift_step = dyn.drift - x;
  out.problem.G.row(row).head(n_u) = sign * (dyn.input_gain.transpose() * fld.grad).transpose();
  out.problem.w(row) = -(coeff * fld.value + sign * (fld.grad.dot(drift_step) + dt * fld.rate));

  for (Index k = 0; k < n_x; ++k) {
    auto& pert = out.gradients.wrt_state[static_cast<std::size_t>(k)];
    const Vec hess_col = fld.hessian.col(k);
    const Vec dgain = dyn.input_gain_jacobian[static_cast<std::size_t>(k)].transpose() * fld.grad +
                      dyn.input_gain.transpose() * hess_col;
    pert.dG.row(row).head(n_u) = sign * dgain.transpose();
    Vec ddrift = dyn.drift_jacobian.col(k);
    ddrift(k) -= 1.0;
    pert.dw(row) = -(coeff * fld.grad(k) +
                     sign * (hess_col.dot(drift_step) + fld.grad.dot(ddrift) + dt * fld.rate_grad(k)));
  }
}

}  // namespace

PolicyQp build_qp(const PlantModel& model, double t, const Vec& x, const ParamVector& theta) {
  const ModelDims d = model.dims();
  require_dims(x.size() == d.state, "build_qp: state has wrong size");
  require_dims(theta.cbf_rates.size() == d.barriers, "build_qp: need one rate per barrier");
  require_dims(theta.clf_rate.has_value() == d.has_lyapunov, "build_qp: CLF rate present iff model has a Lyapunov function");
  require_dims(!theta.nominal_input || theta.nominal_input->size() == d.input, "build_qp: nominal input has wrong size");
  if (!x.allFinite()) throw DomainError("build_qp: non-finite state");

  const double dt = model.dt();
  const QpWeights wts = model.weights();
  require_dims(wts.input_cost.rows() == d.input && wts.input_cost.cols() == d.input, "build_qp: P has wrong shape");

  PolicyQp out;
  out.n_u = d.input;
  out.n_barriers = d.barriers;
  out.has_clf = d.has_lyapunov;
  const Index n_z = d.input + (d.has_lyapunov ? 1 : 0);
  const Index m = d.barriers + (d.has_lyapunov ? 1 : 0);
  const Index n_theta = theta.size();

  auto& p = out.problem;
  p.H = Mat::Zero(n_z, n_z);
  p.H.topLeftCorner(d.input, d.input) = wts.input_cost + wts.input_cost.transpose();
  if (d.has_lyapunov) {
    if (!(wts.slack_weight > 0.0)) throw std::invalid_argument("build_qp: slack weight must be positive");
    p.H(d.input, d.input) = 2.0 * wts.slack_weight;
  }
  p.f = Vec::Zero(n_z);
  if (theta.nominal_input) p.f.head(d.input) = -(wts.input_cost + wts.input_cost.transpose()) * *theta.nominal_input;
  p.G = Mat::Zero(m, n_z);
  p.w = Vec::Zero(m);

  out.gradients.wrt_state.assign(static_cast<std::size_t>(d.state), qp::QpPerturbation::zero(n_z, m));
  out.gradients.wrt_params.assign(static_cast<std::size_t>(n_theta), qp::QpPerturbation::zero(n_z, m));

  const Dynamics dyn = model.dynamics(t, x);
  require_dims(dyn.drift.size() == d.state && dyn.input_gain.rows() == d.state && dyn.input_gain.cols() == d.input &&
                   static_cast<Index>(dyn.input_gain_jacobian.size()) == d.state,
               "build_qp: dynamics shapes do not match dims()");

  for (Index i = 0; i < d.barriers; ++i) {
    const ScalarField h = model.barrier(i, t, x);
    check_field(h, d.state, "barrier " + std::to_string(i));
    const double alpha = theta.cbf_rates(i);
    fill_row(out, i, h, dyn, x, dt, 1.0, alpha);
    out.gradients.wrt_params[static_cast<std::size_t>(theta.cbf_offset() + i)].dw(i) = -h.value;
  }
  if (d.has_lyapunov) {
    const Index row = d.barriers;
    const ScalarField V = model.lyapunov(t, x);
    check_field(V, d.state, "lyapunov");
    const double alpha0 = *theta.clf_rate;
    fill_row(out, row, V, dyn, x, dt, -1.0, -alpha0);
    p.G(row, d.input) = 1.0;
    out.gradients.wrt_params[static_cast<std::size_t>(theta.clf_index())].dw(row) = V.value;
  }
  if (theta.nominal_input) {
    const Mat twoP = wts.input_cost + wts.input_cost.transpose();
    for (Index j = 0; j < d.input; ++j)
      out.gradients.wrt_params[static_cast<std::size_t>(theta.nominal_offset() + j)].df.head(d.input) = -twoP.col(j);
  }
  return out;
}

ParamVector uniform_params(const PlantModel& model, double rate) {
  const ModelDims d = model.dims();
  ParamVector th;
  th.cbf_rates = Vec::Constant(d.barriers, rate);
  if (d.has_lyapunov) th.clf_rate = rate;
  return th;
}

}  // namespace rfggd::plant
