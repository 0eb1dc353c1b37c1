#pragma once

#include "rfggd/common.hpp"
#include "rfggd/params.hpp"
#include "rfggd/qp.hpp"
#include "rfggd/qp_diff.hpp"

#include <vector>

namespace rfggd::plant {

struct ModelDims {
  Index state = 0;
  Index input = 0;
  Index barriers = 0;
  bool has_lyapunov = false;
};

/// Control-affine one-step map x+ = drift + input_gain * u at (t, x), with
/// the state derivatives needed to differentiate the policy QP in x.
struct Dynamics {
  Vec drift;                             // f_d(t, x)
  Mat input_gain;                        // g_d(t, x), n_x x n_u
  Mat drift_jacobian;                    // d f_d / dx
  std::vector<Mat> input_gain_jacobian;  // d g_d / dx_k, one per state component

  Vec next(const Vec& u) const { return drift + input_gain * u; }
  /// d x+ / d x at input u.
  Mat state_jacobian(const Vec& u) const;
};

/// A time-varying scalar function of the state (barrier or Lyapunov), with
/// everything the linearized QP rows and their state derivatives need.
struct ScalarField {
  double value = 0.0;
  Vec grad;            // d/dx
  double rate = 0.0;   // d/dt (seconds)
  Mat hessian;         // d2/dx2
  Vec rate_grad;       // d/dx of d/dt
};

struct RewardEval {
  double value = 0.0;
  Vec grad_x;
  Vec grad_u;
};

struct QpWeights {
  Mat input_cost;            // P, positive definite
  double slack_weight = 0.0; // Q (or d), used when a Lyapunov row exists
};

struct StepResult {
  Vec next;
  Mat jac_x;
  Mat jac_u;
};

/// Discrete-time control-affine plant with barriers, an optional Lyapunov
/// function and a stage reward. Time `t` is in seconds; one step advances it
/// by dt(). Implementations are immutable after construction.
class PlantModel {
 public:
  virtual ~PlantModel() = default;

  virtual ModelDims dims() const = 0;
  virtual double dt() const = 0;
  virtual Dynamics dynamics(double t, const Vec& x) const = 0;
  virtual ScalarField barrier(Index i, double t, const Vec& x) const = 0;
  /// Only called when dims().has_lyapunov.
  virtual ScalarField lyapunov(double t, const Vec& x) const;
  virtual RewardEval reward(double t, const Vec& x, const Vec& u) const = 0;
  virtual QpWeights weights() const = 0;

  StepResult step(double t, const Vec& x, const Vec& u) const;
};

/// d(H, f, G, w) / dx_k and d(H, f, G, w) / dtheta_j at the point the QP was
/// built, one perturbation per component.
struct StructuralGradients {
  std::vector<qp::QpPerturbation> wrt_state;
  std::vector<qp::QpPerturbation> wrt_params;
};

/// The per-step policy QP. Decision z = (u, delta) when a Lyapunov row is
/// present, z = u otherwise. Rows: one per barrier, then the CLF row.
struct PolicyQp {
  qp::QpProblem problem;
  StructuralGradients gradients;
  Index n_u = 0;
  Index n_barriers = 0;
  bool has_clf = false;

  Index n_decision() const { return problem.n_vars(); }
  Index n_rows() const { return problem.n_cons(); }

  /// d e / dx at fixed decision z (n_rows x n_x).
  Mat margin_state_jacobian(const Vec& z) const;
  /// Direct d e / dtheta at fixed z and x (n_rows x n_theta).
  Mat margin_param_jacobian(const Vec& z) const;
};

/// Assemble the CBF-CLF QP at (t, x, theta).
///   cost:      (u - u_d)' P (u - u_d) + Q delta^2
///   barrier i: h + grad_h'(x+ - x) + dt dh/dt - (1 - alpha_i) h >= 0
///   CLF:      -(V + grad_V'(x+ - x) + dt dV/dt) + (1 - alpha_0) V + delta >= 0
/// with x+ = f_d + g_d u. Throws DimensionError or DomainError.
PolicyQp build_qp(const PlantModel& model, double t, const Vec& x, const ParamVector& theta);

/// Parameter vector shaped for `model`: one rate per barrier, a CLF rate when
/// the model has a Lyapunov function, no nominal input.
ParamVector uniform_params(const PlantModel& model, double rate);

}  // namespace rfggd::plant
