#pragma once

#include "rfggd/plant.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace rfggd::rollout {

enum class Termination {
  Completed,         // every QP in the horizon was solved
  Infeasible,        // QP at step feasible_steps + 1 has no solution
  NumericalFailure,  // inner solve or differentiation broke down
};

const char* to_string(Termination t);

/// One solved step of the closed loop.
struct StepRecord {
  double time = 0.0;
  Vec state;                 // x_t
  Vec decision;              // z_t = (u_t [, delta_t])
  Vec input;                 // u_t
  Vec margins;               // e_t = G z - w, one entry per QP row
  Vec duals;
  std::vector<Index> active_set;
  std::vector<qp::Degeneracy> flags;
  Mat state_sens;            // D_t = dx_t / dtheta
  Mat decision_sens;         // dz_t / dtheta (total)
  Mat input_sens;            // du_t / dtheta (total)
  plant::PolicyQp qp;        // problem and its structural gradients
};

/// Closed-loop trajectory under a fixed parameter vector.
struct RolloutTrace {
  double t0 = 0.0;
  Index horizon = 0;
  ParamVector theta;
  std::vector<StepRecord> steps;  // steps 1..K
  Vec final_state;                // x_{K+1}
  Mat final_state_sens;           // D_{K+1}
  double final_time = 0.0;        // time of x_{K+1}
  Termination termination = Termination::Completed;
  /// The QP that failed at step K+1 (Infeasible termination only).
  std::optional<plant::PolicyQp> failed_qp;
  std::string error;
  bool sensitivities = true;

  Index feasible_steps() const { return static_cast<Index>(steps.size()); }
  bool complete() const { return termination == Termination::Completed; }
  bool any_degenerate() const;
  /// States x_1 .. x_{K+1}.
  std::vector<Vec> states() const;
};

struct RolloutOptions {
  bool sensitivities = true;
};

/// Roll the QP policy forward from (x0, t0) for up to `horizon` steps and
/// propagate
///   du_t/dtheta = du/dx D_t + du/dtheta,   D_{t+1} = A_t D_t + B_t du_t/dtheta,
/// with D_1 = 0. Stops at the first infeasible QP.
RolloutTrace rollout(const plant::PlantModel& model, const Vec& x0, double t0, const ParamVector& theta,
                     Index horizon, RolloutOptions opts = {});

/// Sum of stage rewards R(t, x_t, u_t) over the solved steps.
double objective(const RolloutTrace& trace, const plant::PlantModel& model);

/// d/dtheta of objective(); requires a complete trace with sensitivities.
Vec grad_objective(const RolloutTrace& trace, const plant::PlantModel& model);

/// Margins and their total parameter gradients for every solved step.
struct GradientBundle {
  std::vector<Vec> margin_values;  // per step, one entry per row
  std::vector<Mat> margin_grads;   // per step, rows x n_theta
  Index n_theta = 0;

  Index n_steps() const { return static_cast<Index>(margin_values.size()); }
};

/// grad e_{t,i} = de/dx D_t + de/dz dz_t/dtheta + (de/dtheta)_direct.
GradientBundle grad_margins(const RolloutTrace& trace);

/// Gradient of one row margin of `qp` with the decision frozen at z, where
/// the QP was built at a state with sensitivity D.
Vec frozen_margin_gradient(const plant::PolicyQp& qp, const Vec& z, Index row, const Mat& state_sens);

/// One CSV row per solved step: step,t,x...,u...,e...,status. The final
/// state is appended as a row with empty input/margin fields.
void write_trace_csv(std::ostream& os, const RolloutTrace& trace);

}  // namespace rfggd::rollout
