#pragma once

#include "rfggd/rollout.hpp"

#include <optional>
#include <string>
#include <vector>

namespace rfggd::update {

struct RfggdConfig {
  double learning_rate = 1.0;   // beta
  double trust_radius = 0.5;    // infinity-norm bound on the direction
  double regularization = 1.0;  // rho in -(rho/2)|d|^2
  int max_case2_iters = 50;
  int max_backtracks = 20;
  ParamBox box;
  Index lookahead = 10;

  /// Throws std::invalid_argument on beta < 0, trust_radius <= 0, rho < 0,
  /// non-positive iteration caps, lookahead < 1 or an empty box.
  void validate() const;
};

/// Feasible ascent direction and the linearized margins that admit it.
struct DirectionResult {
  Vec d_theta;
  std::vector<Vec> predicted_margins;  // e + <grad e, d> per step
  double objective_projection = 0.0;   // <ascent, d>
  qp::QpStatus solver_status = qp::QpStatus::Optimal;

  double min_predicted_margin() const;
};

/// maximize <ascent, d> - rho/2 |d|^2
/// s.t.     e_{t,i} + <grad e_{t,i}, d> >= 0  for every row and step,
///          |d|_inf <= trust_radius.
/// Returns d = 0 when ascent = 0. Throws NumericalFailure if the inner QP fails.
DirectionResult feasible_direction(const rollout::GradientBundle& bundle, const Vec& ascent, const RfggdConfig& cfg);

enum class UpdateOutcome {
  Accepted,            // re-rolled trace kept the horizon and J did not drop
  Stationary,          // direction was zero, theta unchanged
  BacktrackExhausted,  // no step size passed the acceptance test, theta unchanged
};

const char* to_string(UpdateOutcome o);

struct FeasibleUpdate {
  ParamVector theta;
  DirectionResult direction;
  rollout::RolloutTrace before;
  rollout::RolloutTrace after;  // trace under the returned theta
  UpdateOutcome outcome = UpdateOutcome::Stationary;
  double objective_before = 0.0;
  double objective_after = 0.0;
  double step_size = 0.0;  // beta actually used (0 if not accepted)
  int backtracks = 0;
};

/// Case 1: ascend J while keeping the QP feasible over `horizon` steps.
/// The step beta*d is halved until the re-rolled trace is feasible over the
/// horizon and J(theta+) >= J(theta). Requires theta feasible over the horizon.
FeasibleUpdate update_feasible(const plant::PlantModel& model, const Vec& x0, double t0, const ParamVector& theta,
                               Index horizon, const RfggdConfig& cfg);

enum class Case2Outcome {
  AlreadyFeasible,  // theta already feasible up to the horizon cap
  Extended,         // feasible_steps grew past its initial value
  Stalled,          // no growth within max_case2_iters
  NumericalFailure,
};

const char* to_string(Case2Outcome o);

/// Result of one Case-2 iteration from an infeasible trace.
struct Case2Step {
  ParamVector theta;
  rollout::RolloutTrace trace;  // trace under the returned theta
  bool accepted = false;
  Index limiting_row = -1;
  std::vector<Index> tied_rows;
  Vec ascent;
  DirectionResult direction;
};

/// One Case-2 iteration: relax the failing QP, take the ascent of the
/// limiting row margin(s) through D_{K+1} with the decision frozen at the
/// relaxed solution, project it onto the feasible directions of steps 1..K,
/// then backtrack on beta until the lexicographic merit
/// (feasible_steps, -max slack) does not regress.
Case2Step case2_step(const plant::PlantModel& model, const Vec& x0, double t0, const rollout::RolloutTrace& trace,
                     const RfggdConfig& cfg);

struct InfeasibleUpdate {
  ParamVector theta;
  int iterations = 0;
  Index initial_feasible_steps = 0;
  std::vector<Index> feasibility_history;  // feasible_steps after each iteration
  std::vector<ParamVector> iterates;       // theta after each iteration
  Case2Outcome outcome = Case2Outcome::AlreadyFeasible;
  std::string error;
};

/// Case 2: repeat case2_step until feasible_steps exceeds its initial value
/// or max_case2_iters is reached. The horizon cap is cfg.lookahead.
InfeasibleUpdate update_infeasible(const plant::PlantModel& model, const Vec& x0, double t0, const ParamVector& theta,
                                   const RfggdConfig& cfg);

struct OnlineStep {
  double time = 0.0;
  Vec state;
  Vec input;
  ParamVector theta;          // parameters used for this step's control
  Vec barriers;               // h_i(t, x_t)
  double horizon_objective = 0.0;  // J over the lookahead under theta
  Index lookahead_feasible = 0;
  bool qp_feasible = true;
  std::string annotation;     // update outcome or failure note
};

struct OnlineResult {
  std::vector<OnlineStep> steps;
  Vec final_state;
  double final_time = 0.0;

  double total_objective() const;
  double min_barrier() const;
};

/// Receding-horizon adaptation: at every sim step roll the lookahead, take one
/// accepted Case-1 step (or run Case 2 if the lookahead is infeasible), then
/// apply the first control of the updated policy. learning_rate = 0 gives the
/// fixed-parameter baseline.
OnlineResult online_adapt(const plant::PlantModel& model, const Vec& x0, const ParamVector& theta0, Index sim_steps,
                          const RfggdConfig& cfg);

}  // namespace rfggd::update
