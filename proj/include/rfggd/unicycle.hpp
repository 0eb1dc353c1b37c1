#pragma once

#include "rfggd/plant.hpp"

#include <Eigen/Core>

#include <numbers>

namespace rfggd::plant {

/// Leader moving with velocity (speed_x, amplitude_y * sin(angular_frequency * t)).
struct LeaderTrajectory {
  Eigen::Vector2d initial_position{0.7, 0.0};
  double speed_x = 1.0;
  double amplitude_y = 12.0;
  double angular_frequency = 4.0 * std::numbers::pi;
};

struct LeaderState {
  Eigen::Vector2d position;
  Eigen::Vector2d velocity;
};

/// Closed-form position (integral of the velocity from 0) and velocity at t >= 0.
LeaderState leader_trajectory(const LeaderTrajectory& leader, double t);

struct UnicycleConfig {
  double s_min = 0.3;                       // m
  double s_max = 2.0;                       // m
  double gamma = std::numbers::pi / 6.0;    // half field of view, rad
  double s_d = 0.7;                         // m
  double dt = 0.05;                         // s
  double slack_weight = 10.0;
  Mat input_cost = Mat::Identity(2, 2);
  double kappa = 10.0;                      // smooth-minimum sharpness
  LeaderTrajectory leader;
};

/// Unicycle follower with state (x, y, psi) and input (v, omega), keeping a
/// leader within distance bounds and field of view:
///   h1 = s^2 - s_min^2,  h2 = s_max^2 - s^2,  h3 = <heading, bearing> - cos(gamma),
///   V = (s - s_d)^2,  reward = -(1/kappa) log sum exp(-kappa h_i).
class UnicycleModel final : public PlantModel {
 public:
  explicit UnicycleModel(UnicycleConfig cfg);

  ModelDims dims() const override { return {3, 2, 3, true}; }
  double dt() const override { return cfg_.dt; }
  Dynamics dynamics(double t, const Vec& x) const override;
  ScalarField barrier(Index i, double t, const Vec& x) const override;
  ScalarField lyapunov(double t, const Vec& x) const override;
  RewardEval reward(double t, const Vec& x, const Vec& u) const override;
  QpWeights weights() const override { return {cfg_.input_cost, cfg_.slack_weight}; }

  const UnicycleConfig& config() const { return cfg_; }
  /// Distance to the leader and cosine of the view angle.
  double distance(double t, const Vec& x) const;
  double view_cosine(double t, const Vec& x) const;

 private:
  UnicycleConfig cfg_;
};

/// Throws std::invalid_argument unless 0 < s_min < s_d < s_max,
/// 0 < gamma < pi/2, dt > 0, slack_weight > 0 and kappa > 0.
UnicycleModel unicycle_model(const UnicycleConfig& cfg);

/// Smooth minimum -(1/kappa) log sum exp(-kappa v_i) and its weights
/// d/dv_i (a softmax), computed with a max shift.
double smooth_min(const Vec& values, double kappa, Vec* weights = nullptr);

}  // namespace rfggd::plant
