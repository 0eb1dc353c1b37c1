#pragma once

#include "rfggd/plant.hpp"

namespace rfggd::plant {

/// Single integrator x+ = x + dt*u squeezed between two vehicles:
///   h1 = x - t,  h2 = 1 + c t - x.
/// The safe set vanishes at t = 1/(1 - c). Reward is -u^2; no Lyapunov row.
class CarModel final : public PlantModel {
 public:
  CarModel(double c, double dt);

  ModelDims dims() const override { return {1, 1, 2, false}; }
  double dt() const override { return dt_; }
  Dynamics dynamics(double t, const Vec& x) const override;
  ScalarField barrier(Index i, double t, const Vec& x) const override;
  RewardEval reward(double t, const Vec& x, const Vec& u) const override;
  QpWeights weights() const override;

  double shrink_rate() const { return c_; }

 private:
  double c_;
  double dt_;
};

/// Throws std::invalid_argument unless c < 1 and dt > 0.
CarModel car_model(double c, double dt);

/// Car parameter vector (a, b).
ParamVector car_params(double a, double b);

}  // namespace rfggd::plant
