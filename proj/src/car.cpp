#include "rfggd/car.hpp"

#include <cmath>
#include <stdexcept>

namespace rfggd::plant {

CarModel::CarModel(double c, double dt) : c_(c), dt_(dt) {
  if (!(c < 1.0) || !std::isfinite(c)) throw std::invalid_argument("car: c must be < 1");
  if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("car: dt must be > 0");
}

Dynamics CarModel::dynamics(double, const Vec& x) const {
  require_dims(x.size() == 1, "car: state is scalar");
  Dynamics d;
  d.drift = x;
  d.input_gain = Mat::Constant(1, 1, dt_);
  d.drift_jacobian = Mat::Identity(1, 1);
  d.input_gain_jacobian = {Mat::Zero(1, 1)};
  return d;
}

ScalarField CarModel::barrier(Index i, double t, const Vec& x) const {
  require_dims(x.size() == 1, "car: state is scalar");
  ScalarField s;
  s.hessian = Mat::Zero(1, 1);
  s.rate_grad = Vec::Zero(1);
  if (i == 0) {
    s.value = x(0) - t;
    s.grad = Vec::Constant(1, 1.0);
    s.rate = -1.0;
  } else if (i == 1) {
    s.value = 1.0 + c_ * t - x(0);
    s.grad = Vec::Constant(1, -1.0);
    s.rate = c_;
  } else {
    throw std::out_of_range("car: barrier index must be 0 or 1");
  }
  return s;
}

RewardEval CarModel::reward(double, const Vec& x, const Vec& u) const {
  return {-u.squaredNorm(), Vec::Zero(x.size()), -2.0 * u};
}

QpWeights CarModel::weights() const { return {Mat::Identity(1, 1), 0.0}; }

CarModel car_model(double c, double dt) { return CarModel(c, dt); }

ParamVector car_params(double a, double b) {
  ParamVector th;
  th.cbf_rates = Vec(2);
  th.cbf_rates << a, b;
  return th;
}

}  // namespace rfggd::plant
