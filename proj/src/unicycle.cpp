#include "rfggd/unicycle.hpp"

#include <cmath>
#include <stdexcept>

namespace rfggd::plant {

namespace {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

// A function phi(r, psi) of the follower-to-leader vector r = L(t) - p and the
// heading, with derivatives up to second order.
struct RelativeField {
  double value = 0.0;
  Vec2 d_r = Vec2::Zero();
  double d_psi = 0.0;
  Mat2 d_rr = Mat2::Zero();
  Vec2 d_rpsi = Vec2::Zero();
  double d_psipsi = 0.0;
};

// Map to derivatives in x = (p, psi) and t, using dr/dp = -I, dr/dt = v_L.
ScalarField to_state_field(const RelativeField& f, const Vec2& leader_velocity) {
  ScalarField s;
  s.value = f.value;
  s.grad = Vec(3);
  s.grad << -f.d_r, f.d_psi;
  s.rate = f.d_r.dot(leader_velocity);
  s.hessian = Mat(3, 3);
  s.hessian.topLeftCorner<2, 2>() = f.d_rr;
  s.hessian.topRightCorner<2, 1>() = -f.d_rpsi;
  s.hessian.bottomLeftCorner<1, 2>() = -f.d_rpsi.transpose();
  s.hessian(2, 2) = f.d_psipsi;
  s.rate_grad = Vec(3);
  s.rate_grad << -f.d_rr * leader_velocity, f.d_rpsi.dot(leader_velocity);
  return s;
}

}  // namespace

LeaderState leader_trajectory(const LeaderTrajectory& leader, double t) {
  const double w = leader.angular_frequency;
  LeaderState s;
  s.velocity = Vec2(leader.speed_x, leader.amplitude_y * std::sin(w * t));
  const double lateral = w != 0.0 ? leader.amplitude_y / w * (1.0 - std::cos(w * t)) : 0.0;
  s.position = leader.initial_position + Vec2(leader.speed_x * t, lateral);
  return s;
}

double smooth_min(const Vec& values, double kappa, Vec* weights) {
  const double lo = values.minCoeff();
  const Vec e = (-kappa * (values.array() - lo)).exp().matrix();
  const double sum = e.sum();
  if (weights) *weights = e / sum;
  return lo - std::log(sum) / kappa;
}

UnicycleModel::UnicycleModel(UnicycleConfig cfg) : cfg_(std::move(cfg)) {
  const auto& c = cfg_;
  if (!(c.s_min > 0.0 && c.s_min < c.s_d && c.s_d < c.s_max))
    throw std::invalid_argument("unicycle: need 0 < s_min < s_d < s_max");
  if (!(c.gamma > 0.0 && c.gamma < std::numbers::pi / 2.0))
    throw std::invalid_argument("unicycle: gamma must be in (0, pi/2)");
  if (!(c.dt > 0.0)) throw std::invalid_argument("unicycle: dt must be > 0");
  if (!(c.slack_weight > 0.0)) throw std::invalid_argument("unicycle: slack_weight must be > 0");
  if (!(c.kappa > 0.0)) throw std::invalid_argument("unicycle: kappa must be > 0");
  if (c.input_cost.rows() != 2 || c.input_cost.cols() != 2)
    throw std::invalid_argument("unicycle: input_cost must be 2 x 2");
}

Dynamics UnicycleModel::dynamics(double, const Vec& x) const {
  require_dims(x.size() == 3, "unicycle: state is (x, y, psi)");
  const double dt = cfg_.dt;
  const double c = std::cos(x(2));
  const double s = std::sin(x(2));
  Dynamics d;
  d.drift = x;
  d.input_gain = Mat::Zero(3, 2);
  d.input_gain(0, 0) = dt * c;
  d.input_gain(1, 0) = dt * s;
  d.input_gain(2, 1) = dt;
  d.drift_jacobian = Mat::Identity(3, 3);
  d.input_gain_jacobian.assign(3, Mat::Zero(3, 2));
  d.input_gain_jacobian[2](0, 0) = -dt * s;
  d.input_gain_jacobian[2](1, 0) = dt * c;
  return d;
}

double UnicycleModel::distance(double t, const Vec& x) const {
  const LeaderState L = leader_trajectory(cfg_.leader, t);
  return (L.position - x.head<2>()).norm();
}

double UnicycleModel::view_cosine(double t, const Vec& x) const {
  const LeaderState L = leader_trajectory(cfg_.leader, t);
  const Vec2 r = L.position - x.head<2>();
  const double s = r.norm();
  if (!(s > 1e-12)) throw DomainError("unicycle: leader coincides with follower");
  return Vec2(std::cos(x(2)), std::sin(x(2))).dot(r) / s;
}

ScalarField UnicycleModel::barrier(Index i, double t, const Vec& x) const {
  require_dims(x.size() == 3, "unicycle: state is (x, y, psi)");
  const LeaderState L = leader_trajectory(cfg_.leader, t);
  const Vec2 r = L.position - x.head<2>();
  const double s2 = r.squaredNorm();
  RelativeField f;
  switch (i) {
    case 0:
    case 1: {
      const double sign = i == 0 ? 1.0 : -1.0;
      f.value = i == 0 ? s2 - cfg_.s_min * cfg_.s_min : cfg_.s_max * cfg_.s_max - s2;
      f.d_r = sign * 2.0 * r;
      f.d_rr = sign * 2.0 * Mat2::Identity();
      break;
    }
    case 2: {
      const double s = std::sqrt(s2);
      if (!(s > 1e-12)) throw DomainError("unicycle: leader coincides with follower");
      const Vec2 head(std::cos(x(2)), std::sin(x(2)));
      const Vec2 head_d(-std::sin(x(2)), std::cos(x(2)));
      const Vec2 rhat = r / s;
      const Mat2 proj = Mat2::Identity() - rhat * rhat.transpose();
      const double dr = head.dot(r);
      f.value = dr / s - std::cos(cfg_.gamma);
      f.d_r = proj * head / s;
      f.d_psi = head_d.dot(rhat);
      f.d_psipsi = -head.dot(rhat);
      f.d_rpsi = proj * head_d / s;
      const double s3 = s2 * s;
      f.d_rr = -(head * r.transpose() + r * head.transpose()) / s3 - dr * Mat2::Identity() / s3 +
               3.0 * dr * r * r.transpose() / (s3 * s2);
      break;
    }
    default:
      throw std::out_of_range("unicycle: barrier index must be 0, 1 or 2");
  }
  return to_state_field(f, L.velocity);
}

ScalarField UnicycleModel::lyapunov(double t, const Vec& x) const {
  require_dims(x.size() == 3, "unicycle: state is (x, y, psi)");
  const LeaderState L = leader_trajectory(cfg_.leader, t);
  const Vec2 r = L.position - x.head<2>();
  const double s = r.norm();
  if (!(s > 1e-12)) throw DomainError("unicycle: leader coincides with follower");
  const Vec2 rhat = r / s;
  const double gap = s - cfg_.s_d;
  RelativeField f;
  f.value = gap * gap;
  f.d_r = 2.0 * gap * rhat;
  f.d_rr = 2.0 * rhat * rhat.transpose() + 2.0 * gap * (Mat2::Identity() - rhat * rhat.transpose()) / s;
  return to_state_field(f, L.velocity);
}

RewardEval UnicycleModel::reward(double t, const Vec& x, const Vec& u) const {
  Vec h(3);
  Mat grads(3, 3);
  for (Index i = 0; i < 3; ++i) {
    const ScalarField b = barrier(i, t, x);
    h(i) = b.value;
    grads.row(i) = b.grad.transpose();
  }
  Vec wts;
  RewardEval r;
  r.value = smooth_min(h, cfg_.kappa, &wts);
  r.grad_x = grads.transpose() * wts;
  r.grad_u = Vec::Zero(u.size());
  return r;
}

UnicycleModel unicycle_model(const UnicycleConfig& cfg) { return UnicycleModel(cfg); }

}  // namespace rfggd::plant
