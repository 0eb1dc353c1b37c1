#include "oracles.hpp"

#include "rfggd/car.hpp"
#include "rfggd/unicycle.hpp"

#include <doctest.h>

#include <numbers>

using namespace rfggd;
using namespace rfggd::plant;

namespace {

// Interval of u admitted by a 1-input QP's rows.
std::pair<double, double> admissible_interval(const qp::QpProblem& p) {
  double lo = -1e300, hi = 1e300;
  for (Index i = 0; i < p.n_cons(); ++i) {
    const double g = p.G(i, 0);
    if (g > 0) lo = std::max(lo, p.w(i) / g);
    if (g < 0) hi = std::min(hi, p.w(i) / g);
  }
  return {lo, hi};
}

UnicycleConfig leader_at(double x, double y) {
  UnicycleConfig cfg;
  cfg.leader.initial_position = {x, y};
  return cfg;
}

void check_field(const std::function<ScalarField(double, const Vec&)>& field, double t, const Vec& x) {
  const ScalarField f = field(t, x);
  const double h = 1e-6;
  const Mat g = oracle::jacobian_fd([&](const Vec& y) { return Vec::Constant(1, field(t, y).value); }, x, h);
  for (Index k = 0; k < x.size(); ++k) CHECK(oracle::rel_err(g(0, k), f.grad(k), 1e-3) <= 1e-5);
  const double rate = (field(t + h, x).value - field(t - h, x).value) / (2 * h);
  CHECK(oracle::rel_err(rate, f.rate, 1e-3) <= 1e-5);
  const Mat hess = oracle::jacobian_fd([&](const Vec& y) { return field(t, y).grad; }, x, h);
  for (Index i = 0; i < x.size(); ++i)
    for (Index k = 0; k < x.size(); ++k) CHECK(oracle::rel_err(hess(i, k), f.hessian(i, k), 1e-3) <= 1e-5);
  const Mat rg = oracle::jacobian_fd([&](const Vec& y) { return Vec::Constant(1, field(t, y).rate); }, x, h);
  for (Index k = 0; k < x.size(); ++k) CHECK(oracle::rel_err(rg(0, k), f.rate_grad(k), 1e-3) <= 1e-5);
}

// Flatten (H, f, G, w) so finite differences can be taken in one go.
Vec qp_data(const qp::QpProblem& p) {
  Vec out(p.H.size() + p.f.size() + p.G.size() + p.w.size());
  out << p.H.reshaped(), p.f, p.G.reshaped(), p.w;
  return out;
}

Vec perturbation_data(const qp::QpPerturbation& d, Index n, Index m) {
  const qp::QpPerturbation z = qp::QpPerturbation::zero(n, m);
  const Mat& dH = d.dH.size() ? d.dH : z.dH;
  const Vec& df = d.df.size() ? d.df : z.df;
  const Mat& dG = d.dG.size() ? d.dG : z.dG;
  const Vec& dw = d.dw.size() ? d.dw : z.dw;
  Vec out(n * n + n + m * n + m);
  out << dH.reshaped(), df, dG.reshaped(), dw;
  return out;
}

void check_structural_gradients(const PlantModel& model, double t, const Vec& x, const ParamVector& th) {
  const PolicyQp pq = build_qp(model, t, x, th);
  const Index n = pq.problem.n_vars(), m = pq.problem.n_cons();
  const Mat fdx = oracle::jacobian_fd([&](const Vec& y) { return qp_data(build_qp(model, t, y, th).problem); }, x, 1e-6);
  for (Index k = 0; k < x.size(); ++k) {
    const Vec an = perturbation_data(pq.gradients.wrt_state[static_cast<std::size_t>(k)], n, m);
    for (Index r = 0; r < an.size(); ++r) CHECK(oracle::rel_err(fdx(r, k), an(r), 1e-3) <= 1e-5);
  }
  const Mat fdt = oracle::jacobian_fd(
      [&](const Vec& flat) { return qp_data(build_qp(model, t, x, th.with_values(flat)).problem); }, th.flatten(),
      1e-6);
  for (Index k = 0; k < th.size(); ++k) {
    const Vec an = perturbation_data(pq.gradients.wrt_params[static_cast<std::size_t>(k)], n, m);
    for (Index r = 0; r < an.size(); ++r) CHECK(oracle::rel_err(fdt(r, k), an(r), 1e-3) <= 1e-5);
  }
}

}  // namespace

TEST_CASE("car rows expand by hand") {
  const auto car = car_model(0.3, 0.1);
  const auto pq = build_qp(car, 0.0, Vec::Constant(1, 0.5), car_params(0.5, 0.5));
  REQUIRE(pq.problem.n_cons() == 2);
  CHECK(pq.problem.G(0, 0) == doctest::Approx(0.1));
  CHECK(-pq.problem.w(0) == doctest::Approx(0.5 - 0.1 - 0.25));
  CHECK(pq.problem.G(1, 0) == doctest::Approx(-0.1));
  CHECK(-pq.problem.w(1) == doctest::Approx(0.5 + 0.03 - 0.25));
  const auto [lo, hi] = admissible_interval(pq.problem);
  CHECK(lo == doctest::Approx(-1.5));
  CHECK(hi == doctest::Approx(2.8));
}

TEST_CASE("car with zero rates is infeasible at once") {
  const auto car = car_model(0.3, 0.1);
  const auto pq = build_qp(car, 0.0, Vec::Constant(1, 0.5), car_params(0.0, 0.0));
  const auto [lo, hi] = admissible_interval(pq.problem);
  CHECK(lo == doctest::Approx(1.0));
  CHECK(hi == doctest::Approx(0.3));
  CHECK(qp::solve(pq.problem).status == qp::QpStatus::Infeasible);
}

TEST_CASE("car dynamics, barriers and reward") {
  const auto car = car_model(0.3, 0.1);
  const auto st = car.step(0.0, Vec::Constant(1, 0.5), Vec::Constant(1, 1.0));
  CHECK(st.next(0) == doctest::Approx(0.6));
  CHECK(st.jac_u(0, 0) == doctest::Approx(0.1));
  CHECK(st.jac_x(0, 0) == doctest::Approx(1.0));
  CHECK(car.barrier(1, 10.0, Vec::Constant(1, 2.0)).value == doctest::Approx(2.0));
  CHECK(car.barrier(0, 10.0, Vec::Constant(1, 2.0)).value == doctest::Approx(-8.0));
  const auto r = car.reward(0.0, Vec::Constant(1, 0.5), Vec::Constant(1, 3.0));
  CHECK(r.value == doctest::Approx(-9.0));
  CHECK(r.grad_u(0) == doctest::Approx(-6.0));
  CHECK_THROWS_AS(car_model(1.0, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(car_model(0.3, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(car.lyapunov(0.0, Vec::Zero(1)), std::logic_error);
}

TEST_CASE("rates at one leave only the next-step barrier") {
  const auto car = car_model(0.3, 0.1);
  const Vec x = Vec::Constant(1, 0.7);
  const auto pq = build_qp(car, 0.2, x, car_params(1.0, 1.0));
  for (double u : {-2.0, 0.0, 1.5}) {
    const Vec e = pq.problem.margins(Vec::Constant(1, u));
    const Vec xn = car.step(0.2, x, Vec::Constant(1, u)).next;
    CHECK(e(0) == doctest::Approx(car.barrier(0, 0.3, xn).value).epsilon(1e-12));
    CHECK(e(1) == doctest::Approx(car.barrier(1, 0.3, xn).value).epsilon(1e-12));
  }
}

TEST_CASE("car rows equal the realized one-step margin at the solution") {
  const auto car = car_model(0.3, 0.05);
  const double t = 0.4;
  const Vec x = Vec::Constant(1, 0.6);
  const ParamVector th = car_params(0.3, 0.8);
  const auto pq = build_qp(car, t, x, th);
  const auto s = qp::solve(pq.problem);
  REQUIRE(s.optimal());
  const Vec xn = car.step(t, x, s.z).next;
  const Vec e = pq.problem.margins(s.z);
  for (Index i = 0; i < 2; ++i) {
    const double rate = th.cbf_rates(i);
    const double realized = car.barrier(i, t + 0.05, xn).value - (1 - rate) * car.barrier(i, t, x).value;
    CHECK(std::abs(e(i) - realized) <= 1e-12);
  }
}

TEST_CASE("unicycle rows match the realized margin to second order in dt") {
  auto err_at = [](double dt) {
    UnicycleConfig cfg;
    cfg.dt = dt;
    const auto uni = unicycle_model(cfg);
    const Vec x = (Vec(3) << 0.05, -0.02, 0.1).finished();
    const double t = 0.03;
    const ParamVector th = uniform_params(uni, 0.5);
    const auto pq = build_qp(uni, t, x, th);
    const Vec z = (Vec(3) << 0.8, 0.4, 0.0).finished();
    const Vec xn = uni.step(t, x, z.head(2)).next;
    const Vec e = pq.problem.margins(z);
    double worst = 0.0;
    for (Index i = 0; i < 3; ++i) {
      const double realized =
          uni.barrier(i, t + dt, xn).value - (1 - th.cbf_rates(i)) * uni.barrier(i, t, x).value;
      worst = std::max(worst, std::abs(e(i) - realized));
    }
    return worst;
  };
  const double e1 = err_at(0.01), e2 = err_at(0.005);
  CHECK(e1 <= 1e-2);
  CHECK(e1 / e2 >= 3.0);  // halving dt quarters the error
}

TEST_CASE("both models are affine in the input") {
  const auto car = car_model(0.3, 0.1);
  const auto uni = unicycle_model({});
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> U(-2.0, 2.0);
  for (int k = 0; k < 20; ++k) {
    const PlantModel* models[] = {&car, &uni};
    for (const PlantModel* m : models) {
      const Index nx = m->dims().state, nu = m->dims().input;
      Vec x(nx), u1(nu), u2(nu);
      for (Index i = 0; i < nx; ++i) x(i) = U(rng);
      for (Index i = 0; i < nu; ++i) {
        u1(i) = U(rng);
        u2(i) = U(rng);
      }
      const double t = 0.5 + 0.1 * U(rng);
      const Vec mid = m->step(t, x, 0.5 * (u1 + u2)).next;
      const Vec avg = 0.5 * (m->step(t, x, u1).next + m->step(t, x, u2).next);
      CHECK((mid - avg).cwiseAbs().maxCoeff() <= 1e-10);
    }
  }
}

TEST_CASE("unicycle analytic derivatives match finite differences") {
  const auto uni = unicycle_model({});
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  for (int k = 0; k < 100; ++k) {
    const Vec x = (Vec(3) << 0.3 * U(rng), 0.3 * U(rng), U(rng)).finished();
    const double t = 0.1 + 0.05 * U(rng);
    for (Index i = 0; i < 3; ++i) check_field([&](double tt, const Vec& y) { return uni.barrier(i, tt, y); }, t, x);
    check_field([&](double tt, const Vec& y) { return uni.lyapunov(tt, y); }, t, x);

    const Vec u = (Vec(2) << U(rng), U(rng)).finished();
    const auto r = uni.reward(t, x, u);
    const Mat g = oracle::jacobian_fd([&](const Vec& y) { return Vec::Constant(1, uni.reward(t, y, u).value); }, x, 1e-6);
    for (Index j = 0; j < 3; ++j) CHECK(oracle::rel_err(g(0, j), r.grad_x(j), 1e-3) <= 1e-5);
    CHECK(r.grad_u.cwiseAbs().maxCoeff() == 0.0);

    const auto dyn = uni.dynamics(t, x);
    const Mat fj = oracle::jacobian_fd([&](const Vec& y) { return uni.dynamics(t, y).drift; }, x, 1e-6);
    CHECK((fj - dyn.drift_jacobian).cwiseAbs().maxCoeff() <= 1e-8);
    for (Index j = 0; j < 3; ++j) {
      Vec xp = x, xm = x;
      xp(j) += 1e-6;
      xm(j) -= 1e-6;
      const Mat dg = (uni.dynamics(t, xp).input_gain - uni.dynamics(t, xm).input_gain) / 2e-6;
      CHECK((dg - dyn.input_gain_jacobian[static_cast<std::size_t>(j)]).cwiseAbs().maxCoeff() <= 1e-8);
    }
    const auto st = uni.step(t, x, u);
    const Mat sx = oracle::jacobian_fd([&](const Vec& y) { return uni.step(t, y, u).next; }, x, 1e-6);
    CHECK((sx - st.jac_x).cwiseAbs().maxCoeff() <= 1e-8);
    const Mat su = oracle::jacobian_fd([&](const Vec& v) { return uni.step(t, x, v).next; }, u, 1e-6);
    CHECK((su - st.jac_u).cwiseAbs().maxCoeff() <= 1e-8);
  }
}

TEST_CASE("structural QP gradients match finite differences of build_qp") {
  const auto car = car_model(0.3, 0.05);
  check_structural_gradients(car, 0.2, Vec::Constant(1, 0.55), car_params(0.4, 1.3));
  const auto uni = unicycle_model({});
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  for (int k = 0; k < 10; ++k) {
    const Vec x = (Vec(3) << 0.3 * U(rng), 0.3 * U(rng), U(rng)).finished();
    ParamVector th = uniform_params(uni, 0.5);
    th.cbf_rates = (Vec(3) << 0.5 + 0.4 * U(rng), 0.5 + 0.4 * U(rng), 0.5 + 0.4 * U(rng)).finished();
    check_structural_gradients(uni, 0.1 + 0.05 * U(rng), x, th);
  }
}

TEST_CASE("unicycle view barrier in the two reference geometries") {
  const Vec origin = Vec::Zero(3);
  const double cos_gamma = std::cos(std::numbers::pi / 6.0);
  const auto ahead = unicycle_model(leader_at(1.0, 0.0));
  CHECK(ahead.distance(0.0, origin) == doctest::Approx(1.0));
  CHECK(ahead.view_cosine(0.0, origin) == doctest::Approx(1.0));
  CHECK(ahead.barrier(2, 0.0, origin).value == doctest::Approx(1.0 - cos_gamma));
  CHECK(ahead.barrier(0, 0.0, origin).value == doctest::Approx(1.0 - 0.09));
  CHECK(ahead.barrier(1, 0.0, origin).value == doctest::Approx(4.0 - 1.0));
  CHECK(ahead.lyapunov(0.0, origin).value == doctest::Approx(0.09));

  const auto side = unicycle_model(leader_at(0.0, 1.0));
  CHECK(side.view_cosine(0.0, origin) == doctest::Approx(0.0));
  CHECK(side.barrier(2, 0.0, origin).value == doctest::Approx(-cos_gamma));
  CHECK(side.barrier(2, 0.0, origin).value < 0.0);

  const auto on_top = unicycle_model(leader_at(0.0, 0.0));
  CHECK_THROWS_AS(on_top.barrier(2, 0.0, origin), DomainError);
  CHECK_THROWS_AS(build_qp(on_top, 0.0, origin, uniform_params(on_top, 0.5)), DomainError);
}

TEST_CASE("unicycle configuration is validated") {
  UnicycleConfig c;
  c.s_min = 0.8;  // above s_d
  CHECK_THROWS_AS(unicycle_model(c), std::invalid_argument);
  c = {};
  c.gamma = std::numbers::pi / 2;
  CHECK_THROWS_AS(unicycle_model(c), std::invalid_argument);
  c = {};
  c.dt = 0.0;
  CHECK_THROWS_AS(unicycle_model(c), std::invalid_argument);
}

TEST_CASE("leader trajectory") {
  LeaderTrajectory L;
  L.initial_position = {0.0, 0.0};
  const auto s0 = leader_trajectory(L, 0.0);
  CHECK(s0.velocity(0) == doctest::Approx(1.0));
  CHECK(s0.velocity(1) == doctest::Approx(0.0));
  const auto s1 = leader_trajectory(L, 0.125);
  CHECK(s1.velocity(1) == doctest::Approx(12.0));
  const auto s2 = leader_trajectory(L, 0.5);
  CHECK(s2.position(0) == doctest::Approx(0.5));
  CHECK(std::abs(s2.position(1)) <= 1e-12);

  for (double t : {0.1, 0.37, 0.5, 1.3}) {
    const double py = oracle::simpson([&](double s) { return leader_trajectory(L, s).velocity(1); }, 0.0, t, 2000);
    const double px = oracle::simpson([&](double s) { return leader_trajectory(L, s).velocity(0); }, 0.0, t, 2000);
    const auto st = leader_trajectory(L, t);
    CHECK(std::abs(st.position(1) - py) <= 1e-9);
    CHECK(std::abs(st.position(0) - px) <= 1e-12);
  }
  L.initial_position = {0.7, 0.0};
  CHECK(leader_trajectory(L, 0.0).position(0) == doctest::Approx(0.7));
}

TEST_CASE("smooth minimum sits just below the minimum") {
  const Vec v = (Vec(3) << 0.5, 2.0, 0.2).finished();
  Vec w;
  const double s = smooth_min(v, 10.0, &w);
  CHECK(s <= 0.2);
  CHECK(s >= 0.2 - std::log(3.0) / 10.0);
  CHECK(w.sum() == doctest::Approx(1.0));
  CHECK(smooth_min(v, 1e4) == doctest::Approx(0.2).epsilon(1e-3));
  const Mat g = oracle::jacobian_fd([](const Vec& y) { return Vec::Constant(1, smooth_min(y, 10.0)); }, v, 1e-6);
  for (Index i = 0; i < 3; ++i) CHECK(std::abs(g(0, i) - w(i)) <= 1e-8);
}

TEST_CASE("parameter vector layout") {
  ParamVector th;
  th.nominal_input = (Vec(2) << 0.3, -0.1).finished();
  th.clf_rate = 0.7;
  th.cbf_rates = (Vec(3) << 0.1, 0.2, 9.0).finished();
  CHECK(th.size() == 6);
  CHECK(th.clf_index() == 2);
  CHECK(th.cbf_offset() == 3);
  const Vec flat = th.flatten();
  CHECK(flat(0) == 0.3);
  CHECK(flat(2) == 0.7);
  CHECK(flat(5) == 9.0);
  CHECK(th.with_values(flat).flatten() == flat);
  CHECK_FALSE(th.within({}));
  const ParamVector c = th.clipped({});
  CHECK(c.cbf_rates(2) == 5.0);
  CHECK(c.within({}));

  const auto uni = unicycle_model({});
  const ParamVector u = uniform_params(uni, 0.5);
  CHECK(u.size() == 4);
  CHECK(u.clf_index() == 0);
  CHECK(car_params(0.1, 0.2).size() == 2);
}
