// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include "cli_support.hpp"
#include "oracles.hpp"

#include "rfggd/car.hpp"
#include "rfggd/experiments.hpp"
#include "rfggd/qp_diff.hpp"
#include "rfggd/rfggd.hpp"
#include "rfggd/unicycle.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>

using namespace rfggd;
using qp::QpPerturbation;
using qp::QpProblem;

namespace {

using Clock = std::chrono::steady_clock;

struct Verdict {
  bool ok = true;
  std::string detail;

  void require(bool cond, const std::string& why) {
    if (!cond && ok) {
      ok = false;
      detail = why;
    }
  }
};

int failures = 0;

void criterion(const char* name, double budget_s, const std::function<Verdict()>& body) {
  const auto t0 = Clock::now();
  Verdict v;
  try {
    v = body();
  } catch (const std::exception& e) {
    v.ok = false;
    v.detail = std::string("exception: ") + e.what();
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  if (secs >= budget_s) v.require(false, "runtime " + std::to_string(secs) + " s over budget");
  if (!v.ok) ++failures;
  std::printf("%s  %-28s %7.2f s  %s\n", v.ok ? "PASS" : "FAIL", name, secs, v.detail.c_str());
  std::fflush(stdout);
}

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

bool well_separated(const QpProblem& p, const qp::QpSolution& s) {
  if (!s.optimal()) return false;
  const Vec e = p.margins(s.z);
  for (Index i = 0; i < e.size(); ++i) {
    const bool active = e(i) <= 1e-9;
    if (active && s.duals(i) < 1e-3) return false;
    if (!active && e(i) < 1e-3) return false;
  }
  return true;
}

Verdict qp_correctness() {
  Verdict v;
  std::mt19937_64 rng(20240601);
  std::uniform_int_distribution<int> dn(1, 6), dm(0, 10);
  int infeasible = 0;
  double worst_obj = 0.0, worst_kkt = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const Index n = dn(rng), m = dm(rng);
    const QpProblem p = oracle::random_qp(rng, n, m, k % 3 != 0);
    const auto s = qp::solve(p);
    const auto ref = oracle::enumerate(p);
    v.require(s.status != qp::QpStatus::NumericalFailure, "solver failure on problem " + std::to_string(k));
    v.require((s.status == qp::QpStatus::Optimal) == ref.feasible, "verdict mismatch on problem " + std::to_string(k));
    if (!ref.feasible || !s.optimal()) {
      infeasible += !ref.feasible;
      continue;
    }
    const auto r = qp::kkt_residuals(p, s);
    worst_obj = std::max(worst_obj, std::abs(s.objective - ref.objective));
    worst_kkt = std::max({worst_kkt, r.stationarity, r.primal, r.complementarity, r.dual});
  }
  v.require(worst_obj <= 1e-6, "objective gap " + num(worst_obj));
  v.require(worst_kkt <= 1e-6, "KKT residual " + num(worst_kkt));
  if (v.ok)
    v.detail = "max |obj gap| " + num(worst_obj) + ", max KKT " + num(worst_kkt) + ", " +
               std::to_string(infeasible) + " infeasible";
  return v;
}

Verdict sensitivity_correctness() {
  Verdict v;
  std::mt19937_64 rng(20240602);
  std::uniform_int_distribution<int> dn(2, 5), dm(2, 8);
  const double h = 1e-6;
  double worst = 0.0;
  long zero_checks = 0;
  int tested = 0;
  while (tested < 100) {
    const Index n = dn(rng), m = dm(rng);
    const QpProblem p = oracle::random_qp(rng, n, m, true);
    const auto s = qp::solve(p);
    if (!well_separated(p, s)) continue;
    ++tested;
    const auto jr = qp::solution_jacobian(p, s);
    v.require(!jr.any_degenerate(), "degeneracy flagged on a separated problem");
    auto fd_check = [&](const QpPerturbation& d, const std::function<void(QpProblem&, double)>& perturb) {
      QpProblem pp = p, pm = p;
      perturb(pp, h);
      perturb(pm, -h);
      const Vec fd = (qp::solve(pp).z - qp::solve(pm).z) / (2.0 * h);
      const Vec an = jr.jacobian.apply(d).dz;
      for (Index k = 0; k < n; ++k) worst = std::max(worst, oracle::rel_err(fd(k), an(k), 1e-2));
    };
    for (Index i = 0; i < m; ++i) {
      QpPerturbation dw = QpPerturbation::zero(n, m);
      dw.dw(i) = 1.0;
      fd_check(dw, [i](QpProblem& q, double e) { q.w(i) += e; });
      for (Index j = 0; j < n; ++j) {
        QpPerturbation d = QpPerturbation::zero(n, m);
        d.dG(i, j) = 1.0;
        fd_check(d, [i, j](QpProblem& q, double e) { q.G(i, j) += e; });
      }
      if (jr.flags[static_cast<std::size_t>(i)] == qp::Degeneracy::StrictlyInactive) {
        QpPerturbation d = QpPerturbation::zero(n, m);
        d.dw(i) = 1.0;
        d.dG.row(i).setOnes();
        ++zero_checks;
        v.require(jr.jacobian.apply(d).dz.cwiseAbs().maxCoeff() == 0.0, "inactive row moved the solution");
      }
    }
    for (Index j = 0; j < n; ++j) {
      QpPerturbation d = QpPerturbation::zero(n, m);
      d.df(j) = 1.0;
      fd_check(d, [j](QpProblem& q, double e) { q.f(j) += e; });
      for (Index k = j; k < n; ++k) {
        QpPerturbation dh = QpPerturbation::zero(n, m);
        dh.dH(j, k) += 1.0;
        if (k != j) dh.dH(k, j) += 1.0;
        fd_check(dh, [j, k](QpProblem& q, double e) {
          q.H(j, k) += e;
          if (k != j) q.H(k, j) += e;
        });
      }
    }
  }
  v.require(worst <= 1e-4, "max relative error " + num(worst));
  v.require(zero_checks > 0, "no inactive rows exercised");
  if (v.ok) v.detail = "max rel err " + num(worst) + ", " + std::to_string(zero_checks) + " inactive rows exactly zero";
  return v;
}

Verdict rollout_gradients() {
  Verdict v;
  const auto car = plant::car_model(0.3, 0.01);
  const Vec x0 = Vec::Constant(1, 0.5);
  double worst = 0.0;
  int tested = 0;
  for (auto [a, b] : {std::pair{0.001, 1.0}, std::pair{0.3, 0.8}, std::pair{0.05, 2.0}, std::pair{1.0, 0.02},
                      std::pair{0.01, 0.01}, std::pair{2.0, 3.0}}) {
    const ParamVector th = plant::car_params(a, b);
    const auto tr = rollout::rollout(car, x0, 0.0, th, 10);
    if (!tr.complete() || tr.any_degenerate()) continue;
    ++tested;
    const Vec g = rollout::grad_objective(tr, car);
    const auto gb = rollout::grad_margins(tr);
    auto values = [&](const Vec& flat) {
      const auto p = rollout::rollout(car, x0, 0.0, th.with_values(flat), 10, {.sensitivities = false});
      Vec out(1 + 2 * 10);
      out(0) = rollout::objective(p, car);
      for (Index t = 0; t < 10; ++t) out.segment(1 + 2 * t, 2) = p.steps[static_cast<std::size_t>(t)].margins;
      return out;
    };
    const Mat fd = oracle::jacobian_fd(values, th.flatten(), 1e-6);
    for (Index j = 0; j < 2; ++j) {
      worst = std::max(worst, oracle::rel_err(fd(0, j), g(j), 1e-6));
      for (Index t = 0; t < 10; ++t)
        for (Index i = 0; i < 2; ++i)
          worst = std::max(worst, oracle::rel_err(fd(1 + 2 * t + i, j), gb.margin_grads[static_cast<std::size_t>(t)](i, j), 1e-4));
    }
  }
  v.require(tested >= 3, "too few non-degenerate cases");
  v.require(worst <= 1e-3, "max relative error " + num(worst));

  // two steps on the h1 branch: u_k = 1 - a (x_k - t_k) / dt
  const double dt = 0.01, a = 0.001, x1 = 0.5;
  const auto tr = rollout::rollout(plant::car_model(0.3, dt), Vec::Constant(1, x1), 0.0, plant::car_params(a, 1.0), 2);
  const double u1 = 1.0 - a * x1 / dt;
  const double x2 = x1 + dt * u1;
  const double u2 = 1.0 - a * (x2 - dt) / dt;
  const double du1 = -x1 / dt;
  const double du2 = -(x2 - dt) / dt - a * du1;
  const Vec g = rollout::grad_objective(tr, car);
  const double closed = std::max(std::abs(g(0) - (-2.0 * u1 * du1 - 2.0 * u2 * du2)), std::abs(g(1)));
  v.require(tr.complete() && closed <= 1e-10, "horizon-2 closed form off by " + num(closed));
  if (v.ok) v.detail = "max rel err " + num(worst) + " over " + std::to_string(tested) + " cases, closed form " + num(closed);
  return v;
}

Verdict grid_surrogate() {
  Verdict v;
  std::string detail;
  for (double c : {0.3, 0.7}) {
    experiments::GridSpec spec;
    spec.c = c;
    const auto g = experiments::car_grid(spec);
    const std::string tag = "c=" + num(c);
    v.require(g.feasible_steps.rows() == 50 && g.feasible_steps.cols() == 50, tag + " wrong shape");
    v.require(g.contains(0), tag + " has no 0 cell");
    v.require(g.contains(100), tag + " has no 100 cell");
    v.require(!g.symmetric(), tag + " is symmetric");
    Index zeros = (g.feasible_steps.array() == 0).count(), full = (g.feasible_steps.array() == 100).count();
    detail += tag + ": " + std::to_string(zeros) + " zero, " + std::to_string(full) + " full; ";
  }
  if (v.ok) v.detail = detail;
  return v;
}

Verdict case2_extension() {
  Verdict v;
  const auto car = plant::car_model(0.3, 0.01);
  update::RfggdConfig cfg;
  cfg.lookahead = 100;
  cfg.max_case2_iters = 50;
  std::string detail;
  for (auto [x0, a, b] : {std::tuple{0.5, 0.001, 1.0}, std::tuple{0.5, 0.001, 0.2}, std::tuple{0.1, 1.0, 0.001},
                          std::tuple{0.1, 0.2, 0.001}, std::tuple{0.5, 0.01, 0.01}}) {
    const std::string tag = "(" + num(x0) + ", " + num(a) + ", " + num(b) + ")";
    const auto up = update::update_infeasible(car, Vec::Constant(1, x0), 0.0, plant::car_params(a, b), cfg);
    v.require(up.initial_feasible_steps < 100, tag + " already feasible to the cap");
    v.require(up.outcome == update::Case2Outcome::Extended, tag + " " + update::to_string(up.outcome));
    Index prev = up.initial_feasible_steps;
    for (Index k : up.feasibility_history) {
      v.require(k >= prev, tag + " feasible steps decreased");
      prev = k;
    }
    v.require(!up.feasibility_history.empty() && up.feasibility_history.back() > up.initial_feasible_steps,
              tag + " did not extend");
    v.require(up.iterations <= 50, tag + " over 50 iterations");
    for (const auto& th : up.iterates)
      v.require((th.flatten().array() > 0.0).all() && (th.flatten().array() <= 5.0).all(), tag + " left the box");
    detail += std::to_string(up.initial_feasible_steps) + "->" +
              (up.feasibility_history.empty() ? std::string("?") : std::to_string(up.feasibility_history.back())) +
              " in " + std::to_string(up.iterations) + "; ";
  }
  if (v.ok) v.detail = detail;
  return v;
}

Verdict objective1_guarantee() {
  Verdict v;
  const auto uni = plant::unicycle_model({});
  const update::RfggdConfig cfg;
  const Index T = cfg.lookahead;
  std::mt19937_64 rng(20240607);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  const Eigen::Vector2d leader = plant::leader_trajectory(uni.config().leader, 0.0).position;
  int starts = 0, strict = 0, exhausted = 0, draws = 0;
  while (starts < 20 && draws < 1000) {
    ++draws;
    const double r = 0.5 + 0.8 * U(rng), phi = -0.4 + 0.8 * U(rng);
    Vec x0(3);
    x0 << leader.x() - r * std::cos(phi), leader.y() - r * std::sin(phi), phi + (-0.2 + 0.4 * U(rng));
    Vec flat(plant::uniform_params(uni, 0.5).size());
    for (Index i = 0; i < flat.size(); ++i) flat(i) = 0.2 + 0.8 * U(rng);
    const ParamVector th = plant::uniform_params(uni, 0.5).with_values(flat);
    const auto base = rollout::rollout(uni, x0, 0.0, th, T, {.sensitivities = false});
    if (!base.complete()) continue;
    ++starts;
    const auto up = update::update_feasible(uni, x0, 0.0, th, T, cfg);
    const double J = rollout::objective(base, uni);
    if (up.outcome == update::UpdateOutcome::Accepted) {
      const auto again = rollout::rollout(uni, x0, 0.0, up.theta, T, {.sensitivities = false});
      const double Jp = rollout::objective(again, uni);
      v.require(again.feasible_steps() >= T, "accepted step shortened the horizon");
      v.require(Jp >= J, "accepted step lowered J by " + num(J - Jp));
      strict += Jp > J;
    } else {
      exhausted += up.outcome == update::UpdateOutcome::BacktrackExhausted;
      v.require(up.theta.flatten() == th.flatten(), "rejected step moved theta");
    }
  }
  v.require(starts == 20, "only " + std::to_string(starts) + " feasible starts drawn");
  v.require(strict >= 15, "only " + std::to_string(strict) + " strict improvements");
  if (v.ok)
    v.detail = std::to_string(strict) + "/20 strict improvements, " + std::to_string(exhausted) + " backtrack-exhausted";
  return v;
}

Verdict follower_surrogate() {
  Verdict v;
  const auto uni = plant::unicycle_model({});
  update::RfggdConfig cfg;
  cfg.lookahead = 10;
  const auto s = experiments::follower_study(uni, Vec::Zero(3), plant::uniform_params(uni, 0.5), 500, cfg);
  const double Ja = s.adaptive.total_objective(), Jb = s.baseline.total_objective();
  v.require(s.adaptive.steps.size() == 500, "adaptive run stopped early");
  v.require(Ja > Jb, "adaptive J " + num(Ja) + " not above baseline " + num(Jb));
  v.require(s.adaptive.min_barrier() >= 0.0, "barrier went negative: " + num(s.adaptive.min_barrier()));
  if (v.ok)
    v.detail = "J adaptive " + num(Ja) + " vs baseline " + num(Jb) + ", min barrier " + num(s.adaptive.min_barrier());
  return v;
}

Verdict cli_determinism() {
  Verdict v;
  const auto dir = cli::fresh_dir("acceptance");
  const std::string cfg_dir = RFGGD_CONFIG_DIR;
  struct Job {
    const char* command;
    const char* config;
    std::vector<const char*> files;
  };
  const std::vector<Job> jobs = {
      {"car-grid", "car_grid.json", {"grid.csv"}},
      {"car-rfggd", "car_rfggd.json", {"iterates.csv", "feasibility.csv"}},
      {"follow", "follow.json", {"adaptive.csv", "baseline.csv", "rewards.csv"}},
  };
  int compared = 0;
  for (const auto& j : jobs) {
    const std::string cfg = cfg_dir + "/" + j.config;
    const auto o1 = dir / (std::string(j.command) + "_1"), o2 = dir / (std::string(j.command) + "_2");
    const auto r1 = cli::run(RFGGD_CLI_PATH, std::string(j.command) + " --quiet --config " + cfg + " --out " + o1.string(), dir);
    const auto r2 = cli::run(RFGGD_CLI_PATH, std::string(j.command) + " --quiet --config " + cfg + " --out " + o2.string(), dir);
    v.require(r1.code == 0 && r2.code == 0, std::string(j.command) + " exited " + std::to_string(r1.code));
    for (const char* f : j.files) {
      const std::string a = cli::slurp(o1 / f), b = cli::slurp(o2 / f);
      v.require(!a.empty(), std::string(f) + " empty");
      v.require(a == b, std::string(f) + " differs between runs");
      ++compared;
    }
  }
  cli::fs::remove_all(dir);
  if (v.ok) v.detail = std::to_string(compared) + " CSV files byte-identical";
  return v;
}

}  // namespace

int main() {
  criterion("qp_correctness", 30.0, qp_correctness);
  criterion("sensitivity_correctness", 10.0, sensitivity_correctness);
  criterion("rollout_gradients", 10.0, rollout_gradients);
  criterion("car_grid_surrogate", 60.0, grid_surrogate);
  criterion("case2_extension", 60.0, case2_extension);
  criterion("objective1_guarantee", 120.0, objective1_guarantee);
  criterion("follower_surrogate", 120.0, follower_surrogate);
  criterion("cli_determinism", 600.0, cli_determinism);
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
