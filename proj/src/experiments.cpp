#include "rfggd/experiments.hpp"

#include "rfggd/csv.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <ostream>
#include <stdexcept>
#include <thread>

namespace rfggd::experiments {

Vec Range::values() const {
  return Vec::LinSpaced(count, min, max);
}

namespace {

void check_range(const Range& r, const char* name, const ParamBox& box) {
  if (r.count < 2) throw std::invalid_argument(std::string(name) + ".count must be >= 2");
  if (!(r.min <= r.max)) throw std::invalid_argument(std::string(name) + ".min must not exceed max");
  if (r.min < box.rate_min || r.max > box.rate_max)
    throw std::invalid_argument(std::string(name) + " must lie within the parameter box");
}

void check_car(double c, double dt, Index cap) {
  if (!(c < 1.0)) throw std::invalid_argument("c must be < 1");
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be > 0");
  if (cap < 1) throw std::invalid_argument("horizon_cap must be >= 1");
}

}  // namespace

void GridSpec::validate(const ParamBox& box) const {
  check_range(a_range, "a_range", box);
  check_range(b_range, "b_range", box);
  check_car(c, dt, horizon_cap);
}

bool GridResult::symmetric() const {
  const auto& m = feasible_steps;
  return m.rows() == m.cols() && m == m.transpose();
}

Index car_cell(const GridSpec& spec, double a, double b) {
  const plant::CarModel model = plant::car_model(spec.c, spec.dt);
  const Vec x0 = Vec::Constant(1, spec.x0);
  return rollout::rollout(model, x0, spec.t0, plant::car_params(a, b), spec.horizon_cap, {.sensitivities = false})
      .feasible_steps();
}

GridResult car_grid(const GridSpec& spec, unsigned threads) {
  spec.validate();
  GridResult g;
  g.a_values = spec.a_range.values();
  g.b_values = spec.b_range.values();
  g.c = spec.c;
  g.x0 = spec.x0;
  g.dt = spec.dt;
  g.horizon_cap = spec.horizon_cap;
  const Index na = g.a_values.size();
  const Index nb = g.b_values.size();
  g.feasible_steps = IndexMatrix::Zero(na, nb);

  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<Index>(threads, na * nb));
  // Each worker writes a disjoint set of cells, so results do not depend on
  // the schedule.
  std::atomic<Index> next{0};
  auto work = [&] {
    for (Index k = next++; k < na * nb; k = next++) {
      const Index i = k / nb;
      const Index j = k % nb;
      g.feasible_steps(i, j) = car_cell(spec, g.a_values(i), g.b_values(j));
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(work);
  work();
  for (auto& th : pool) th.join();
  return g;
}

void CarStudySpec::validate(const ParamBox& box) const {
  check_car(c, dt, horizon_cap);
  if (max_iters < 1) throw std::invalid_argument("max_iters must be >= 1");
  for (const auto& [a, b] : inits)
    if (a < box.rate_min || a > box.rate_max || b < box.rate_min || b > box.rate_max)
      throw std::invalid_argument("inits must lie within the parameter box");
}

const char* to_string(StudyPhase p) {
  switch (p) {
    case StudyPhase::Init: return "init";
    case StudyPhase::Case2: return "case2";
    case StudyPhase::Case1: return "case1";
  }
  return "unknown";
}

const char* to_string(StudyStop s) {
  switch (s) {
    case StudyStop::Converged: return "converged";
    case StudyStop::Stalled: return "stalled";
    case StudyStop::BacktrackExhausted: return "backtrack_exhausted";
    case StudyStop::IterationCap: return "iteration_cap";
    case StudyStop::NumericalFailure: return "numerical_failure";
  }
  return "unknown";
}

CarStudyResult car_rfggd_study(const CarStudySpec& spec, update::RfggdConfig cfg) {
  spec.validate(cfg.box);
  cfg.lookahead = spec.horizon_cap;
  cfg.validate();
  const plant::CarModel model = plant::car_model(spec.c, spec.dt);
  const Vec x0 = Vec::Constant(1, spec.x0);

  CarStudyResult res;
  for (const auto& init : spec.inits) {
    InitPath path;
    path.init = init;
    ParamVector theta = plant::car_params(init.first, init.second);
    rollout::RolloutTrace tr = rollout::rollout(model, x0, spec.t0, theta, spec.horizon_cap);

    auto record = [&](int it, StudyPhase phase, bool accepted) {
      StudyIterate s;
      s.iteration = it;
      s.phase = phase;
      s.theta = theta;
      s.feasible_steps = tr.feasible_steps();
      s.accepted = accepted;
      s.objective = rollout::objective(tr, model);
      path.iterates.push_back(std::move(s));
    };
    record(0, StudyPhase::Init, true);

    try {
      int it = 1;
      for (; it <= spec.max_iters; ++it) {
        if (tr.termination == rollout::Termination::NumericalFailure) {
          path.stop = StudyStop::NumericalFailure;
          path.error = tr.error;
          break;
        }
        if (!tr.complete()) {
          update::Case2Step st = update::case2_step(model, x0, spec.t0, tr, cfg);
          if (!st.accepted) {
            path.stop = StudyStop::Stalled;
            break;
          }
          theta = st.theta;
          tr = std::move(st.trace);
          path.case2_history.push_back(tr.feasible_steps());
          record(it, StudyPhase::Case2, true);
        } else {
          update::FeasibleUpdate up = update::update_feasible(model, x0, spec.t0, theta, spec.horizon_cap, cfg);
          if (up.outcome == update::UpdateOutcome::Stationary) {
            path.stop = StudyStop::Converged;
            break;
          }
          if (up.outcome == update::UpdateOutcome::BacktrackExhausted) {
            path.stop = StudyStop::BacktrackExhausted;
            break;
          }
          theta = up.theta;
          tr = std::move(up.after);
          record(it, StudyPhase::Case1, true);
        }
      }
      if (it > spec.max_iters) path.stop = StudyStop::IterationCap;
    } catch (const NumericalFailure& e) {
      path.stop = StudyStop::NumericalFailure;
      path.error = e.what();
    }
    res.paths.push_back(std::move(path));
  }
  return res;
}

FollowerStudy follower_study(const plant::UnicycleModel& model, const Vec& x0, const ParamVector& theta0,
                             Index sim_steps, const update::RfggdConfig& cfg) {
  FollowerStudy s;
  s.adaptive = update::online_adapt(model, x0, theta0, sim_steps, cfg);
  update::RfggdConfig fixed = cfg;
  fixed.learning_rate = 0.0;
  s.baseline = update::online_adapt(model, x0, theta0, sim_steps, fixed);
  for (const auto& st : s.adaptive.steps) s.adaptive_rewards.push_back(model.reward(st.time, st.state, st.input).value);
  for (const auto& st : s.baseline.steps) s.baseline_rewards.push_back(model.reward(st.time, st.state, st.input).value);
  return s;
}

void write_grid_csv(std::ostream& os, const GridResult& g) {
  csv::Writer w(os);
  w.header({"a_index", "b_index", "a", "b", "feasible_steps"});
  for (Index i = 0; i < g.a_values.size(); ++i)
    for (Index j = 0; j < g.b_values.size(); ++j) {
      w.field(i).field(j).field(g.a_values(i)).field(g.b_values(j)).field(g.feasible_steps(i, j));
      w.end_row();
    }
}

void write_grid_svg(std::ostream& os, const GridResult& g) {
  const Index na = g.a_values.size();
  const Index nb = g.b_values.size();
  constexpr int cell = 8;
  constexpr int margin = 40;
  const Index width = 2 * margin + nb * cell;
  const Index height = 2 * margin + na * cell;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
  // a grows upward, b grows to the right; darker = fewer feasible steps
  for (Index i = 0; i < na; ++i)
    for (Index j = 0; j < nb; ++j) {
      const double v = static_cast<double>(g.feasible_steps(i, j)) / static_cast<double>(g.horizon_cap);
      const int shade = static_cast<int>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)));
      os << "<rect x=\"" << margin + j * cell << "\" y=\"" << margin + (na - 1 - i) * cell << "\" width=\"" << cell
         << "\" height=\"" << cell << "\" fill=\"rgb(" << shade << ',' << shade << ",255)\"/>\n";
    }
  os << "<text x=\"" << width / 2 << "\" y=\"" << height - 10 << "\" text-anchor=\"middle\">b</text>\n";
  os << "<text x=\"12\" y=\"" << height / 2 << "\">a</text>\n";
  os << "<text x=\"" << margin << "\" y=\"24\">c = " << csv::format_double(g.c)
     << ", x0 = " << csv::format_double(g.x0) << "</text>\n";
  os << "</svg>\n";
}

void write_iterates_csv(std::ostream& os, const CarStudyResult& r) {
  csv::Writer w(os);
  w.header({"init", "iteration", "phase", "a", "b", "feasible_steps", "objective"});
  for (std::size_t p = 0; p < r.paths.size(); ++p)
    for (const auto& s : r.paths[p].iterates) {
      const Vec th = s.theta.flatten();
      w.field(static_cast<Index>(p)).field(s.iteration).field(to_string(s.phase));
      w.field(th(0)).field(th(1)).field(s.feasible_steps).field(s.objective);
      w.end_row();
    }
}

void write_feasibility_csv(std::ostream& os, const CarStudyResult& r) {
  csv::Writer w(os);
  w.header({"init", "a0", "b0", "iteration", "feasible_steps", "stop"});
  for (std::size_t p = 0; p < r.paths.size(); ++p) {
    const InitPath& path = r.paths[p];
    for (const auto& s : path.iterates) {
      w.field(static_cast<Index>(p)).field(path.init.first).field(path.init.second);
      w.field(s.iteration).field(s.feasible_steps).field(to_string(path.stop));
      w.end_row();
    }
  }
}

void write_online_csv(std::ostream& os, const update::OnlineResult& r) {
  if (r.steps.empty()) {
    csv::Writer(os).header({"step", "t"});
    return;
  }
  const auto& s0 = r.steps.front();
  std::vector<std::string> cols{"step", "t"};
  for (Index i = 0; i < s0.state.size(); ++i) cols.push_back("x" + std::to_string(i));
  for (Index i = 0; i < s0.input.size(); ++i) cols.push_back("u" + std::to_string(i));
  const Index nth = s0.theta.size();
  for (Index i = 0; i < nth; ++i) cols.push_back("theta" + std::to_string(i));
  for (Index i = 0; i < s0.barriers.size(); ++i) cols.push_back("h" + std::to_string(i + 1));
  for (const char* c : {"horizon_objective", "lookahead_feasible", "qp_feasible", "note"}) cols.emplace_back(c);

  csv::Writer w(os);
  w.header(cols);
  for (std::size_t k = 0; k < r.steps.size(); ++k) {
    const auto& s = r.steps[k];
    w.field(static_cast<Index>(k)).field(s.time).fields(s.state).fields(s.input).fields(s.theta.flatten());
    w.fields(s.barriers).field(s.horizon_objective).field(s.lookahead_feasible).field(s.qp_feasible ? 1 : 0);
    w.field(std::string_view(s.annotation));
    w.end_row();
  }
}

void write_rewards_csv(std::ostream& os, const FollowerStudy& s) {
  csv::Writer w(os);
  w.header({"step", "t", "adaptive_horizon_objective", "baseline_horizon_objective", "adaptive_reward",
            "baseline_reward"});
  const std::size_t n = std::min(s.adaptive.steps.size(), s.baseline.steps.size());
  for (std::size_t k = 0; k < n; ++k) {
    w.field(static_cast<Index>(k)).field(s.adaptive.steps[k].time);
    w.field(s.adaptive.steps[k].horizon_objective).field(s.baseline.steps[k].horizon_objective);
    w.field(s.adaptive_rewards[k]).field(s.baseline_rewards[k]);
    w.end_row();
  }
}

}  // namespace rfggd::experiments
