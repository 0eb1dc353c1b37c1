#pragma once

#include "rfggd/car.hpp"
#include "rfggd/rfggd.hpp"
#include "rfggd/unicycle.hpp"

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace rfggd::experiments {

/// count points evenly spaced over [min, max].
struct Range {
  double min = 1e-3;
  double max = 5.0;
  Index count = 50;

  Vec values() const;
};

struct GridSpec {
  Range a_range;
  Range b_range;
  double c = 0.3;
  double x0 = 0.5;
  double t0 = 0.0;
  Index horizon_cap = 100;
  double dt = 0.01;

  /// Throws std::invalid_argument on count < 2, min > max, a range outside
  /// the box, c >= 1, dt <= 0 or horizon_cap < 1.
  void validate(const ParamBox& box = {}) const;
};

using IndexMatrix = Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic>;

struct GridResult {
  IndexMatrix feasible_steps;  // rows follow a, columns follow b
  Vec a_values;
  Vec b_values;
  double c = 0.0;
  double x0 = 0.0;
  double dt = 0.0;
  Index horizon_cap = 0;

  bool contains(Index v) const { return (feasible_steps.array() == v).any(); }
  /// True when the square matrix equals its (a <-> b) transpose.
  bool symmetric() const;
};

/// Feasible steps of the car policy for every (a, b) cell. Cells are
/// independent rollouts evaluated on `threads` workers (0 = hardware).
GridResult car_grid(const GridSpec& spec, unsigned threads = 0);

/// Value of a single cell, exactly as car_grid computes it.
Index car_cell(const GridSpec& spec, double a, double b);

struct CarStudySpec {
  double c = 0.3;
  double x0 = 0.5;
  double t0 = 0.0;
  double dt = 0.01;
  Index horizon_cap = 100;
  int max_iters = 50;  // total iterations per init
  std::vector<std::pair<double, double>> inits{{0.001, 1.0}, {0.01, 0.01}};

  void validate(const ParamBox& box = {}) const;
};

enum class StudyPhase { Init, Case2, Case1 };

const char* to_string(StudyPhase p);

struct StudyIterate {
  int iteration = 0;
  StudyPhase phase = StudyPhase::Init;
  ParamVector theta;
  Index feasible_steps = 0;
  bool accepted = false;
  double objective = 0.0;  // only meaningful when feasible to the cap
};

enum class StudyStop { Converged, Stalled, BacktrackExhausted, IterationCap, NumericalFailure };

const char* to_string(StudyStop s);

struct InitPath {
  std::pair<double, double> init;
  std::vector<StudyIterate> iterates;  // iterates[0] is the initial point
  std::vector<Index> case2_history;    // feasible_steps after each Case-2 iteration
  StudyStop stop = StudyStop::IterationCap;
  std::string error;
};

struct CarStudyResult {
  std::vector<InitPath> paths;
};

/// For every initial (a, b): Case-2 steps while the car is not feasible up to
/// the cap, then Case-1 steps on J until stationary, stalled or out of budget.
CarStudyResult car_rfggd_study(const CarStudySpec& spec, update::RfggdConfig cfg);

struct FollowerStudy {
  update::OnlineResult adaptive;
  update::OnlineResult baseline;  // same start, learning_rate = 0
  std::vector<double> adaptive_rewards;  // stage reward at each step
  std::vector<double> baseline_rewards;
};

FollowerStudy follower_study(const plant::UnicycleModel& model, const Vec& x0, const ParamVector& theta0,
                             Index sim_steps, const update::RfggdConfig& cfg);

// CSV emitters; every file starts with a header naming each column.
void write_grid_csv(std::ostream& os, const GridResult& g);
void write_grid_svg(std::ostream& os, const GridResult& g);
void write_iterates_csv(std::ostream& os, const CarStudyResult& r);
void write_feasibility_csv(std::ostream& os, const CarStudyResult& r);
void write_online_csv(std::ostream& os, const update::OnlineResult& r);
void write_rewards_csv(std::ostream& os, const FollowerStudy& s);

}  // namespace rfggd::experiments
