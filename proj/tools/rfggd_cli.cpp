// rfggd: run the car grid, the car parameter-descent study or the
// leader-follower comparison from a JSON config.

#include "rfggd/config.hpp"
#include "rfggd/csv.hpp"
#include "rfggd/experiments.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

namespace {

namespace ex = rfggd::experiments;
using rfggd::config::Command;
using rfggd::config::RunConfig;

enum Exit : int { kOk = 0, kConfigError = 2, kNumericalFailure = 3, kStalled = 4 };

struct Options {
  std::string config;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

void write(const std::filesystem::path& dir, const char* name, const std::function<void(std::ostream&)>& body) {
  rfggd::csv::write_atomic(dir / name, body);
}

int run_car_grid(const RunConfig& cfg, bool quiet) {
  const ex::GridResult g = ex::car_grid(cfg.grid);
  write(cfg.output_dir, "grid.csv", [&](std::ostream& os) { ex::write_grid_csv(os, g); });
  if (cfg.grid_svg) write(cfg.output_dir, "grid.svg", [&](std::ostream& os) { ex::write_grid_svg(os, g); });
  if (!quiet) {
    std::printf("car grid c=%g x0=%g: %ldx%ld cells, min %ld, max %ld, symmetric %s\n", g.c, g.x0,
                static_cast<long>(g.feasible_steps.rows()), static_cast<long>(g.feasible_steps.cols()),
                static_cast<long>(g.feasible_steps.minCoeff()), static_cast<long>(g.feasible_steps.maxCoeff()),
                g.symmetric() ? "yes" : "no");
  }
  return kOk;
}

int run_car_rfggd(const RunConfig& cfg, bool quiet) {
  const ex::CarStudyResult r = ex::car_rfggd_study(cfg.study, cfg.rfggd);
  write(cfg.output_dir, "iterates.csv", [&](std::ostream& os) { ex::write_iterates_csv(os, r); });
  write(cfg.output_dir, "feasibility.csv", [&](std::ostream& os) { ex::write_feasibility_csv(os, r); });
  int code = kOk;
  for (const auto& p : r.paths) {
    const auto& last = p.iterates.back();
    if (!quiet) {
      const rfggd::Vec th = last.theta.flatten();
      std::printf("init (%g, %g): K %ld -> %ld after %zu iterations, theta (%g, %g), %s\n", p.init.first,
                  p.init.second, static_cast<long>(p.iterates.front().feasible_steps),
                  static_cast<long>(last.feasible_steps), p.iterates.size() - 1, th(0), th(1), ex::to_string(p.stop));
    }
    if (p.stop == ex::StudyStop::NumericalFailure) {
      std::fprintf(stderr, "numerical failure: %s\n", p.error.c_str());
      code = kNumericalFailure;
    } else if ((p.stop == ex::StudyStop::Stalled || p.stop == ex::StudyStop::BacktrackExhausted) && code == kOk) {
      code = kStalled;
    }
  }
  return code;
}

int run_follow(const RunConfig& cfg, bool quiet) {
  const rfggd::plant::UnicycleModel model = rfggd::plant::unicycle_model(cfg.follow.model);
  const rfggd::ParamVector theta0 = rfggd::plant::uniform_params(model, cfg.follow.theta0);
  const ex::FollowerStudy s =
      ex::follower_study(model, cfg.follow.initial_state, theta0, cfg.follow.sim_steps, cfg.rfggd);
  write(cfg.output_dir, "adaptive.csv", [&](std::ostream& os) { ex::write_online_csv(os, s.adaptive); });
  write(cfg.output_dir, "baseline.csv", [&](std::ostream& os) { ex::write_online_csv(os, s.baseline); });
  write(cfg.output_dir, "rewards.csv", [&](std::ostream& os) { ex::write_rewards_csv(os, s); });
  if (!quiet) {
    std::printf("adaptive: total J %g, min barrier %g\n", s.adaptive.total_objective(), s.adaptive.min_barrier());
    std::printf("fixed:    total J %g, min barrier %g\n", s.baseline.total_objective(), s.baseline.min_barrier());
  }
  int code = kOk;
  for (const auto& st : s.adaptive.steps) {
    if (st.annotation.find("numerical_failure") != std::string::npos) return kNumericalFailure;
    if (st.annotation.find("stall_detected") != std::string::npos) code = kStalled;
  }
  return code;
}

int run(Command cmd, const Options& opt) {
  RunConfig cfg;
  try {
    cfg = rfggd::config::load(opt.config);
    if (opt.out) cfg.output_dir = *opt.out;
    if (opt.seed) cfg.seed = *opt.seed;
    rfggd::config::prepare(cfg, cmd);
  } catch (const rfggd::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfigError;
  }
  try {
    std::filesystem::create_directories(cfg.output_dir);
    switch (cmd) {
      case Command::CarGrid: return run_car_grid(cfg, opt.quiet);
      case Command::CarRfggd: return run_car_rfggd(cfg, opt.quiet);
      case Command::Follow: return run_follow(cfg, opt.quiet);
    }
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfigError;
  } catch (const rfggd::NumericalFailure& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kNumericalFailure;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Recursive-feasibility-guided gradient descent for CBF-CLF QP controllers"};
  app.require_subcommand(1);
  Options opt;

  auto add = [&](const char* name, const char* help) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", opt.config, "JSON run configuration")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", opt.out, "Output directory (overrides output_dir)");
    sub->add_option("--seed", opt.seed, "Random seed (overrides seed)");
    sub->add_flag("--quiet", opt.quiet, "Suppress the summary");
    return sub;
  };
  CLI::App* grid = add("car-grid", "Feasible steps of the car policy over an (a, b) grid");
  CLI::App* study = add("car-rfggd", "Parameter descent paths for the car");
  CLI::App* follow = add("follow", "Adaptive vs fixed leader-follower run");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }
  if (grid->parsed()) return run(Command::CarGrid, opt);
  if (study->parsed()) return run(Command::CarRfggd, opt);
  if (follow->parsed()) return run(Command::Follow, opt);
  return kConfigError;
}
