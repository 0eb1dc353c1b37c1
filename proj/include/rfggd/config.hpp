#pragma once

#include "rfggd/experiments.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace rfggd::config {

inline constexpr int kSchemaVersion = 1;

enum class Command { CarGrid, CarRfggd, Follow };

const char* to_string(Command c);

struct FollowSpec {
  plant::UnicycleConfig model;
  Vec initial_state = Vec::Zero(3);  // follower at the origin heading +x
  double theta0 = 0.5;               // initial value of every rate
  Index sim_steps = 500;
};

/// Everything one CLI run needs. Car sections share `car_c` and `car_dt`.
struct RunConfig {
  int schema_version = kSchemaVersion;
  std::string model;  // "car" or "unicycle"; empty means "whatever the command needs"
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "out";
  double car_c = 0.3;
  double car_dt = 0.01;
  update::RfggdConfig rfggd;
  experiments::GridSpec grid;
  bool grid_svg = false;
  experiments::CarStudySpec study;
  int random_inits = 0;  // extra study inits drawn from the seed
  FollowSpec follow;
};

/// Parse a JSON document. Unknown keys, wrong types and out-of-range values
/// throw ConfigError with a message "<source>:<line>: <json path>: <reason>".
RunConfig parse(std::string_view text, std::string_view source = "config");

/// Read and parse a file; never writes to it.
RunConfig load(const std::filesystem::path& path);

/// Cross-section checks for one command (model selector, box membership).
/// Also fills derived fields: grid/study c and dt, seeded random inits.
void prepare(RunConfig& cfg, Command cmd);

}  // namespace rfggd::config
