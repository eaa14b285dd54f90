#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "sarlora/world.hpp"

namespace sarlora {

struct RunRow {
  int slot = 0;
  double x_m = 0.0;
  double y_m = 0.0;
  world::Action action = world::Action::H;
  double rssi_dbm = 0.0;
  double snr_db = 0.0;
  double reward_dbm = 0.0;
  double dist_m = 0.0;  // privileged, for analysis only
  double cumulative_return = 0.0;
};

enum class RunStatus { ok, failed };

struct RunSummary {
  std::string policy;
  std::uint64_t seed = 0;
  std::string config_hash;
  RunStatus status = RunStatus::ok;
  std::string error;
  // Slot at which the reward first exceeded the target; empty if never.
  std::optional<int> slots_to_find;
  // Whether the UAV came within found_radius_m of the POI at any slot.
  bool reached_found_radius = false;
  double mean_reward = 0.0;
};

struct RunRecord {
  std::vector<RunRow> rows;
  RunSummary summary;
  Point2 start{};

  // Horizontal positions per slot, slot 0 being the start point.
  std::vector<Point2> positions() const;
};

// Incrementally builds a record from an episode. The environment must have
// been reset; each call to log() appends the row for the slot just stepped.
class RunLogger {
 public:
  RunLogger(const world::Environment& env, std::string policy, std::uint64_t seed);

  void log(world::Action a, const world::StepResult& r);
  RunRecord finish(const world::Environment& env);
  RunRecord fail(const std::string& error);

 private:
  const world::Environment* env_;
  RunRecord rec_;
  double cumulative_ = 0.0;
};

inline constexpr const char* kRunCsvHeader = "slot,x_m,y_m,action,rssi_dbm,snr_db,reward_dbm,dist_m,return";

// Shortest round-trip decimal form, identical for identical doubles.
std::string format_double(double v);

void write_run_csv(std::ostream& out, const RunRecord& rec);

}  // namespace sarlora
