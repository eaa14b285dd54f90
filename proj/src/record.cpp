#include "sarlora/record.hpp"

#include <charconv>

namespace sarlora {

std::vector<Point2> RunRecord::positions() const {
  std::vector<Point2> p;
  p.reserve(rows.size() + 1);
  p.push_back(start);
  for (const auto& r : rows) p.push_back({r.x_m, r.y_m});
  return p;
}

RunLogger::RunLogger(const world::Environment& env, std::string policy, std::uint64_t seed) : env_(&env) {
  rec_.summary.policy = std::move(policy);
  rec_.summary.seed = seed;
  rec_.start = world::PrivilegedView(env).uav();
  rec_.summary.reached_found_radius = world::PrivilegedView(env).horizontal_distance() <= env.config().found_radius_m;
}

void RunLogger::log(world::Action a, const world::StepResult& r) {
  const world::PrivilegedView truth(*env_);
  cumulative_ += r.reward;
  RunRow row;
  row.slot = env_->slot();
  row.x_m = r.message.x_m;
  row.y_m = r.message.y_m;
  row.action = a;
  row.rssi_dbm = r.message.rssi_dbm;
  row.snr_db = r.message.snr_db;
  row.reward_dbm = r.reward;
  row.dist_m = truth.horizontal_distance();
  row.cumulative_return = cumulative_;
  if (row.dist_m <= env_->config().found_radius_m) rec_.summary.reached_found_radius = true;
  rec_.rows.push_back(row);
}

RunRecord RunLogger::finish(const world::Environment& env) {
  if (env.reached_target()) rec_.summary.slots_to_find = env.slot();
  rec_.summary.mean_reward = rec_.rows.empty() ? 0.0 : cumulative_ / static_cast<double>(rec_.rows.size());
  return std::move(rec_);
}

RunRecord RunLogger::fail(const std::string& error) {
  rec_.summary.status = RunStatus::failed;
  rec_.summary.error = error;
  rec_.summary.slots_to_find.reset();
  rec_.summary.mean_reward = rec_.rows.empty() ? 0.0 : cumulative_ / static_cast<double>(rec_.rows.size());
  return std::move(rec_);
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_run_csv(std::ostream& out, const RunRecord& rec) {
  out << kRunCsvHeader << '\n';
  for (const auto& r : rec.rows) {
    out << r.slot << ',' << format_double(r.x_m) << ',' << format_double(r.y_m) << ',' << world::action_letter(r.action)
        << ',' << format_double(r.rssi_dbm) << ',' << format_double(r.snr_db) << ',' << format_double(r.reward_dbm)
        << ',' << format_double(r.dist_m) << ',' << format_double(r.cumulative_return) << '\n';
  }
}

}  // namespace sarlora
