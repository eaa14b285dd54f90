#include "sarlora/baselines.hpp"

#include <cmath>
#include <stdexcept>

namespace sarlora::baselines {

Action optimal_action(Point2 uav, Point2 poi, double found_radius_m) {
  const double dx = poi.x - uav.x;
  const double dy = poi.y - uav.y;
  if (std::hypot(dx, dy) < found_radius_m) return Action::H;
  // Moving along the dominant axis reduces distance the most.
  if (std::abs(dx) >= std::abs(dy)) return dx >= 0.0 ? Action::E : Action::W;
  return dy >= 0.0 ? Action::N : Action::S;
}

namespace {

Action committed_or_hover(const GreedyState& s) { return s.committed_direction.value_or(Action::H); }

}  // namespace

GreedyDecision greedy_action(const GreedyState& state, double last_power, Rng& rng, double sense_probability) {
  GreedyDecision out{Action::H, state};
  GreedyState& s = out.state;

  if (s.mode == GreedyMode::acting && bernoulli(rng, sense_probability)) {
    s.mode = GreedyMode::sensing;
    s.phase_step = 0;
    s.sense_log.fill(std::nullopt);
  }

  if (s.mode == GreedyMode::sensing) {
    // An odd step means the previous slot was a probe: its power is now known.
    if (s.phase_step % 2 == 1) s.sense_log[static_cast<std::size_t>(s.phase_step / 2)] = last_power;
    if (s.phase_step < 8) {
      const Action probe = kProbeOrder[static_cast<std::size_t>(s.phase_step / 2)];
      out.action = s.phase_step % 2 == 0 ? probe : world::opposite(probe);
      ++s.phase_step;
      return out;
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < kProbeOrder.size(); ++i)
      if (*s.sense_log[i] > *s.sense_log[best]) best = i;
    s.committed_direction = kProbeOrder[best];
    s.mode = GreedyMode::acting;
    s.phase_step = 0;
  }

  out.action = committed_or_hover(s);
  return out;
}

RunRecord run_optimal(world::Environment& env, std::uint64_t seed) {
  env.reset(seed);
  RunLogger log(env, "optimal", seed);
  try {
    const world::PrivilegedView view(env);
    while (!env.done()) {
      const Action a = optimal_action(view.uav(), view.poi(), env.config().found_radius_m);
      log.log(a, env.step(a));
    }
  } catch (const std::exception& e) {
    return log.fail(e.what());
  }
  return log.finish(env);
}

RunRecord run_greedy(world::Environment& env, std::uint64_t seed, double sense_probability) {
  const auto first = env.reset(seed);
  RunLogger log(env, "greedy", seed);
  Rng rng(mix_seed(seed, 0x6EEDULL));
  GreedyState state;
  double last = radio::recover_signal_power(first.rssi_dbm, first.snr_db);
  try {
    while (!env.done()) {
      auto d = greedy_action(state, last, rng, sense_probability);
      state = d.state;
      const auto r = env.step(d.action);
      log.log(d.action, r);
      last = r.reward;
    }
  } catch (const std::exception& e) {
    return log.fail(e.what());
  }
  return log.finish(env);
}

}  // namespace sarlora::baselines
