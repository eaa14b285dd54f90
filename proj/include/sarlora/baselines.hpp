#pragma once

#include <array>
#include <cstdint>
#include <optional>

#include "sarlora/random.hpp"
#include "sarlora/record.hpp"
#include "sarlora/world.hpp"

namespace sarlora::baselines {

using world::Action;

// Privileged mover: the cardinal step that most reduces horizontal distance,
// ties broken E > W > N > S, hover once strictly inside found_radius.
Action optimal_action(Point2 uav, Point2 poi, double found_radius_m);

inline constexpr double kSenseProbability = 0.1;

enum class GreedyMode { sensing, acting };

// Probe order of one sense phase. Each probe is followed by its opposite.
inline constexpr std::array<Action, 4> kProbeOrder{Action::N, Action::E, Action::S, Action::W};

struct GreedyState {
  GreedyMode mode = GreedyMode::sensing;
  int phase_step = 0;  // 0..7 within a sense phase: even = probe, odd = return
  std::array<std::optional<double>, 4> sense_log{};  // indexed like kProbeOrder
  std::optional<Action> committed_direction;
};

struct GreedyDecision {
  Action action = Action::H;
  GreedyState state;
};

// last_power is the reward observed after the previous action.
GreedyDecision greedy_action(const GreedyState& state, double last_power, Rng& rng,
                             double sense_probability = kSenseProbability);

RunRecord run_optimal(world::Environment& env, std::uint64_t seed);
RunRecord run_greedy(world::Environment& env, std::uint64_t seed, double sense_probability = kSenseProbability);

}  // namespace sarlora::baselines
