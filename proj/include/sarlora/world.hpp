#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "sarlora/geometry.hpp"
#include "sarlora/radio.hpp"
#include "sarlora/random.hpp"

namespace sarlora::world {

enum class Action : std::uint8_t { E = 0, W = 1, N = 2, S = 3, H = 4 };
inline constexpr int kActionCount = 5;
inline constexpr std::array<Action, kActionCount> kAllActions{Action::E, Action::W, Action::N, Action::S,
                                                              Action::H};

constexpr int code(Action a) { return static_cast<int>(a); }
Action action_from_code(int c);
char action_letter(Action a);
Action action_from_letter(char c);
Action opposite(Action a);
Point2 displacement(Action a, double step_m);

// The eight symmetries of the compass: k quarter turns counter-clockwise
// (k = symmetry % 4), preceded by a mirror through the x axis when
// symmetry >= 4. Symmetry 0 is the identity.
inline constexpr int kCompassSymmetries = 8;
Action transform_action(Action a, int symmetry);
Point2 transform_point(Point2 p, int symmetry);

enum class Terrain { plain, canyon };
std::string_view terrain_name(Terrain t);

// Axis-aligned canyon corridor. Its axis runs along the longer side.
struct Corridor {
  double x_min = -1000.0;
  double x_max = 1000.0;
  double y_min = -100.0;
  double y_max = 100.0;

  bool contains(Point2 p) const;
  // Horizontal offset of p from the corridor axis and half the corridor width.
  double axis_offset(Point2 p) const;
  double half_width() const;
};

struct ScenarioConfig {
  double sai_radius_m = 2000.0;
  Point2 poi{1600.0, 0.0};
  Point2 uav_start{0.0, 0.0};
  double altitude_m = 300.0;
  double speed_mps = 20.0;
  double slot_s = 2.0;
  double battery_s = 1200.0;
  int max_slots = 600;
  Terrain terrain = Terrain::plain;
  Corridor corridor{};
  double wall_loss_db = 20.0;
  radio::RadioGeometry radio{};
  double found_radius_m = 40.0;
  // Unset means the noiseless far-field power at sqrt(altitude^2 + found_radius^2).
  std::optional<double> r_target_dbm;

  double step_m() const { return speed_mps * slot_s; }
  double resolved_r_target() const;
  // Throws std::invalid_argument naming the violated invariant.
  void validate() const;

  static ScenarioConfig plain();
  static ScenarioConfig canyon();
};

// Over-the-air report m_t = [rssi, snr, x, y].
struct GatewayMessage {
  double rssi_dbm = 0.0;
  double snr_db = 0.0;
  double x_m = 0.0;
  double y_m = 0.0;
  friend bool operator==(const GatewayMessage&, const GatewayMessage&) = default;
};

double reward_of(const GatewayMessage& m);

struct TrajectoryStep {
  Action action = Action::H;
  GatewayMessage message;
  double reward = 0.0;
};

struct Trajectory {
  int start_slot = 0;
  std::vector<TrajectoryStep> steps;
};

/// Discounted return sum_{i=1..n} discount^i r_i. Empty trajectories return 0.
double episodic_return(const Trajectory& traj, double discount);

struct StepResult {
  GatewayMessage message;
  double reward = 0.0;
  bool done = false;
};

class PrivilegedView;

// The search POMDP. Policies see GatewayMessages only; ground truth is
// reachable through PrivilegedView.
class Environment {
 public:
  explicit Environment(ScenarioConfig cfg);

  GatewayMessage reset(std::uint64_t seed);
  StepResult step(Action a);

  int slot() const { return slot_; }
  bool done() const { return done_; }
  bool reached_target() const { return reached_target_; }
  int remaining_slots() const { return cfg_.max_slots - slot_; }
  const GatewayMessage& last_message() const { return last_; }
  const ScenarioConfig& config() const { return cfg_; }

 private:
  friend class PrivilegedView;

  GatewayMessage observe();

  ScenarioConfig cfg_;
  double r_target_ = 0.0;
  Point2 uav_{};
  Rng rng_{};
  GatewayMessage last_{};
  int slot_ = 0;
  bool started_ = false;
  bool done_ = false;
  bool reached_target_ = false;
};

// Ground-truth accessors for baselines and metrics only.
class PrivilegedView {
 public:
  explicit PrivilegedView(const Environment& env) : env_(&env) {}
  Point2 poi() const { return env_->cfg_.poi; }
  Point2 uav() const { return env_->uav_; }
  double horizontal_distance() const;
  double slant_distance() const;

 private:
  const Environment* env_;
};

/// Extra NLoS loss for the canyon geometry; zero in the plain terrain.
double terrain_loss_db(const ScenarioConfig& cfg, Point2 uav);

}  // namespace sarlora::world
