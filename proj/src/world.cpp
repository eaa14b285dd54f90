#include "sarlora/world.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace sarlora::world {

Action action_from_code(int c) {
  if (c < 0 || c >= kActionCount) throw std::invalid_argument("action code out of range: " + std::to_string(c));
  return static_cast<Action>(c);
}

char action_letter(Action a) {
  constexpr char letters[] = {'E', 'W', 'N', 'S', 'H'};
  return letters[code(a)];
}

Action action_from_letter(char c) {
  switch (c) {
    case 'E': return Action::E;
    case 'W': return Action::W;
    case 'N': return Action::N;
    case 'S': return Action::S;
    case 'H': return Action::H;
    default: throw std::invalid_argument(std::string("unknown action letter: ") + c);
  }
}

Action opposite(Action a) {
  switch (a) {
    case Action::E: return Action::W;
    case Action::W: return Action::E;
    case Action::N: return Action::S;
    case Action::S: return Action::N;
    case Action::H: return Action::H;
  }
  return Action::H;
}

Point2 transform_point(Point2 p, int symmetry) {
  if (symmetry < 0 || symmetry >= kCompassSymmetries) throw std::invalid_argument("world: symmetry index out of range");
  if (symmetry >= 4) p.y = -p.y;
  for (int k = 0; k < symmetry % 4; ++k) p = {-p.y, p.x};
  return p;
}

Action transform_action(Action a, int symmetry) {
  if (a == Action::H) {
    if (symmetry < 0 || symmetry >= kCompassSymmetries)
      throw std::invalid_argument("world: symmetry index out of range");
    return a;
  }
  const Point2 d = transform_point(displacement(a, 1.0), symmetry);
  if (d.x > 0.5) return Action::E;
  if (d.x < -0.5) return Action::W;
  return d.y > 0.0 ? Action::N : Action::S;
}

Point2 displacement(Action a, double step_m) {
  switch (a) {
    case Action::E: return {step_m, 0.0};
    case Action::W: return {-step_m, 0.0};
    case Action::N: return {0.0, step_m};
    case Action::S: return {0.0, -step_m};
    case Action::H: return {0.0, 0.0};
  }
  return {};
}

std::string_view terrain_name(Terrain t) { return t == Terrain::plain ? "plain" : "canyon"; }

bool Corridor::contains(Point2 p) const { return p.x >= x_min && p.x <= x_max && p.y >= y_min && p.y <= y_max; }

double Corridor::half_width() const {
  const double wx = x_max - x_min;
  const double wy = y_max - y_min;
  return 0.5 * std::min(wx, wy);
}

double Corridor::axis_offset(Point2 p) const {
  const double wx = x_max - x_min;
  const double wy = y_max - y_min;
  if (wx >= wy) return std::abs(p.y - 0.5 * (y_min + y_max));
  return std::abs(p.x - 0.5 * (x_min + x_max));
}

double ScenarioConfig::resolved_r_target() const {
  if (r_target_dbm) return *r_target_dbm;
  const double d = std::sqrt(altitude_m * altitude_m + found_radius_m * found_radius_m);
  // Routed through the report round trip so a noiseless reward at exactly
  // found_radius_m compares equal, not greater.
  const auto link = radio::to_rssi_snr(radio::far_field_power(d, radio), radio);
  return radio::recover_signal_power(link.rssi_dbm, link.snr_db);
}

void ScenarioConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("scenario: " + what); };
  if (!(sai_radius_m > 0.0)) fail("sai_radius_m must be > 0");
  if (std::hypot(poi.x, poi.y) > sai_radius_m) fail("poi must lie inside the SAI");
  if (std::hypot(uav_start.x, uav_start.y) > sai_radius_m) fail("uav_start must lie inside the SAI");
  if (!(altitude_m > 0.0)) fail("altitude_m must be > 0");
  if (!(speed_mps > 0.0)) fail("speed_mps must be > 0");
  if (!(slot_s > 0.0)) fail("slot_s must be > 0");
  if (max_slots < 1) fail("max_slots must be >= 1");
  if (max_slots != static_cast<int>(std::floor(battery_s / slot_s)))
    fail("max_slots must equal floor(battery_s / slot_s)");
  if (!(found_radius_m >= 0.5 * step_m())) fail("found_radius_m must be >= speed_mps * slot_s / 2");
  if (terrain == Terrain::canyon) {
    if (!(corridor.x_max > corridor.x_min && corridor.y_max > corridor.y_min))
      fail("corridor must have positive extent");
    if (!(wall_loss_db >= 0.0)) fail("wall_loss_db must be >= 0");
  }
  if (r_target_dbm && std::isnan(*r_target_dbm)) fail("r_target_dbm must not be NaN");
  try {
    radio.validate();
  } catch (const std::invalid_argument& e) {
    fail(e.what());
  }
  if (altitude_m < radio.ref_distance_m) fail("altitude_m must be >= radio.ref_distance_m");
}

ScenarioConfig ScenarioConfig::plain() { return ScenarioConfig{}; }

ScenarioConfig ScenarioConfig::canyon() {
  ScenarioConfig cfg;
  cfg.terrain = Terrain::canyon;
  cfg.radio.path_loss_exponent = 3.5;
  cfg.radio.rician_k_db = 0.0;
  cfg.radio.shadow_sigma_db = 3.0;
  cfg.radio.tx_power_dbm = 20.0;
  cfg.corridor = {cfg.poi.x - 600.0, cfg.poi.x + 600.0, cfg.poi.y - 100.0, cfg.poi.y + 100.0};
  return cfg;
}

double reward_of(const GatewayMessage& m) { return radio::recover_signal_power(m.rssi_dbm, m.snr_db); }

double episodic_return(const Trajectory& traj, double discount) {
  double total = 0.0;
  double w = 1.0;
  for (const auto& s : traj.steps) {
    w *= discount;
    total += w * s.reward;
  }
  return total;
}

double terrain_loss_db(const ScenarioConfig& cfg, Point2 uav) {
  if (cfg.terrain != Terrain::canyon) return 0.0;
  if (!cfg.corridor.contains(cfg.poi)) return 0.0;
  return cfg.corridor.axis_offset(uav) > cfg.corridor.half_width() ? cfg.wall_loss_db : 0.0;
}

Environment::Environment(ScenarioConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  r_target_ = cfg_.resolved_r_target();
}

GatewayMessage Environment::observe() {
  const Point3 p{uav_.x, uav_.y, cfg_.altitude_m};
  const double power =
      radio::received_power(p, cfg_.poi, cfg_.radio, cfg_.sai_radius_m, rng_) - terrain_loss_db(cfg_, uav_);
  const auto link = radio::to_rssi_snr(power, cfg_.radio);
  return {link.rssi_dbm, link.snr_db, uav_.x, uav_.y};
}

GatewayMessage Environment::reset(std::uint64_t seed) {
  rng_.seed(mix_seed(seed, 0x5EA7C4ULL));
  uav_ = cfg_.uav_start;
  slot_ = 0;
  started_ = true;
  done_ = false;
  reached_target_ = false;
  last_ = observe();
  return last_;
}

StepResult Environment::step(Action a) {
  if (!started_) throw std::logic_error("step() before reset()");
  if (done_) throw std::logic_error("step() on a finished episode");
  const Point2 d = displacement(a, cfg_.step_m());
  const Point2 next{uav_.x + d.x, uav_.y + d.y};
  if (std::hypot(next.x, next.y) <= cfg_.sai_radius_m) uav_ = next;
  ++slot_;
  last_ = observe();
  const double reward = reward_of(last_);
  reached_target_ = reward > r_target_;
  done_ = reached_target_ || slot_ >= cfg_.max_slots;
  return {last_, reward, done_};
}

double PrivilegedView::horizontal_distance() const { return distance(env_->uav_, env_->cfg_.poi); }

double PrivilegedView::slant_distance() const {
  const double h = horizontal_distance();
  return std::sqrt(h * h + env_->cfg_.altitude_m * env_->cfg_.altitude_m);
}

}  // namespace sarlora::world
