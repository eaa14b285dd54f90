#include "sarlora/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>
#include <stdexcept>

#include <yaml-cpp/yaml.h>

#include "sarlora/random.hpp"
#include "sarlora/record.hpp"

namespace sarlora::config {

std::string_view policy_name(PolicyKind k) {
  switch (k) {
    case PolicyKind::optimal: return "optimal";
    case PolicyKind::greedy: return "greedy";
    case PolicyKind::rl: return "rl";
    case PolicyKind::meta: return "meta";
  }
  return "optimal";
}

PolicyKind policy_from_name(std::string_view s) {
  for (auto k : {PolicyKind::optimal, PolicyKind::greedy, PolicyKind::rl, PolicyKind::meta})
    if (policy_name(k) == s) return k;
  throw std::invalid_argument("unknown policy '" + std::string(s) + "' (expected optimal, greedy, rl or meta)");
}

namespace {

// A mapping whose keys must all be consumed.
class Section {
 public:
  Section(const YAML::Node& node, std::string path) : node_(node), path_(std::move(path)) {
    if (node_ && !node_.IsMap()) throw std::invalid_argument(path_ + ": expected a mapping");
  }
  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0 || !node_) return;
    for (const auto& kv : node_) {
      const auto key = kv.first.as<std::string>();
      if (!seen_.count(key)) throw std::invalid_argument("unknown config key '" + qualified(key) + "'");
    }
  }

  YAML::Node get(const std::string& key) {
    seen_.insert(key);
    const YAML::Node& n = node_;
    return n ? n[key] : YAML::Node(YAML::NodeType::Undefined);
  }
  std::string qualified(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  template <typename T>
  void read(const std::string& key, T& out) {
    const auto n = get(key);
    if (!n) return;
    try {
      out = n.as<T>();
    } catch (const YAML::Exception&) {
      throw std::invalid_argument("config key '" + qualified(key) + "' has a malformed value");
    }
  }

  void read_point(const std::string& key, Point2& out) {
    const auto n = get(key);
    if (!n) return;
    if (!n.IsSequence() || n.size() != 2)
      throw std::invalid_argument("config key '" + qualified(key) + "' must be a two-element list [x, y]");
    try {
      out = {n[0].as<double>(), n[1].as<double>()};
    } catch (const YAML::Exception&) {
      throw std::invalid_argument("config key '" + qualified(key) + "' has a malformed value");
    }
  }

  Section sub(const std::string& key) { return Section(get(key), qualified(key)); }

 private:
  YAML::Node node_;
  std::string path_;
  std::set<std::string> seen_;
};

policy::FeatureSet feature_from_name(const std::string& s, const std::string& key) {
  if (s == "level") return policy::FeatureSet::level;
  if (s == "change") return policy::FeatureSet::change;
  throw std::invalid_argument("config key '" + key + "' must be level or change");
}

std::string_view feature_name(policy::FeatureSet f) { return f == policy::FeatureSet::level ? "level" : "change"; }

void read_radio(Section s, radio::RadioGeometry& g) {
  s.read("tx_power_dbm", g.tx_power_dbm);
  s.read("gain_tx_db", g.gain_tx_db);
  s.read("gain_rx_db", g.gain_rx_db);
  s.read("ref_loss_db", g.ref_loss_db);
  s.read("ref_distance_m", g.ref_distance_m);
  s.read("path_loss_exponent", g.path_loss_exponent);
  s.read("shadow_sigma_db", g.shadow_sigma_db);
  s.read("shadow_decorrelation_m", g.shadow_decorrelation_m);
  s.read("rician_k_db", g.rician_k_db);
  s.read("noise_floor_dbm", g.noise_floor_dbm);
  s.read("seed", g.seed);
}

void read_scenario(Section s, world::ScenarioConfig& c, bool& corridor_given) {
  std::string terrain = "plain";
  s.read("terrain", terrain);
  if (terrain == "plain")
    c = world::ScenarioConfig::plain();
  else if (terrain == "canyon")
    c = world::ScenarioConfig::canyon();
  else
    throw std::invalid_argument("config key 'scenario.terrain' must be plain or canyon");
  s.read("sai_radius_m", c.sai_radius_m);
  s.read_point("poi", c.poi);
  s.read_point("uav_start", c.uav_start);
  s.read("altitude_m", c.altitude_m);
  s.read("speed_mps", c.speed_mps);
  s.read("slot_s", c.slot_s);
  s.read("battery_s", c.battery_s);
  s.read("max_slots", c.max_slots);
  s.read("wall_loss_db", c.wall_loss_db);
  s.read("found_radius_m", c.found_radius_m);
  if (auto n = s.get("r_target_dbm"); n) {
    try {
      c.r_target_dbm = n.as<double>();
    } catch (const YAML::Exception&) {
      throw std::invalid_argument("config key 'scenario.r_target_dbm' has a malformed value");
    }
  }
  if (auto n = s.get("corridor"); n) {
    Section k(n, "scenario.corridor");
    k.read("x_min", c.corridor.x_min);
    k.read("x_max", c.corridor.x_max);
    k.read("y_min", c.corridor.y_min);
    k.read("y_max", c.corridor.y_max);
    corridor_given = true;
  }
  read_radio(s.sub("radio"), c.radio);
}

std::string_view reference_name(train::Reference r) {
  switch (r) {
    case train::Reference::none: return "none";
    case train::Reference::window_mean: return "window_mean";
    case train::Reference::last_report: return "last_report";
  }
  return "none";
}

void read_trainer(Section s, train::TrainerConfig& t) {
  s.read("learning_rate", t.learning_rate);
  s.read("train_probability", t.train_probability);
  s.read("batch_size", t.batch_size);
  s.read("horizon", t.horizon);
  s.read("discount", t.discount);
  s.read("baseline_enabled", t.baseline_enabled);
  std::string ref = std::string(reference_name(t.reference));
  s.read("reference", ref);
  if (ref == "none")
    t.reference = train::Reference::none;
  else if (ref == "window_mean")
    t.reference = train::Reference::window_mean;
  else if (ref == "last_report")
    t.reference = train::Reference::last_report;
  else
    throw std::invalid_argument("config key 'trainer.reference' must be none, window_mean or last_report");
  std::string est = t.estimator == train::Estimator::return_to_go ? "return_to_go" : "whole_trajectory";
  s.read("estimator", est);
  if (est == "return_to_go")
    t.estimator = train::Estimator::return_to_go;
  else if (est == "whole_trajectory")
    t.estimator = train::Estimator::whole_trajectory;
  else
    throw std::invalid_argument("config key 'trainer.estimator' must be return_to_go or whole_trajectory");
  std::string opt = t.optimizer == train::Optimizer::sgd ? "sgd" : "adam";
  s.read("optimizer", opt);
  if (opt == "sgd")
    t.optimizer = train::Optimizer::sgd;
  else if (opt == "adam")
    t.optimizer = train::Optimizer::adam;
  else
    throw std::invalid_argument("config key 'trainer.optimizer' must be sgd or adam");
  s.read("grad_clip", t.grad_clip);
  s.read("entropy_bonus", t.entropy_bonus);
  s.read("symmetry_augmentation", t.symmetry_augmentation);
  s.read("max_episodes", t.max_episodes);
  std::uint64_t cap = t.memory_capacity;
  s.read("memory_capacity", cap);
  t.memory_capacity = static_cast<std::size_t>(cap);
  s.read("seed", t.seed);
}

}  // namespace

std::vector<std::uint64_t> parse_seeds(const std::string& spec) {
  std::vector<std::uint64_t> out;
  auto parse_u64 = [&](std::string_view t) {
    std::uint64_t v = 0;
    const auto* end = t.data() + t.size();
    auto [p, ec] = std::from_chars(t.data(), end, v);
    if (t.empty() || ec != std::errc() || p != end) throw std::invalid_argument("malformed seed list '" + spec + "'");
    return v;
  };
  std::string_view rest(spec);
  while (!rest.empty()) {
    const auto comma = rest.find(',');
    auto item = rest.substr(0, comma);
    while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
    while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
    if (const auto dots = item.find(".."); dots != std::string_view::npos) {
      const auto a = parse_u64(item.substr(0, dots));
      const auto b = parse_u64(item.substr(dots + 2));
      if (b < a) throw std::invalid_argument("seed range '" + std::string(item) + "' is descending");
      for (auto s = a; s <= b; ++s) out.push_back(s);
    } else {
      out.push_back(parse_u64(item));
    }
    if (comma == std::string_view::npos) break;
    rest.remove_prefix(comma + 1);
  }
  return out;
}

void ExperimentConfig::validate() const {
  scenario.validate();
  policy.validate();
  encoder.validate();
  trainer.validate();
  meta.validate();
  if (encoder.latent != policy.latent) throw std::invalid_argument("config: encoder latent width must equal policy latent");
  if (meta_pretrain_iterations < 0) throw std::invalid_argument("config: meta.pretrain_iterations must be >= 0");
  if (placement.poi_distance_m && !(*placement.poi_distance_m >= 0.0))
    throw std::invalid_argument("config: placement.poi_distance_m must be >= 0");
  if (!(placement.corridor_length_m > 0.0) || !(placement.corridor_width_m > 0.0))
    throw std::invalid_argument("config: corridor dimensions must be > 0");
}

ExperimentConfig parse(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw std::invalid_argument(std::string("config: YAML syntax error: ") + e.what());
  }
  if (root && !root.IsNull() && !root.IsMap()) throw std::invalid_argument("config: top level must be a mapping");
  if (!root || root.IsNull()) root = YAML::Node(YAML::NodeType::Map);

  ExperimentConfig cfg;
  {
    Section top(root, "");
    bool corridor_given = false;
    read_scenario(top.sub("scenario"), cfg.scenario, corridor_given);
    {
      Section p = top.sub("placement");
      p.read("randomize_poi", cfg.placement.randomize_poi);
      if (auto n = p.get("poi_distance_m"); n) {
        try {
          cfg.placement.poi_distance_m = n.as<double>();
        } catch (const YAML::Exception&) {
          throw std::invalid_argument("config key 'placement.poi_distance_m' has a malformed value");
        }
      }
      p.read("randomize_radio", cfg.placement.randomize_radio);
      p.read("corridor_length_m", cfg.placement.corridor_length_m);
      p.read("corridor_width_m", cfg.placement.corridor_width_m);
      cfg.placement.fixed_corridor = corridor_given;
      bool fixed = cfg.placement.fixed_corridor;
      p.read("fixed_corridor", fixed);
      cfg.placement.fixed_corridor = fixed;
    }
    {
      Section p = top.sub("policy");
      p.read("history", cfg.policy.history);
      p.read("recurrent", cfg.policy.recurrent);
      p.read("dense", cfg.policy.dense);
      p.read("latent", cfg.policy.latent);
      std::string f(feature_name(cfg.policy.features));
      p.read("features", f);
      cfg.policy.features = feature_from_name(f, "policy.features");
    }
    cfg.encoder.latent = cfg.policy.latent;
    cfg.encoder.window = cfg.policy.history + 16;
    read_trainer(top.sub("trainer"), cfg.trainer);
    cfg.encoder.window = cfg.policy.history + static_cast<std::uint32_t>(cfg.trainer.horizon);
    {
      Section e = top.sub("encoder");
      e.read("window", cfg.encoder.window);
      e.read("hidden", cfg.encoder.hidden);
      std::string f(feature_name(cfg.encoder.features));
      e.read("features", f);
      cfg.encoder.features = feature_from_name(f, "encoder.features");
    }
    {
      Section m = top.sub("meta");
      m.read("adapt_rate", cfg.meta.adapt_rate);
      m.read("meta_rate", cfg.meta.meta_rate);
      m.read("adapt_batch", cfg.meta.adapt_batch);
      m.read("meta_batch", cfg.meta.meta_batch);
      m.read("tasks", cfg.meta.tasks);
      m.read("train_probability", cfg.meta.train_probability);
      m.read("psi_online", cfg.meta.psi_online);
      m.read("pretrain_iterations", cfg.meta_pretrain_iterations);
    }
    cfg.meta.estimator = cfg.trainer;
    {
      Section x = top.sub("experiment");
      std::string kind(policy_name(cfg.kind));
      x.read("policy", kind);
      cfg.kind = policy_from_name(kind);
      if (auto n = x.get("seeds"); n) {
        try {
          if (n.IsSequence()) {
            for (const auto& v : n) cfg.seeds.push_back(v.as<std::uint64_t>());
          } else {
            cfg.seeds = parse_seeds(n.as<std::string>());
          }
        } catch (const YAML::Exception&) {
          throw std::invalid_argument("config key 'experiment.seeds' has a malformed value");
        }
      }
      std::string out = cfg.out_dir.string();
      x.read("out", out);
      cfg.out_dir = out;
      if (auto n = x.get("checkpoint"); n) cfg.checkpoint = n.as<std::string>();
      if (auto n = x.get("prior_memory"); n) cfg.prior_memory = n.as<std::string>();
    }
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string to_yaml(const ExperimentConfig& c) {
  YAML::Emitter e;
  const auto d = [](double v) { return format_double(v); };
  e << YAML::BeginMap;
  e << YAML::Key << "scenario" << YAML::Value << YAML::BeginMap;
  const auto& s = c.scenario;
  e << YAML::Key << "terrain" << YAML::Value << std::string(world::terrain_name(s.terrain));
  e << YAML::Key << "sai_radius_m" << YAML::Value << d(s.sai_radius_m);
  e << YAML::Key << "poi" << YAML::Value << YAML::Flow << YAML::BeginSeq << d(s.poi.x) << d(s.poi.y) << YAML::EndSeq;
  e << YAML::Key << "uav_start" << YAML::Value << YAML::Flow << YAML::BeginSeq << d(s.uav_start.x) << d(s.uav_start.y)
    << YAML::EndSeq;
  e << YAML::Key << "altitude_m" << YAML::Value << d(s.altitude_m);
  e << YAML::Key << "speed_mps" << YAML::Value << d(s.speed_mps);
  e << YAML::Key << "slot_s" << YAML::Value << d(s.slot_s);
  e << YAML::Key << "battery_s" << YAML::Value << d(s.battery_s);
  e << YAML::Key << "max_slots" << YAML::Value << s.max_slots;
  e << YAML::Key << "wall_loss_db" << YAML::Value << d(s.wall_loss_db);
  e << YAML::Key << "found_radius_m" << YAML::Value << d(s.found_radius_m);
  if (s.r_target_dbm) e << YAML::Key << "r_target_dbm" << YAML::Value << d(*s.r_target_dbm);
  if (c.placement.fixed_corridor) {
    e << YAML::Key << "corridor" << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "x_min" << YAML::Value << d(s.corridor.x_min);
    e << YAML::Key << "x_max" << YAML::Value << d(s.corridor.x_max);
    e << YAML::Key << "y_min" << YAML::Value << d(s.corridor.y_min);
    e << YAML::Key << "y_max" << YAML::Value << d(s.corridor.y_max);
    e << YAML::EndMap;
  }
  const auto& g = s.radio;
  e << YAML::Key << "radio" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "tx_power_dbm" << YAML::Value << d(g.tx_power_dbm);
  e << YAML::Key << "gain_tx_db" << YAML::Value << d(g.gain_tx_db);
  e << YAML::Key << "gain_rx_db" << YAML::Value << d(g.gain_rx_db);
  e << YAML::Key << "ref_loss_db" << YAML::Value << d(g.ref_loss_db);
  e << YAML::Key << "ref_distance_m" << YAML::Value << d(g.ref_distance_m);
  e << YAML::Key << "path_loss_exponent" << YAML::Value << d(g.path_loss_exponent);
  e << YAML::Key << "shadow_sigma_db" << YAML::Value << d(g.shadow_sigma_db);
  e << YAML::Key << "shadow_decorrelation_m" << YAML::Value << d(g.shadow_decorrelation_m);
  e << YAML::Key << "rician_k_db" << YAML::Value << d(g.rician_k_db);
  e << YAML::Key << "noise_floor_dbm" << YAML::Value << d(g.noise_floor_dbm);
  e << YAML::Key << "seed" << YAML::Value << g.seed;
  e << YAML::EndMap << YAML::EndMap;

  const auto& p = c.placement;
  e << YAML::Key << "placement" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "randomize_poi" << YAML::Value << p.randomize_poi;
  if (p.poi_distance_m) e << YAML::Key << "poi_distance_m" << YAML::Value << d(*p.poi_distance_m);
  e << YAML::Key << "randomize_radio" << YAML::Value << p.randomize_radio;
  e << YAML::Key << "corridor_length_m" << YAML::Value << d(p.corridor_length_m);
  e << YAML::Key << "corridor_width_m" << YAML::Value << d(p.corridor_width_m);
  e << YAML::Key << "fixed_corridor" << YAML::Value << p.fixed_corridor;
  e << YAML::EndMap;

  e << YAML::Key << "policy" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "history" << YAML::Value << c.policy.history;
  e << YAML::Key << "recurrent" << YAML::Value << c.policy.recurrent;
  e << YAML::Key << "dense" << YAML::Value << c.policy.dense;
  e << YAML::Key << "latent" << YAML::Value << c.policy.latent;
  e << YAML::Key << "features" << YAML::Value << std::string(feature_name(c.policy.features));
  e << YAML::EndMap;

  e << YAML::Key << "encoder" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "window" << YAML::Value << c.encoder.window;
  e << YAML::Key << "hidden" << YAML::Value << c.encoder.hidden;
  e << YAML::Key << "features" << YAML::Value << std::string(feature_name(c.encoder.features));
  e << YAML::EndMap;

  const auto& t = c.trainer;
  e << YAML::Key << "trainer" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "learning_rate" << YAML::Value << d(t.learning_rate);
  e << YAML::Key << "train_probability" << YAML::Value << d(t.train_probability);
  e << YAML::Key << "batch_size" << YAML::Value << t.batch_size;
  e << YAML::Key << "horizon" << YAML::Value << t.horizon;
  e << YAML::Key << "discount" << YAML::Value << d(t.discount);
  e << YAML::Key << "baseline_enabled" << YAML::Value << t.baseline_enabled;
  e << YAML::Key << "reference" << YAML::Value << std::string(reference_name(t.reference));
  e << YAML::Key << "estimator" << YAML::Value
    << (t.estimator == train::Estimator::return_to_go ? "return_to_go" : "whole_trajectory");
  e << YAML::Key << "optimizer" << YAML::Value << (t.optimizer == train::Optimizer::sgd ? "sgd" : "adam");
  e << YAML::Key << "grad_clip" << YAML::Value << d(t.grad_clip);
  e << YAML::Key << "entropy_bonus" << YAML::Value << d(t.entropy_bonus);
  e << YAML::Key << "symmetry_augmentation" << YAML::Value << t.symmetry_augmentation;
  e << YAML::Key << "max_episodes" << YAML::Value << t.max_episodes;
  e << YAML::Key << "memory_capacity" << YAML::Value << static_cast<std::uint64_t>(t.memory_capacity);
  e << YAML::Key << "seed" << YAML::Value << t.seed;
  e << YAML::EndMap;

  const auto& m = c.meta;
  e << YAML::Key << "meta" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "adapt_rate" << YAML::Value << d(m.adapt_rate);
  e << YAML::Key << "meta_rate" << YAML::Value << d(m.meta_rate);
  e << YAML::Key << "adapt_batch" << YAML::Value << m.adapt_batch;
  e << YAML::Key << "meta_batch" << YAML::Value << m.meta_batch;
  e << YAML::Key << "tasks" << YAML::Value << m.tasks;
  e << YAML::Key << "train_probability" << YAML::Value << d(m.train_probability);
  e << YAML::Key << "psi_online" << YAML::Value << m.psi_online;
  e << YAML::Key << "pretrain_iterations" << YAML::Value << c.meta_pretrain_iterations;
  e << YAML::EndMap;

  e << YAML::Key << "experiment" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "policy" << YAML::Value << std::string(policy_name(c.kind));
  e << YAML::Key << "seeds" << YAML::Value << YAML::Flow << c.seeds;
  e << YAML::Key << "out" << YAML::Value << c.out_dir.string();
  if (c.checkpoint) e << YAML::Key << "checkpoint" << YAML::Value << c.checkpoint->string();
  if (c.prior_memory) e << YAML::Key << "prior_memory" << YAML::Value << c.prior_memory->string();
  e << YAML::EndMap;
  e << YAML::EndMap;
  return std::string(e.c_str()) + "\n";
}

std::string config_hash(const ExperimentConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : to_yaml(cfg)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  static const char* hex = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = hex[h & 0xF];
    h >>= 4;
  }
  return out;
}

world::ScenarioConfig scenario_for_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  auto s = cfg.scenario;
  Rng rng(mix_seed(seed, 0x5CE7A210ULL));
  if (cfg.placement.randomize_poi) {
    const double r = cfg.placement.poi_distance_m.value_or(0.8 * s.sai_radius_m);
    const double theta = 2.0 * std::numbers::pi * uniform01(rng);
    s.poi = {s.uav_start.x + r * std::cos(theta), s.uav_start.y + r * std::sin(theta)};
  }
  if (cfg.placement.randomize_radio) s.radio.seed = mix_seed(cfg.scenario.radio.seed, seed);
  if (s.terrain == world::Terrain::canyon && !cfg.placement.fixed_corridor) {
    const double hl = cfg.placement.corridor_length_m / 2.0;
    const double hw = cfg.placement.corridor_width_m / 2.0;
    s.corridor = {s.poi.x - hl, s.poi.x + hl, s.poi.y - hw, s.poi.y + hw};
  }
  return s;
}

}  // namespace sarlora::config
