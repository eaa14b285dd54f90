#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sarlora/policy.hpp"
#include "sarlora/train_meta.hpp"
#include "sarlora/train_rl.hpp"
#include "sarlora/world.hpp"

namespace sarlora::config {

enum class PolicyKind { optimal, greedy, rl, meta };

std::string_view policy_name(PolicyKind k);
PolicyKind policy_from_name(std::string_view s);

// How a run seed turns the template scenario into a concrete one.
struct Placement {
  // Put the POI on a circle around uav_start at a seed-chosen angle.
  bool randomize_poi = true;
  // Radius of that circle; unset means 0.8 * sai_radius_m.
  std::optional<double> poi_distance_m;
  // Derive the radio seed from the run seed.
  bool randomize_radio = true;
  // Canyon corridor centred on the POI; ignored when fixed_corridor is set.
  double corridor_length_m = 1200.0;
  double corridor_width_m = 200.0;
  bool fixed_corridor = false;
};

struct ExperimentConfig {
  world::ScenarioConfig scenario = world::ScenarioConfig::plain();
  Placement placement{};
  policy::Architecture policy{};
  meta::EncoderArchitecture encoder{};
  train::TrainerConfig trainer{};
  meta::MetaConfig meta{};
  int meta_pretrain_iterations = 2000;
  PolicyKind kind = PolicyKind::optimal;
  std::vector<std::uint64_t> seeds;
  std::filesystem::path out_dir = "out";
  std::optional<std::filesystem::path> checkpoint;
  std::optional<std::filesystem::path> prior_memory;

  void validate() const;
};

// Parses YAML text. Unknown keys and malformed values throw
// std::invalid_argument naming the offending key path.
ExperimentConfig parse(const std::string& text);
ExperimentConfig load(const std::filesystem::path& path);

// Canonical YAML of every field, defaults included.
std::string to_yaml(const ExperimentConfig& cfg);

// FNV-1a 64 of the canonical YAML, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

// "a..b" (inclusive), "a,b,c" or a mix of both.
std::vector<std::uint64_t> parse_seeds(const std::string& spec);

// The concrete scenario of one run.
world::ScenarioConfig scenario_for_seed(const ExperimentConfig& cfg, std::uint64_t seed);

}  // namespace sarlora::config
