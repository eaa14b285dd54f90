#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sarlora/config.hpp"
#include "sarlora/record.hpp"
#include "sarlora/train_meta.hpp"
#include "sarlora/train_rl.hpp"

namespace sarlora::harness {

using config::ExperimentConfig;
using config::PolicyKind;

// Mean over slots 1..n of the distance between the two position tracks,
// n being the longer run's length. The shorter track is held at its last
// position once it ends.
double trajectory_deviation(const RunRecord& record, const RunRecord& reference);

struct PolicySummary {
  std::string policy;
  int runs = 0;
  int failed = 0;
  int successes = 0;
  double success_rate = 0.0;
  // Runs that never found the target count as max_slots.
  double median_slots = 0.0;
  std::optional<double> mean_slots_found;
  double mean_reward = 0.0;
  int reached_found_radius = 0;
  std::optional<double> mean_deviation_m;
};

// Groups by policy id in first-seen order. deviations, when given, is
// parallel to records.
std::vector<PolicySummary> summarize(const std::vector<RunRecord>& records, int max_slots,
                                     const std::vector<std::optional<double>>* deviations = nullptr);

// Trained models available to a run.
struct Models {
  std::optional<policy::PolicyParams> rl;
  std::optional<meta::MetaLearner> meta;
};

// Whether learned policies keep training inside each run.
enum class Mode { frozen, online };

// One run of the configured kind on the scenario of `seed`. Never throws:
// failures come back as records with status failed.
RunRecord run_one(const ExperimentConfig& cfg, PolicyKind kind, std::uint64_t seed, const Models& models, Mode mode);

// The RL policy used when no checkpoint is supplied: fresh parameters.
policy::PolicyParams fresh_policy(const ExperimentConfig& cfg);

struct EpisodeStat {
  int episode = 0;
  std::uint64_t seed = 0;
  int slots = 0;
  bool success = false;
  double mean_reward = 0.0;
  double sum_return = 0.0;  // undiscounted sum of rewards
  std::uint64_t updates = 0;
};

struct RlTraining {
  train::Learner learner;
  std::vector<EpisodeStat> log;
  std::vector<train::Sample> prior_tasks;  // tails of successful episodes
};

using Progress = std::function<void(const EpisodeStat&)>;

// Seed of training episode e; disjoint in practice from small eval seeds.
std::uint64_t training_seed(const ExperimentConfig& cfg, int episode);

// Online REINFORCE training over trainer.max_episodes plain episodes.
RlTraining train_rl(const ExperimentConfig& cfg, const Progress& progress = {});

// Meta learner built on a trained policy and prior tasks, pretrained for
// meta_pretrain_iterations.
meta::MetaLearner train_meta(const ExperimentConfig& cfg, policy::PolicyParams theta, std::vector<meta::Task> prior);

struct Experiment {
  std::vector<RunRecord> records;
  std::vector<std::optional<double>> deviations;
  std::vector<PolicySummary> summary;
};

// Runs the listed policies on every seed. With with_deviation, the optimal
// run of each seed is the reference for trajectory_deviation.
Experiment run_experiment(const ExperimentConfig& cfg, const std::vector<PolicyKind>& kinds, const Models& models,
                          Mode mode, bool with_deviation);

// One CSV per run under out/<policy>/seed_<n>.csv plus out/summary.json.
void write_outputs(const ExperimentConfig& cfg, const Experiment& ex, const std::filesystem::path& out);
std::string summary_json(const ExperimentConfig& cfg, const Experiment& ex);

void write_training_log(const std::filesystem::path& path, const std::vector<EpisodeStat>& log);

}  // namespace sarlora::harness
