#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sarlora/policy.hpp"
#include "sarlora/random.hpp"
#include "sarlora/record.hpp"
#include "sarlora/world.hpp"

namespace sarlora::train {

using policy::HistoryWindow;
using policy::LatentContext;
using policy::PolicyParams;

// One experience: the history at slot t_m and the (up to T) steps after it.
struct Sample {
  HistoryWindow history;
  world::Trajectory trajectory;
  std::string source;  // environment tag, kept for meta-training
};

// Bounded FIFO of samples.
class ExperienceMemory {
 public:
  explicit ExperienceMemory(std::size_t capacity = 4096);

  void push(Sample s);
  std::size_t size() const { return samples_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return samples_.empty(); }
  const Sample& operator[](std::size_t i) const { return samples_[i]; }

  // Uniform sample of min(m, size) distinct entries.
  std::vector<const Sample*> sample_batch(std::size_t m, Rng& rng) const;
  std::vector<std::size_t> sample_indices(std::size_t m, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::deque<Sample> samples_;
};

// Memory file layout, little endian:
//   "SLEM" | u8 version | u32 history capacity | u64 count | samples...
// where each sample is
//   u32 tag length | tag bytes | i32 start slot |
//   u32 n | n x (f64 rssi, f64 snr, u8 action) |
//   u32 n | n x (u8 action, f64 rssi, f64 snr, f64 x, f64 y, f64 reward)
inline constexpr std::uint8_t kMemoryFormatVersion = 1;
std::vector<std::uint8_t> memory_to_bytes(std::span<const Sample> samples, std::size_t history_capacity);
std::vector<Sample> memory_from_bytes(std::span<const std::uint8_t> data);
void save_memory(const std::filesystem::path& path, std::span<const Sample> samples, std::size_t history_capacity);
std::vector<Sample> load_memory(const std::filesystem::path& path);

enum class Estimator {
  return_to_go,      // discounted reward-to-go from each step
  whole_trajectory,  // one discounted return multiplies every step
};

enum class Optimizer { sgd, adam };

// Power that each step's reward-to-go is measured against.
enum class Reference {
  none,
  window_mean,  // mean power of the step's history window
  last_report,  // power of the report just before the step's action
};

struct TrainerConfig {
  double learning_rate = 1e-3;
  double train_probability = 0.2;
  int batch_size = 32;
  int horizon = 16;
  double discount = 0.99;
  bool baseline_enabled = true;
  Reference reference = Reference::last_report;
  Estimator estimator = Estimator::return_to_go;
  Optimizer optimizer = Optimizer::sgd;
  double grad_clip = 10.0;
  // Weight of the mean policy entropy added to the objective.
  double entropy_bonus = 0.0;
  // Map every batch sample through a random compass symmetry before the
  // update (plain terrain is isotropic up to the shadowing field).
  bool symmetry_augmentation = false;
  int max_episodes = 200;
  std::size_t memory_capacity = 4096;
  std::uint64_t seed = 1;

  void validate() const;
};

// Per-parameter optimizer moments, carried between updates.
struct OptimizerState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t steps = 0;
};

struct GradientEstimate {
  std::vector<double> grad;      // ascent direction after clipping
  std::vector<double> grad_z;    // d/dz summed over columns (latent width)
  double raw_norm = 0.0;
  double objective = 0.0;        // sum of advantage-weighted log-probabilities / M
};

// Advantage-weighted score function averaged over the batch, every step of
// each sample evaluated under latent z. Throws on an empty batch or a
// non-finite gradient.
GradientEstimate estimate_gradient(const PolicyParams& params, std::span<const Sample* const> batch,
                                   const TrainerConfig& cfg, const LatentContext& z);

// Per-step advantages of each sample, in batch order (exposed for tests).
std::vector<std::vector<double>> advantages(std::span<const Sample* const> batch, const TrainerConfig& cfg);

// Applies one ascent step with the configured optimizer.
void apply_step(std::span<double> values, std::span<const double> grad, double learning_rate, Optimizer opt,
                OptimizerState& state);
void apply_step(PolicyParams& params, std::span<const double> grad, double learning_rate, Optimizer opt,
                OptimizerState& state);

PolicyParams reinforce_update(const PolicyParams& params, std::span<const Sample* const> batch,
                              const TrainerConfig& cfg, const LatentContext& z, OptimizerState& state);
PolicyParams reinforce_update(const PolicyParams& params, std::span<const Sample* const> batch,
                              const TrainerConfig& cfg);

// Learner state that persists across episodes of one experiment.
struct Learner {
  PolicyParams params;
  ExperienceMemory memory;
  OptimizerState optimizer;
  std::uint64_t updates = 0;

  Learner(PolicyParams p, std::size_t capacity) : params(std::move(p)), memory(capacity) {}
};

struct EpisodeResult {
  RunRecord record;
  std::vector<Sample> samples;  // every sample the episode produced, in slot order
};

// Replaces each batch entry by a copy mapped through a random compass
// symmetry; the copies live in storage.
void augment_batch(std::vector<const Sample*>& batch, std::vector<Sample>& storage, Rng& rng);

// The shared slot loop of the online trainers. act maps the current window
// to a distribution; train is invoked between slots with probability
// train_probability once memory holds a sample.
struct LoopHooks {
  std::function<policy::ActionDistribution(const HistoryWindow&)> act;
  std::function<void(const ExperienceMemory&, Rng&)> train;
};
EpisodeResult run_episode(world::Environment& env, ExperienceMemory& memory, std::size_t history, int horizon,
                          double train_probability, std::uint64_t seed, const std::string& policy_id,
                          const LoopHooks& hooks);

// The online loop: act, store experience, and with probability
// train_probability take a gradient step on a uniform batch, until the reward
// exceeds the target or the battery runs out.
EpisodeResult run_online(world::Environment& env, Learner& learner, const TrainerConfig& cfg, std::uint64_t seed,
                         const std::string& policy_id = "rl", const LatentContext* z = nullptr);

std::pair<PolicyParams, RunRecord> run_online(world::Environment& env, const PolicyParams& params,
                                              const TrainerConfig& cfg, std::uint64_t seed);

// The sample with every action and position mapped through a compass
// symmetry; powers are unchanged.
Sample transformed(const Sample& s, int symmetry);

// Samples whose start slot falls in the last `fraction` of the episode.
std::vector<Sample> tail_samples(const std::vector<Sample>& samples, int episode_length, double fraction = 0.25);

}  // namespace sarlora::train
