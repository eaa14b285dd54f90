#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sarlora/policy.hpp"
#include "sarlora/train_rl.hpp"

namespace sarlora::meta {

using policy::LatentContext;
using policy::PolicyParams;
using train::Sample;

// A task is one prior experience sample: its history followed by its
// trajectory, read as a single (rssi, snr, action) sequence.
using Task = Sample;

struct EncoderArchitecture {
  std::uint32_t window = 24;  // history + horizon
  std::uint32_t hidden = 16;
  std::uint32_t latent = 16;
  policy::FeatureSet features = policy::FeatureSet::change;

  std::size_t param_count() const;
  void validate() const;
  friend bool operator==(const EncoderArchitecture&, const EncoderArchitecture&) = default;
};

// psi: a recurrent encoder [LSTM | W_p (latent x hidden) | b_p (latent)].
// Each task's final hidden state is mean-pooled over tasks, then projected.
class EncoderParams {
 public:
  EncoderParams() = default;
  EncoderParams(EncoderArchitecture arch, std::vector<double> values);

  static EncoderParams initialize(EncoderArchitecture arch, std::uint64_t seed);

  const EncoderArchitecture& arch() const { return arch_; }
  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }
  std::size_t size() const { return values_.size(); }
  std::size_t projection_offset() const;
  bool all_finite() const;

  friend bool operator==(const EncoderParams&, const EncoderParams&) = default;

 private:
  EncoderArchitecture arch_{};
  std::vector<double> values_;
};

struct MetaConfig {
  double adapt_rate = 1e-3;  // phi step
  double meta_rate = 1e-4;   // psi step
  int adapt_batch = 32;      // M1
  int meta_batch = 32;       // M2
  int tasks = 64;            // K tasks encoded into z
  double train_probability = 0.2;
  // Whether psi keeps updating inside an online run, or only offline.
  bool psi_online = true;
  // Horizon, discount, baseline, clipping, entropy and optimizer settings
  // shared with the plain trainer.
  train::TrainerConfig estimator{};

  void validate() const;
};

LatentContext encode_tasks(const EncoderParams& psi, std::span<const Task* const> tasks);
LatentContext encode_tasks(const EncoderParams& psi, std::span<const Task> tasks);

// phi step on new-environment samples with z held fixed.
PolicyParams adapt_phi(const PolicyParams& phi, const LatentContext& z0, std::span<const Sample* const> batch,
                       const MetaConfig& cfg, train::OptimizerState& state);

struct PsiGradient {
  std::vector<double> grad;  // ascent direction after clipping
  double raw_norm = 0.0;
  double objective = 0.0;
};

// Gradient of the return-weighted log-likelihood that pi_{phi0, z(psi)}
// assigns to the batch's actions, where z encodes the batch itself.
PsiGradient psi_gradient(const EncoderParams& psi, const PolicyParams& phi0, std::span<const Task* const> batch,
                         const MetaConfig& cfg);
double psi_objective(const EncoderParams& psi, const PolicyParams& phi0, std::span<const Task* const> batch,
                     const MetaConfig& cfg);

EncoderParams update_psi(const EncoderParams& psi, const PolicyParams& phi0, std::span<const Task* const> batch,
                         const MetaConfig& cfg, train::OptimizerState& state);

struct MetaLearner {
  PolicyParams phi;
  EncoderParams psi;
  std::vector<Task> prior;           // meta-train set
  train::ExperienceMemory memory;    // new-environment experience
  train::OptimizerState phi_state;
  train::OptimizerState psi_state;
  std::uint64_t updates = 0;

  MetaLearner(PolicyParams p, EncoderParams e, std::vector<Task> prior_tasks, std::size_t capacity);
};

// Offline meta-training on the prior tasks: alternating phi steps under the
// encoded z and psi steps.
void meta_pretrain(MetaLearner& learner, const MetaConfig& cfg, int iterations, std::uint64_t seed);

// The online meta loop in a new environment. Throws when the prior set is
// empty; otherwise always returns a record.
train::EpisodeResult run_meta_online(world::Environment& env, MetaLearner& learner, const MetaConfig& cfg,
                                     std::uint64_t seed, const std::string& policy_id = "meta");

// Meta checkpoint: u8 version 2 | policy descriptor and weights |
// u32 window | u32 hidden | u32 latent | u32 feature set | f64[N].
inline constexpr std::uint8_t kMetaCheckpointVersion = 2;
std::vector<std::uint8_t> to_bytes(const PolicyParams& phi, const EncoderParams& psi);
std::pair<PolicyParams, EncoderParams> from_bytes(std::span<const std::uint8_t> data);
void save_checkpoint(const std::filesystem::path& path, const PolicyParams& phi, const EncoderParams& psi);
std::pair<PolicyParams, EncoderParams> load_checkpoint(const std::filesystem::path& path);

}  // namespace sarlora::meta
