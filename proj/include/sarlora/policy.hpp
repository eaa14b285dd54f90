#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "sarlora/lstm.hpp"
#include "sarlora/random.hpp"
#include "sarlora/world.hpp"

namespace sarlora::policy {

using world::Action;

// Per-step input features ahead of z.
//   level:  [rssi, snr, one-hot action]
//   change: level plus the power change since the previous report, placed
//           in the slot of the action that caused it (5 more columns)
enum class FeatureSet : std::uint32_t { level = 0, change = 1 };

// Scale applied to the power change feature.
inline constexpr double kChangeScaleDb = 2.0;

struct Architecture {
  std::uint32_t history = 8;
  std::uint32_t recurrent = 32;
  std::uint32_t dense = 32;
  std::uint32_t latent = 16;
  std::uint32_t actions = world::kActionCount;
  FeatureSet features = FeatureSet::change;

  int feature_width() const { return 2 + world::kActionCount * (features == FeatureSet::change ? 2 : 1); }
  int input_width() const { return feature_width() + static_cast<int>(latent); }
  nn::LstmShape lstm_shape() const { return {input_width(), static_cast<int>(recurrent)}; }
  std::size_t param_count() const;
  void validate() const;
  friend bool operator==(const Architecture&, const Architecture&) = default;
};

struct HistoryEntry {
  double rssi_dbm = 0.0;
  double snr_db = 0.0;
  Action action = Action::H;  // the move that preceded this report
  friend bool operator==(const HistoryEntry&, const HistoryEntry&) = default;
};

// Last `capacity` (rssi, snr, action) triples, oldest first. Missing older
// slots are presented to the network as zero features with a hover action.
class HistoryWindow {
 public:
  explicit HistoryWindow(std::size_t capacity = 8) : capacity_(capacity) {}

  void push(const HistoryEntry& e);
  void push(const world::GatewayMessage& m, Action preceding) { push({m.rssi_dbm, m.snr_db, preceding}); }

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::vector<HistoryEntry>& entries() const { return entries_; }
  const HistoryEntry& back() const { return entries_.back(); }
  double mean_reward() const;

  friend bool operator==(const HistoryWindow&, const HistoryWindow&) = default;

 private:
  std::size_t capacity_;
  std::vector<HistoryEntry> entries_;
};

double normalized_rssi(double rssi_dbm);
double normalized_snr(double snr_db);

struct LatentContext {
  std::vector<double> z;

  static LatentContext null(std::size_t width) { return {std::vector<double>(width, 0.0)}; }
  bool is_null() const;
  std::size_t width() const { return z.size(); }
};

class PolicyParams {
 public:
  PolicyParams() = default;
  explicit PolicyParams(Architecture arch);  // all zeros
  PolicyParams(Architecture arch, std::vector<double> values);

  // Uniform(-0.08, 0.08) weights, zero biases, forget-gate bias +1.
  static PolicyParams initialize(Architecture arch, std::uint64_t seed);

  const Architecture& arch() const { return arch_; }
  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }
  std::size_t size() const { return values_.size(); }
  bool all_finite() const;

  // Offsets of each block inside the flat vector.
  std::size_t dense_offset() const;
  std::size_t output_offset() const;
  // Index range of the z-input columns of the recurrent input matrix.
  bool is_latent_input_weight(std::size_t index) const;

  friend bool operator==(const PolicyParams&, const PolicyParams&) = default;

 private:
  Architecture arch_{};
  std::vector<double> values_;
};

struct ActionDistribution {
  std::array<double, world::kActionCount> p{};
  double operator[](Action a) const { return p[static_cast<std::size_t>(world::code(a))]; }
};

ActionDistribution forward(const PolicyParams& params, const HistoryWindow& hist, const LatentContext& z);

Action sample_action(const ActionDistribution& dist, Rng& rng);

struct LogProbGrad {
  double log_prob = 0.0;
  std::vector<double> grad_params;
  std::vector<double> grad_z;
};

LogProbGrad log_prob_and_grad(const PolicyParams& params, const HistoryWindow& hist, const LatentContext& z, Action a);

// Many windows evaluated with one pass of matrix products. Column b uses
// window b and either the shared latent (one entry) or latents[b].
struct WindowBatch {
  std::vector<nn::Matrix> steps;  // history x (input x B)
  Eigen::Index size() const { return steps.empty() ? 0 : steps.front().cols(); }
};

WindowBatch make_batch(const Architecture& arch, std::span<const HistoryWindow> windows,
                       std::span<const LatentContext* const> latents);

nn::Matrix batch_probabilities(const PolicyParams& params, const WindowBatch& batch);

// Returns sum_b weights[b] * log pi(actions[b] | window b) and adds its
// gradient into grad_params. When grad_latent is non-null it receives
// d/dz per column (latent x B). A nonzero entropy_weight adds
// entropy_weight * H(pi | window b) for every column.
double batch_log_prob_grad(const PolicyParams& params, const WindowBatch& batch, std::span<const Action> actions,
                           std::span<const double> weights, std::span<double> grad_params, nn::Matrix* grad_latent,
                           double entropy_weight = 0.0);

// Runs the policy for up to horizon slots (or until the episode ends),
// updating `hist` as reports arrive.
world::Trajectory rollout(world::Environment& env, HistoryWindow& hist, const PolicyParams& params,
                          const LatentContext& z, int horizon, Rng& rng);

// Checkpoint layout, little endian:
//   u8 version | u32 history | u32 recurrent | u32 dense | u32 latent | u32 actions | u32 feature set | f64[N]
inline constexpr std::uint8_t kCheckpointVersion = 1;

void append_policy_bytes(std::vector<std::uint8_t>& out, const PolicyParams& params);
// Reads the descriptor and weights starting at `pos`, advancing it.
PolicyParams read_policy_bytes(std::span<const std::uint8_t> bytes, std::size_t& pos);
std::vector<std::uint8_t> to_bytes(const PolicyParams& params);
PolicyParams from_bytes(std::span<const std::uint8_t> bytes);
void save_checkpoint(const std::filesystem::path& path, const PolicyParams& params);
PolicyParams load_checkpoint(const std::filesystem::path& path);

}  // namespace sarlora::policy
