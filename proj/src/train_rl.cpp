#include "sarlora/train_rl.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "sarlora/bytes.hpp"

namespace sarlora::train {

using world::Action;

ExperienceMemory::ExperienceMemory(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) throw std::invalid_argument("memory: capacity must be >= 1");
}

void ExperienceMemory::push(Sample s) {
  if (samples_.size() == capacity_) samples_.pop_front();
  samples_.push_back(std::move(s));
}

std::vector<std::size_t> ExperienceMemory::sample_indices(std::size_t m, Rng& rng) const {
  const std::size_t n = samples_.size();
  const std::size_t k = std::min(m, n);
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  // Partial Fisher-Yates: the first k slots end up a uniform k-subset.
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = i + static_cast<std::size_t>(uniform_index(rng, n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  return idx;
}

std::vector<const Sample*> ExperienceMemory::sample_batch(std::size_t m, Rng& rng) const {
  std::vector<const Sample*> out;
  for (auto i : sample_indices(m, rng)) out.push_back(&samples_[i]);
  return out;
}

namespace {

constexpr char kMemoryMagic[4] = {'S', 'L', 'E', 'M'};

}  // namespace

std::vector<std::uint8_t> memory_to_bytes(std::span<const Sample> samples, std::size_t history_capacity) {
  std::vector<std::uint8_t> out;
  for (char c : kMemoryMagic) bytes::put_u8(out, static_cast<std::uint8_t>(c));
  bytes::put_u8(out, kMemoryFormatVersion);
  bytes::put_u32(out, static_cast<std::uint32_t>(history_capacity));
  bytes::put_u64(out, samples.size());
  for (const auto& s : samples) {
    bytes::put_u32(out, static_cast<std::uint32_t>(s.source.size()));
    for (char c : s.source) bytes::put_u8(out, static_cast<std::uint8_t>(c));
    bytes::put_u32(out, static_cast<std::uint32_t>(s.trajectory.start_slot));
    bytes::put_u32(out, static_cast<std::uint32_t>(s.history.size()));
    for (const auto& e : s.history.entries()) {
      bytes::put_f64(out, e.rssi_dbm);
      bytes::put_f64(out, e.snr_db);
      bytes::put_u8(out, static_cast<std::uint8_t>(world::code(e.action)));
    }
    bytes::put_u32(out, static_cast<std::uint32_t>(s.trajectory.steps.size()));
    for (const auto& st : s.trajectory.steps) {
      bytes::put_u8(out, static_cast<std::uint8_t>(world::code(st.action)));
      bytes::put_f64(out, st.message.rssi_dbm);
      bytes::put_f64(out, st.message.snr_db);
      bytes::put_f64(out, st.message.x_m);
      bytes::put_f64(out, st.message.y_m);
      bytes::put_f64(out, st.reward);
    }
  }
  return out;
}

std::vector<Sample> memory_from_bytes(std::span<const std::uint8_t> data) {
  bytes::Reader r(data);
  for (char c : kMemoryMagic)
    if (r.u8() != static_cast<std::uint8_t>(c)) throw std::runtime_error("memory file: bad magic");
  const auto version = r.u8();
  if (version != kMemoryFormatVersion)
    throw std::runtime_error("memory file: unsupported format version " + std::to_string(version));
  const std::size_t capacity = r.u32();
  const std::uint64_t count = r.u64();
  std::vector<Sample> out;
  for (std::uint64_t i = 0; i < count; ++i) {
    Sample s{HistoryWindow(capacity), {}, {}};
    const auto tag_len = r.u32();
    for (std::uint32_t k = 0; k < tag_len; ++k) s.source.push_back(static_cast<char>(r.u8()));
    s.trajectory.start_slot = static_cast<int>(r.u32());
    const auto nh = r.u32();
    if (nh > capacity) throw std::runtime_error("memory file: history longer than capacity");
    for (std::uint32_t k = 0; k < nh; ++k) {
      policy::HistoryEntry e;
      e.rssi_dbm = r.f64();
      e.snr_db = r.f64();
      e.action = world::action_from_code(r.u8());
      s.history.push(e);
    }
    const auto ns = r.u32();
    for (std::uint32_t k = 0; k < ns; ++k) {
      world::TrajectoryStep st;
      st.action = world::action_from_code(r.u8());
      st.message.rssi_dbm = r.f64();
      st.message.snr_db = r.f64();
      st.message.x_m = r.f64();
      st.message.y_m = r.f64();
      st.reward = r.f64();
      s.trajectory.steps.push_back(st);
    }
    out.push_back(std::move(s));
  }
  if (r.remaining() != 0) throw std::runtime_error("memory file: trailing bytes");
  return out;
}

void save_memory(const std::filesystem::path& path, std::span<const Sample> samples, std::size_t history_capacity) {
  bytes::write_file(path, memory_to_bytes(samples, history_capacity));
}

std::vector<Sample> load_memory(const std::filesystem::path& path) { return memory_from_bytes(bytes::read_file(path)); }

void TrainerConfig::validate() const {
  if (!(train_probability >= 0.0 && train_probability <= 1.0))
    throw std::invalid_argument("trainer: train_probability must lie in [0, 1]");
  if (batch_size < 1) throw std::invalid_argument("trainer: batch_size must be >= 1");
  if (horizon < 1) throw std::invalid_argument("trainer: horizon must be >= 1");
  if (!(discount > 0.0 && discount <= 1.0)) throw std::invalid_argument("trainer: discount must lie in (0, 1]");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw std::invalid_argument("trainer: learning_rate must be finite and >= 0");
  if (!(grad_clip > 0.0)) throw std::invalid_argument("trainer: grad_clip must be > 0");
  if (memory_capacity < 1) throw std::invalid_argument("trainer: memory_capacity must be >= 1");
  if (!(entropy_bonus >= 0.0)) throw std::invalid_argument("trainer: entropy_bonus must be >= 0");
  if (max_episodes < 0) throw std::invalid_argument("trainer: max_episodes must be >= 0");
}

namespace {

double reference_power(const HistoryWindow& w, Reference mode) {
  if (mode == Reference::none || w.empty()) return 0.0;
  if (mode == Reference::window_mean) return w.mean_reward();
  return radio::recover_signal_power(w.back().rssi_dbm, w.back().snr_db);
}

}  // namespace

std::vector<std::vector<double>> advantages(std::span<const Sample* const> batch, const TrainerConfig& cfg) {
  std::vector<std::vector<double>> adv(batch.size());
  std::size_t longest = 0;
  for (std::size_t m = 0; m < batch.size(); ++m) {
    const auto& steps = batch[m]->trajectory.steps;
    auto& g = adv[m];
    g.assign(steps.size(), 0.0);
    if (cfg.estimator == Estimator::return_to_go) {
      std::vector<double> ref(steps.size(), 0.0);
      if (cfg.reference != Reference::none) {
        HistoryWindow w = batch[m]->history;
        for (std::size_t j = 0; j < steps.size(); ++j) {
          ref[j] = reference_power(w, cfg.reference);
          w.push(steps[j].message, steps[j].action);
        }
      }
      double acc = 0.0;
      double weight = 0.0;
      for (std::size_t j = steps.size(); j-- > 0;) {
        acc = cfg.discount * (steps[j].reward + acc);
        weight = cfg.discount * (1.0 + weight);
        g[j] = acc - ref[j] * weight;
      }
    } else {
      const double ref = reference_power(batch[m]->history, cfg.reference);
      double total = 0.0;
      double w = 1.0;
      for (const auto& s : steps) {
        w *= cfg.discount;
        total += w * (s.reward - ref);
      }
      std::fill(g.begin(), g.end(), total);
    }
    longest = std::max(longest, steps.size());
  }
  if (cfg.baseline_enabled) {
    for (std::size_t j = 0; j < longest; ++j) {
      double sum = 0.0;
      std::size_t count = 0;
      for (const auto& g : adv)
        if (j < g.size()) {
          sum += g[j];
          ++count;
        }
      const double b = sum / static_cast<double>(count);
      for (auto& g : adv)
        if (j < g.size()) g[j] -= b;
    }
  }
  return adv;
}

GradientEstimate estimate_gradient(const PolicyParams& params, std::span<const Sample* const> batch,
                                   const TrainerConfig& cfg, const LatentContext& z) {
  if (batch.empty()) throw std::invalid_argument("reinforce_update: empty batch");
  const auto adv = advantages(batch, cfg);
  const double inv_m = 1.0 / static_cast<double>(batch.size());

  std::vector<HistoryWindow> windows;
  std::vector<Action> actions;
  std::vector<double> weights;
  for (std::size_t m = 0; m < batch.size(); ++m) {
    HistoryWindow w = batch[m]->history;
    const auto& steps = batch[m]->trajectory.steps;
    for (std::size_t j = 0; j < steps.size(); ++j) {
      windows.push_back(w);
      actions.push_back(steps[j].action);
      weights.push_back(adv[m][j] * inv_m);
      w.push(steps[j].message, steps[j].action);
    }
  }

  GradientEstimate out;
  out.grad.assign(params.size(), 0.0);
  if (!windows.empty()) {
    const LatentContext* zs[] = {&z};
    const auto wb = policy::make_batch(params.arch(), windows, zs);
    nn::Matrix gz;
    const double ew = cfg.entropy_bonus / static_cast<double>(windows.size());
    out.objective = policy::batch_log_prob_grad(params, wb, actions, weights, out.grad, &gz, ew);
    const nn::Vector gzsum = gz.rowwise().sum();
    out.grad_z.assign(gzsum.data(), gzsum.data() + gzsum.size());
  } else {
    out.grad_z.assign(params.arch().latent, 0.0);
  }

  double sq = 0.0;
  for (double g : out.grad) sq += g * g;
  out.raw_norm = std::sqrt(sq);
  if (!std::isfinite(out.raw_norm)) throw std::runtime_error("reinforce_update: non-finite gradient, update aborted");
  if (out.raw_norm > cfg.grad_clip) {
    const double s = cfg.grad_clip / out.raw_norm;
    for (double& g : out.grad) g *= s;
  }
  return out;
}

void apply_step(PolicyParams& params, std::span<const double> grad, double learning_rate, Optimizer opt,
                OptimizerState& state) {
  apply_step(params.values(), grad, learning_rate, opt, state);
  if (!params.all_finite()) throw std::runtime_error("reinforce_update: parameters became non-finite");
}

void apply_step(std::span<double> values, std::span<const double> grad, double learning_rate, Optimizer opt,
                OptimizerState& state) {
  if (grad.size() != values.size()) throw std::invalid_argument("apply_step: gradient length mismatch");
  if (opt == Optimizer::sgd) {
    for (std::size_t i = 0; i < values.size(); ++i) values[i] += learning_rate * grad[i];
  } else {
    constexpr double b1 = 0.9;
    constexpr double b2 = 0.999;
    constexpr double eps = 1e-8;
    if (state.m.size() != values.size()) {
      state.m.assign(values.size(), 0.0);
      state.v.assign(values.size(), 0.0);
      state.steps = 0;
    }
    ++state.steps;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.steps));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.steps));
    for (std::size_t i = 0; i < values.size(); ++i) {
      state.m[i] = b1 * state.m[i] + (1.0 - b1) * grad[i];
      state.v[i] = b2 * state.v[i] + (1.0 - b2) * grad[i] * grad[i];
      values[i] += learning_rate * (state.m[i] / c1) / (std::sqrt(state.v[i] / c2) + eps);
    }
  }
}

PolicyParams reinforce_update(const PolicyParams& params, std::span<const Sample* const> batch,
                              const TrainerConfig& cfg, const LatentContext& z, OptimizerState& state) {
  const auto est = estimate_gradient(params, batch, cfg, z);
  PolicyParams next = params;
  apply_step(next, est.grad, cfg.learning_rate, cfg.optimizer, state);
  return next;
}

PolicyParams reinforce_update(const PolicyParams& params, std::span<const Sample* const> batch,
                              const TrainerConfig& cfg) {
  OptimizerState state;
  return reinforce_update(params, batch, cfg, LatentContext::null(params.arch().latent), state);
}

void augment_batch(std::vector<const Sample*>& batch, std::vector<Sample>& storage, Rng& rng) {
  storage.clear();
  storage.reserve(batch.size());
  for (auto& b : batch) {
    storage.push_back(transformed(*b, static_cast<int>(uniform_index(rng, world::kCompassSymmetries))));
    b = &storage.back();
  }
}

EpisodeResult run_episode(world::Environment& env, ExperienceMemory& memory, std::size_t history, int horizon,
                          double train_probability, std::uint64_t seed, const std::string& policy_id,
                          const LoopHooks& hooks) {
  Rng rng(mix_seed(seed, 0xA11CEULL));
  const auto length = static_cast<std::size_t>(horizon);
  const std::string tag = std::string(world::terrain_name(env.config().terrain)) + "/" + std::to_string(seed);

  EpisodeResult result;
  HistoryWindow hist(history);
  const auto first = env.reset(seed);
  hist.push(first, Action::H);
  RunLogger log(env, policy_id, seed);

  std::deque<Sample> open;
  try {
    while (!env.done()) {
      open.push_back({hist, {env.slot(), {}}, tag});
      const Action a = policy::sample_action(hooks.act(hist), rng);
      const auto r = env.step(a);
      log.log(a, r);
      hist.push(r.message, a);
      for (auto& s : open) s.trajectory.steps.push_back({a, r.message, r.reward});
      while (!open.empty() && open.front().trajectory.steps.size() >= length) {
        memory.push(open.front());
        result.samples.push_back(std::move(open.front()));
        open.pop_front();
      }
      if (bernoulli(rng, train_probability) && !memory.empty()) hooks.train(memory, rng);
    }
  } catch (const std::exception& e) {
    result.record = log.fail(e.what());
    return result;
  }
  for (auto& s : open) {
    memory.push(s);
    result.samples.push_back(std::move(s));
  }
  result.record = log.finish(env);
  return result;
}

EpisodeResult run_online(world::Environment& env, Learner& learner, const TrainerConfig& cfg, std::uint64_t seed,
                         const std::string& policy_id, const LatentContext* z) {
  cfg.validate();
  const LatentContext null_z = LatentContext::null(learner.params.arch().latent);
  const LatentContext& latent = z ? *z : null_z;
  std::vector<Sample> storage;
  LoopHooks hooks;
  hooks.act = [&](const HistoryWindow& h) { return policy::forward(learner.params, h, latent); };
  hooks.train = [&](const ExperienceMemory& memory, Rng& rng) {
    auto batch = memory.sample_batch(static_cast<std::size_t>(cfg.batch_size), rng);
    if (cfg.symmetry_augmentation) augment_batch(batch, storage, rng);
    learner.params = reinforce_update(learner.params, batch, cfg, latent, learner.optimizer);
    ++learner.updates;
  };
  return run_episode(env, learner.memory, learner.params.arch().history, cfg.horizon, cfg.train_probability, seed,
                     policy_id, hooks);
}

std::pair<PolicyParams, RunRecord> run_online(world::Environment& env, const PolicyParams& params,
                                              const TrainerConfig& cfg, std::uint64_t seed) {
  Learner learner(params, cfg.memory_capacity);
  auto res = run_online(env, learner, cfg, seed);
  return {std::move(learner.params), std::move(res.record)};
}

Sample transformed(const Sample& s, int symmetry) {
  Sample out;
  out.source = s.source;
  out.history = HistoryWindow(s.history.capacity());
  for (auto e : s.history.entries()) {
    e.action = world::transform_action(e.action, symmetry);
    out.history.push(e);
  }
  out.trajectory.start_slot = s.trajectory.start_slot;
  out.trajectory.steps = s.trajectory.steps;
  for (auto& st : out.trajectory.steps) {
    st.action = world::transform_action(st.action, symmetry);
    const Point2 p = world::transform_point({st.message.x_m, st.message.y_m}, symmetry);
    st.message.x_m = p.x;
    st.message.y_m = p.y;
  }
  return out;
}

std::vector<Sample> tail_samples(const std::vector<Sample>& samples, int episode_length, double fraction) {
  const double cut = static_cast<double>(episode_length) * (1.0 - fraction);
  std::vector<Sample> out;
  for (const auto& s : samples)
    if (static_cast<double>(s.trajectory.start_slot) >= cut) out.push_back(s);
  return out;
}

}  // namespace sarlora::train
