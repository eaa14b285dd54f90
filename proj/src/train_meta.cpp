#include "sarlora/train_meta.hpp"

#include <cmath>
#include <stdexcept>

#include "sarlora/bytes.hpp"
#include "sarlora/lstm.hpp"

namespace sarlora::meta {

using nn::Matrix;
using nn::Vector;

namespace {

policy::Architecture window_layout(const EncoderArchitecture& a) {
  policy::Architecture p;
  p.history = a.window;
  p.recurrent = a.hidden;
  p.dense = 1;
  p.latent = 0;
  p.features = a.features;
  return p;
}

nn::LstmShape lstm_shape(const EncoderArchitecture& a) { return window_layout(a).lstm_shape(); }

policy::HistoryWindow task_sequence(const Task& t, std::size_t window) {
  policy::HistoryWindow w(window);
  for (const auto& e : t.history.entries()) w.push(e);
  for (const auto& s : t.trajectory.steps) w.push(s.message, s.action);
  return w;
}

struct Encoding {
  nn::LstmCache cache;
  Vector pooled;
  LatentContext z;
};

Encoding encode(const EncoderParams& psi, std::span<const Task* const> tasks) {
  if (tasks.empty()) throw std::invalid_argument("encode_tasks: empty task set");
  const auto& a = psi.arch();
  std::vector<policy::HistoryWindow> windows;
  windows.reserve(tasks.size());
  for (const Task* t : tasks) {
    if (t->trajectory.steps.empty()) throw std::invalid_argument("encode_tasks: task with empty trajectory");
    windows.push_back(task_sequence(*t, a.window));
  }
  const auto layout = window_layout(a);
  const LatentContext none = LatentContext::null(0);
  const LatentContext* zs[] = {&none};
  auto batch = policy::make_batch(layout, windows, zs);

  Encoding out;
  nn::lstm_forward(psi.values().data(), lstm_shape(a), std::move(batch.steps), out.cache);
  out.pooled = out.cache.final_hidden().rowwise().mean();
  // Owned copies, see lstm.cpp on address-dependent rounding.
  const Matrix wp = Eigen::Map<const Matrix>(psi.values().data() + psi.projection_offset(), a.latent, a.hidden);
  const Vector bp =
      Eigen::Map<const Vector>(psi.values().data() + psi.projection_offset() + a.latent * a.hidden, a.latent);
  const Vector z = wp * out.pooled + bp;
  out.z.z.assign(z.data(), z.data() + z.size());
  return out;
}

train::TrainerConfig adapt_config(const MetaConfig& cfg) {
  auto c = cfg.estimator;
  c.learning_rate = cfg.adapt_rate;
  c.batch_size = cfg.adapt_batch;
  c.train_probability = cfg.train_probability;
  return c;
}

std::vector<const Task*> pointers(std::span<const Task> tasks) {
  std::vector<const Task*> out;
  out.reserve(tasks.size());
  for (const auto& t : tasks) out.push_back(&t);
  return out;
}

std::vector<const Task*> sample_tasks(const std::vector<Task>& tasks, std::size_t m, Rng& rng) {
  std::vector<std::size_t> idx(tasks.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const std::size_t k = std::min(m, idx.size());
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + uniform_index(rng, idx.size() - i)]);
  std::vector<const Task*> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back(&tasks[idx[i]]);
  return out;
}

}  // namespace

std::size_t EncoderArchitecture::param_count() const {
  return lstm_shape(*this).param_count() + static_cast<std::size_t>(latent) * hidden + latent;
}

void EncoderArchitecture::validate() const {
  if (window < 1) throw std::invalid_argument("encoder: window must be >= 1");
  if (hidden < 1) throw std::invalid_argument("encoder: hidden width must be >= 1");
  if (features != policy::FeatureSet::level && features != policy::FeatureSet::change)
    throw std::invalid_argument("encoder: unknown feature set");
}

EncoderParams::EncoderParams(EncoderArchitecture arch, std::vector<double> values)
    : arch_(arch), values_(std::move(values)) {
  arch_.validate();
  if (values_.size() != arch_.param_count())
    throw std::invalid_argument("encoder: parameter vector length " + std::to_string(values_.size()) +
                                " does not match architecture (" + std::to_string(arch_.param_count()) + ")");
}

EncoderParams EncoderParams::initialize(EncoderArchitecture arch, std::uint64_t seed) {
  arch.validate();
  std::vector<double> v(arch.param_count());
  Rng rng(mix_seed(seed, 0xE5C0DEULL));
  for (auto& x : v) x = -0.08 + 0.16 * uniform01(rng);
  const auto shape = lstm_shape(arch);
  const std::size_t b = shape.bias_offset();
  const std::size_t h = arch.hidden;
  for (std::size_t k = 0; k < 4 * h; ++k) v[b + k] = (k >= h && k < 2 * h) ? 1.0 : 0.0;
  const std::size_t bp = shape.param_count() + static_cast<std::size_t>(arch.latent) * h;
  for (std::size_t k = 0; k < arch.latent; ++k) v[bp + k] = 0.0;
  return EncoderParams(arch, std::move(v));
}

std::size_t EncoderParams::projection_offset() const { return lstm_shape(arch_).param_count(); }

bool EncoderParams::all_finite() const {
  for (double v : values_)
    if (!std::isfinite(v)) return false;
  return true;
}

void MetaConfig::validate() const {
  if (!(adapt_rate >= 0.0) || !(meta_rate >= 0.0)) throw std::invalid_argument("meta: learning rates must be >= 0");
  if (adapt_batch < 1 || meta_batch < 1) throw std::invalid_argument("meta: batch sizes must be >= 1");
  if (tasks < 1) throw std::invalid_argument("meta: K must be >= 1");
  if (!(train_probability >= 0.0 && train_probability <= 1.0))
    throw std::invalid_argument("meta: train_probability must lie in [0, 1]");
  estimator.validate();
}

LatentContext encode_tasks(const EncoderParams& psi, std::span<const Task* const> tasks) {
  return encode(psi, tasks).z;
}

LatentContext encode_tasks(const EncoderParams& psi, std::span<const Task> tasks) {
  const auto p = pointers(tasks);
  return encode_tasks(psi, p);
}

PolicyParams adapt_phi(const PolicyParams& phi, const LatentContext& z0, std::span<const Sample* const> batch,
                       const MetaConfig& cfg, train::OptimizerState& state) {
  return train::reinforce_update(phi, batch, adapt_config(cfg), z0, state);
}

double psi_objective(const EncoderParams& psi, const PolicyParams& phi0, std::span<const Task* const> batch,
                     const MetaConfig& cfg) {
  const auto enc = encode(psi, batch);
  return train::estimate_gradient(phi0, batch, cfg.estimator, enc.z).objective;
}

PsiGradient psi_gradient(const EncoderParams& psi, const PolicyParams& phi0, std::span<const Task* const> batch,
                         const MetaConfig& cfg) {
  if (psi.arch().latent != phi0.arch().latent)
    throw std::invalid_argument("update_psi: encoder and policy latent widths differ");
  const auto enc = encode(psi, batch);
  const auto est = train::estimate_gradient(phi0, batch, cfg.estimator, enc.z);
  const auto& a = psi.arch();
  const Vector gz = Eigen::Map<const Vector>(est.grad_z.data(), static_cast<Eigen::Index>(est.grad_z.size()));

  PsiGradient out;
  out.objective = est.objective;
  out.grad.assign(psi.size(), 0.0);
  double* g = out.grad.data();
  Eigen::Map<Matrix> gwp(g + psi.projection_offset(), a.latent, a.hidden);
  Eigen::Map<Vector> gbp(g + psi.projection_offset() + a.latent * a.hidden, a.latent);
  gwp += Matrix(gz * enc.pooled.transpose());
  gbp += gz;

  const Matrix wp = Eigen::Map<const Matrix>(psi.values().data() + psi.projection_offset(), a.latent, a.hidden);
  const Vector dpooled = wp.transpose() * gz;
  const auto k = static_cast<Eigen::Index>(batch.size());
  const Matrix dh = (dpooled / static_cast<double>(k)).replicate(1, k);
  nn::lstm_backward(psi.values().data(), lstm_shape(a), enc.cache, dh, g, nullptr);

  double sq = 0.0;
  for (double v : out.grad) sq += v * v;
  out.raw_norm = std::sqrt(sq);
  if (!std::isfinite(out.raw_norm)) throw std::runtime_error("update_psi: non-finite gradient, update aborted");
  if (out.raw_norm > cfg.estimator.grad_clip) {
    const double s = cfg.estimator.grad_clip / out.raw_norm;
    for (double& v : out.grad) v *= s;
  }
  return out;
}

EncoderParams update_psi(const EncoderParams& psi, const PolicyParams& phi0, std::span<const Task* const> batch,
                         const MetaConfig& cfg, train::OptimizerState& state) {
  const auto grad = psi_gradient(psi, phi0, batch, cfg);
  EncoderParams next = psi;
  train::apply_step(next.values(), grad.grad, cfg.meta_rate, cfg.estimator.optimizer, state);
  if (!next.all_finite()) throw std::runtime_error("update_psi: parameters became non-finite");
  return next;
}

MetaLearner::MetaLearner(PolicyParams p, EncoderParams e, std::vector<Task> prior_tasks, std::size_t capacity)
    : phi(std::move(p)), psi(std::move(e)), prior(std::move(prior_tasks)), memory(capacity) {
  if (psi.arch().latent != phi.arch().latent)
    throw std::invalid_argument("meta: encoder and policy latent widths differ");
}

void meta_pretrain(MetaLearner& learner, const MetaConfig& cfg, int iterations, std::uint64_t seed) {
  cfg.validate();
  if (learner.prior.empty()) throw std::invalid_argument("meta_pretrain: prior task set is empty");
  Rng rng(mix_seed(seed, 0x3E7AULL));
  std::vector<Sample> storage;
  for (int it = 0; it < iterations; ++it) {
    const auto encoded = sample_tasks(learner.prior, static_cast<std::size_t>(cfg.tasks), rng);
    const auto z = encode_tasks(learner.psi, encoded);
    auto batch = sample_tasks(learner.prior, static_cast<std::size_t>(cfg.adapt_batch), rng);
    if (cfg.estimator.symmetry_augmentation) train::augment_batch(batch, storage, rng);
    learner.phi = adapt_phi(learner.phi, z, batch, cfg, learner.phi_state);
    const auto tasks = sample_tasks(learner.prior, static_cast<std::size_t>(cfg.meta_batch), rng);
    learner.psi = update_psi(learner.psi, learner.phi, tasks, cfg, learner.psi_state);
    ++learner.updates;
  }
}

train::EpisodeResult run_meta_online(world::Environment& env, MetaLearner& learner, const MetaConfig& cfg,
                                     std::uint64_t seed, const std::string& policy_id) {
  cfg.validate();
  if (learner.prior.empty())
    throw std::invalid_argument("run_meta_online: no prior tasks; meta-training needs at least one successful run");
  Rng task_rng(mix_seed(seed, 0x7A5CULL));
  const auto encoded = sample_tasks(learner.prior, static_cast<std::size_t>(cfg.tasks), task_rng);
  LatentContext z = encode_tasks(learner.psi, encoded);

  std::vector<Sample> storage;
  train::LoopHooks hooks;
  hooks.act = [&](const policy::HistoryWindow& h) { return policy::forward(learner.phi, h, z); };
  hooks.train = [&](const train::ExperienceMemory& memory, Rng& rng) {
    auto batch = memory.sample_batch(static_cast<std::size_t>(cfg.adapt_batch), rng);
    if (cfg.estimator.symmetry_augmentation) train::augment_batch(batch, storage, rng);
    learner.phi = adapt_phi(learner.phi, z, batch, cfg, learner.phi_state);
    if (cfg.psi_online) {
      const auto tasks = sample_tasks(learner.prior, static_cast<std::size_t>(cfg.meta_batch), rng);
      learner.psi = update_psi(learner.psi, learner.phi, tasks, cfg, learner.psi_state);
      z = encode_tasks(learner.psi, encoded);
    }
    ++learner.updates;
  };
  return train::run_episode(env, learner.memory, learner.phi.arch().history, cfg.estimator.horizon,
                            cfg.train_probability, seed, policy_id, hooks);
}

std::vector<std::uint8_t> to_bytes(const PolicyParams& phi, const EncoderParams& psi) {
  std::vector<std::uint8_t> out;
  bytes::put_u8(out, kMetaCheckpointVersion);
  policy::append_policy_bytes(out, phi);
  const auto& a = psi.arch();
  for (auto v : {a.window, a.hidden, a.latent, static_cast<std::uint32_t>(a.features)}) bytes::put_u32(out, v);
  for (double v : psi.values()) bytes::put_f64(out, v);
  return out;
}

std::pair<PolicyParams, EncoderParams> from_bytes(std::span<const std::uint8_t> data) {
  if (data.empty()) throw std::runtime_error("meta checkpoint: empty");
  if (data[0] != kMetaCheckpointVersion)
    throw std::runtime_error("meta checkpoint: unsupported format version " + std::to_string(data[0]));
  std::size_t pos = 1;
  auto phi = policy::read_policy_bytes(data, pos);
  bytes::Reader r(data, pos);
  EncoderArchitecture a;
  a.window = r.u32();
  a.hidden = r.u32();
  a.latent = r.u32();
  a.features = static_cast<policy::FeatureSet>(r.u32());
  a.validate();
  const std::size_t n = a.param_count();
  if (r.remaining() != n * 8) throw std::runtime_error("meta checkpoint: encoder weight array has wrong length");
  std::vector<double> v(n);
  for (auto& x : v) x = r.f64();
  return {std::move(phi), EncoderParams(a, std::move(v))};
}

void save_checkpoint(const std::filesystem::path& path, const PolicyParams& phi, const EncoderParams& psi) {
  bytes::write_file(path, to_bytes(phi, psi));
}

std::pair<PolicyParams, EncoderParams> load_checkpoint(const std::filesystem::path& path) {
  return from_bytes(bytes::read_file(path));
}

}  // namespace sarlora::meta
