#include "sarlora/policy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "sarlora/bytes.hpp"

namespace sarlora::policy {

using nn::Matrix;
using nn::Vector;

std::size_t Architecture::param_count() const {
  const std::size_t r = recurrent;
  const std::size_t d = dense;
  const std::size_t a = actions;
  return lstm_shape().param_count() + d * r + d + a * d + a;
}

void Architecture::validate() const {
  if (history < 1) throw std::invalid_argument("policy: history must be >= 1");
  if (recurrent < 1 || dense < 1) throw std::invalid_argument("policy: layer widths must be >= 1");
  if (actions != static_cast<std::uint32_t>(world::kActionCount))
    throw std::invalid_argument("policy: action count must be 5");
  if (features != FeatureSet::level && features != FeatureSet::change)
    throw std::invalid_argument("policy: unknown feature set");
}

void HistoryWindow::push(const HistoryEntry& e) {
  if (capacity_ == 0) return;
  if (entries_.size() == capacity_) entries_.erase(entries_.begin());
  entries_.push_back(e);
}

double HistoryWindow::mean_reward() const {
  if (entries_.empty()) return 0.0;
  double s = 0.0;
  for (const auto& e : entries_) s += radio::recover_signal_power(e.rssi_dbm, e.snr_db);
  return s / static_cast<double>(entries_.size());
}

double normalized_rssi(double rssi_dbm) { return (rssi_dbm + 120.0) / 60.0; }
double normalized_snr(double snr_db) { return snr_db / 30.0; }

bool LatentContext::is_null() const {
  return std::all_of(z.begin(), z.end(), [](double v) { return v == 0.0; });
}

PolicyParams::PolicyParams(Architecture arch) : arch_(arch) {
  arch_.validate();
  values_.assign(arch_.param_count(), 0.0);
}

PolicyParams::PolicyParams(Architecture arch, std::vector<double> values) : arch_(arch), values_(std::move(values)) {
  arch_.validate();
  if (values_.size() != arch_.param_count())
    throw std::invalid_argument("policy: parameter vector length " + std::to_string(values_.size()) +
                                " does not match architecture (" + std::to_string(arch_.param_count()) + ")");
}

PolicyParams PolicyParams::initialize(Architecture arch, std::uint64_t seed) {
  PolicyParams p(arch);
  Rng rng(mix_seed(seed, 0x1A17ULL));
  for (auto& v : p.values_) v = -0.08 + 0.16 * uniform01(rng);
  const auto shape = arch.lstm_shape();
  const std::size_t b = shape.bias_offset();
  const std::size_t r = arch.recurrent;
  for (std::size_t k = 0; k < 4 * r; ++k) p.values_[b + k] = (k >= r && k < 2 * r) ? 1.0 : 0.0;
  const std::size_t d = arch.dense;
  const std::size_t b1 = p.dense_offset() + d * r;
  for (std::size_t k = 0; k < d; ++k) p.values_[b1 + k] = 0.0;
  const std::size_t b2 = p.output_offset() + arch.actions * d;
  for (std::size_t k = 0; k < arch.actions; ++k) p.values_[b2 + k] = 0.0;
  return p;
}

bool PolicyParams::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

std::size_t PolicyParams::dense_offset() const { return arch_.lstm_shape().param_count(); }

std::size_t PolicyParams::output_offset() const {
  return dense_offset() + static_cast<std::size_t>(arch_.dense) * (arch_.recurrent + 1);
}

bool PolicyParams::is_latent_input_weight(std::size_t index) const {
  const auto shape = arch_.lstm_shape();
  const std::size_t rows = 4 * static_cast<std::size_t>(shape.hidden);
  if (index >= rows * static_cast<std::size_t>(shape.input)) return false;
  const std::size_t col = index / rows;
  return col >= static_cast<std::size_t>(arch_.feature_width());
}

namespace {

// Owned copies keep products independent of the heap address of the
// parameter vector (see lstm.cpp).
struct HeadWeights {
  Matrix w1;
  Vector b1;
  Matrix w2;
  Vector b2;

  explicit HeadWeights(const PolicyParams& p)
      : w1(Eigen::Map<const Matrix>(p.values().data() + p.dense_offset(), p.arch().dense, p.arch().recurrent)),
        b1(Eigen::Map<const Vector>(p.values().data() + p.dense_offset() + p.arch().dense * p.arch().recurrent,
                                    p.arch().dense)),
        w2(Eigen::Map<const Matrix>(p.values().data() + p.output_offset(), p.arch().actions, p.arch().dense)),
        b2(Eigen::Map<const Vector>(p.values().data() + p.output_offset() + p.arch().actions * p.arch().dense,
                                    p.arch().actions)) {}
};

struct HeadForward {
  Matrix hidden;  // sigmoid(W1 h + b1)
  Matrix probs;
};

void softmax_columns(Matrix& logits) {
  for (Eigen::Index b = 0; b < logits.cols(); ++b) {
    auto col = logits.col(b);
    const double m = col.maxCoeff();
    col = (col.array() - m).exp().matrix();
    col /= col.sum();
  }
}

HeadForward head_forward(const PolicyParams& params, const Matrix& h) {
  const HeadWeights v(params);
  HeadForward out;
  out.hidden = v.w1 * h;
  out.hidden.colwise() += v.b1;
  out.hidden = out.hidden.unaryExpr([](double x) { return nn::sigmoid(x); });
  out.probs = v.w2 * out.hidden;
  out.probs.colwise() += v.b2;
  softmax_columns(out.probs);
  return out;
}

void fill_window_features(const Architecture& arch, const HistoryWindow& w, const LatentContext& z,
                          std::vector<Matrix>& steps, Eigen::Index col) {
  const std::size_t h = arch.history;
  const auto& entries = w.entries();
  if (entries.size() > h) throw std::invalid_argument("policy: history window longer than architecture history");
  if (z.width() != arch.latent)
    throw std::invalid_argument("policy: latent width " + std::to_string(z.width()) + " does not match architecture (" +
                                std::to_string(arch.latent) + ")");
  const std::size_t pad = h - entries.size();
  for (std::size_t s = 0; s < h; ++s) {
    auto x = steps[s].col(col);
    x.setZero();
    if (s < pad) {
      x(2 + world::code(Action::H)) = 1.0;
    } else {
      const std::size_t i = s - pad;
      const auto& e = entries[i];
      x(0) = normalized_rssi(e.rssi_dbm);
      x(1) = normalized_snr(e.snr_db);
      x(2 + world::code(e.action)) = 1.0;
      if (arch.features == FeatureSet::change && i > 0) {
        const double change = radio::recover_signal_power(e.rssi_dbm, e.snr_db) -
                              radio::recover_signal_power(entries[i - 1].rssi_dbm, entries[i - 1].snr_db);
        x(2 + world::kActionCount + world::code(e.action)) = change / kChangeScaleDb;
      }
    }
    for (std::size_t k = 0; k < z.width(); ++k) x(arch.feature_width() + static_cast<Eigen::Index>(k)) = z.z[k];
  }
}

}  // namespace

WindowBatch make_batch(const Architecture& arch, std::span<const HistoryWindow> windows,
                       std::span<const LatentContext* const> latents) {
  if (latents.size() != 1 && latents.size() != windows.size())
    throw std::invalid_argument("policy: latent list must have one entry or one per window");
  WindowBatch batch;
  const auto n = static_cast<Eigen::Index>(windows.size());
  batch.steps.assign(arch.history, Matrix(arch.input_width(), n));
  for (Eigen::Index b = 0; b < n; ++b) {
    const auto& z = *latents[latents.size() == 1 ? 0 : static_cast<std::size_t>(b)];
    fill_window_features(arch, windows[static_cast<std::size_t>(b)], z, batch.steps, b);
  }
  return batch;
}

Matrix batch_probabilities(const PolicyParams& params, const WindowBatch& batch) {
  nn::LstmCache cache;
  lstm_forward(params.values().data(), params.arch().lstm_shape(), batch.steps, cache);
  return head_forward(params, cache.final_hidden()).probs;
}

double batch_log_prob_grad(const PolicyParams& params, const WindowBatch& batch, std::span<const Action> actions,
                           std::span<const double> weights, std::span<double> grad_params, Matrix* grad_latent,
                           double entropy_weight) {
  const auto n = batch.size();
  if (static_cast<std::size_t>(n) != actions.size() || actions.size() != weights.size())
    throw std::invalid_argument("policy: batch, actions and weights differ in length");
  if (grad_params.size() != params.size()) throw std::invalid_argument("policy: gradient buffer has wrong length");
  const auto& arch = params.arch();
  const auto shape = arch.lstm_shape();

  nn::LstmCache cache;
  lstm_forward(params.values().data(), shape, batch.steps, cache);
  const HeadForward head = head_forward(params, cache.final_hidden());

  double total = 0.0;
  Matrix dlogits = -head.probs;
  for (Eigen::Index b = 0; b < n; ++b) {
    const int a = world::code(actions[static_cast<std::size_t>(b)]);
    total += weights[static_cast<std::size_t>(b)] * std::log(head.probs(a, b));
    dlogits(a, b) += 1.0;
    dlogits.col(b) *= weights[static_cast<std::size_t>(b)];
  }
  if (entropy_weight != 0.0) {
    // dH/dlogit_j = -p_j (log p_j + H)
    for (Eigen::Index b = 0; b < n; ++b) {
      double h = 0.0;
      for (Eigen::Index j = 0; j < head.probs.rows(); ++j) {
        const double p = head.probs(j, b);
        if (p > 0.0) h -= p * std::log(p);
      }
      total += entropy_weight * h;
      for (Eigen::Index j = 0; j < head.probs.rows(); ++j) {
        const double p = head.probs(j, b);
        if (p > 0.0) dlogits(j, b) -= entropy_weight * p * (std::log(p) + h);
      }
    }
  }

  const HeadWeights v(params);
  double* g = grad_params.data();
  Eigen::Map<Matrix> gw1(g + params.dense_offset(), arch.dense, arch.recurrent);
  Eigen::Map<Vector> gb1(g + params.dense_offset() + arch.dense * arch.recurrent, arch.dense);
  Eigen::Map<Matrix> gw2(g + params.output_offset(), arch.actions, arch.dense);
  Eigen::Map<Vector> gb2(g + params.output_offset() + arch.actions * arch.dense, arch.actions);

  gw2 += Matrix(dlogits * head.hidden.transpose());
  gb2 += Vector(dlogits.rowwise().sum());
  Matrix da1 = v.w2.transpose() * dlogits;
  da1.array() *= head.hidden.array() * (1.0 - head.hidden.array());
  gw1 += Matrix(da1 * cache.final_hidden().transpose());
  gb1 += Vector(da1.rowwise().sum());
  const Matrix dh = v.w1.transpose() * da1;

  std::vector<Matrix> dx;
  lstm_backward(params.values().data(), shape, cache, dh, g, grad_latent ? &dx : nullptr);
  if (grad_latent) {
    const auto lw = static_cast<Eigen::Index>(arch.latent);
    *grad_latent = Matrix::Zero(lw, n);
    for (const auto& d : dx) *grad_latent += d.bottomRows(lw);
  }
  return total;
}

ActionDistribution forward(const PolicyParams& params, const HistoryWindow& hist, const LatentContext& z) {
  const LatentContext* zs[] = {&z};
  const Matrix p = batch_probabilities(params, make_batch(params.arch(), std::span(&hist, 1), zs));
  ActionDistribution d;
  for (int a = 0; a < world::kActionCount; ++a) d.p[static_cast<std::size_t>(a)] = p(a, 0);
  return d;
}

Action sample_action(const ActionDistribution& dist, Rng& rng) {
  const double u = uniform01(rng);
  double cdf = 0.0;
  for (int a = 0; a < world::kActionCount; ++a) {
    cdf += dist.p[static_cast<std::size_t>(a)];
    if (u < cdf) return world::action_from_code(a);
  }
  // Rounding left u above the accumulated mass; take the last action with support.
  for (int a = world::kActionCount - 1; a >= 0; --a)
    if (dist.p[static_cast<std::size_t>(a)] > 0.0) return world::action_from_code(a);
  return Action::H;
}

LogProbGrad log_prob_and_grad(const PolicyParams& params, const HistoryWindow& hist, const LatentContext& z, Action a) {
  const LatentContext* zs[] = {&z};
  const auto batch = make_batch(params.arch(), std::span(&hist, 1), zs);
  LogProbGrad out;
  out.grad_params.assign(params.size(), 0.0);
  Matrix gz;
  const double w = 1.0;
  out.log_prob = batch_log_prob_grad(params, batch, std::span(&a, 1), std::span(&w, 1), out.grad_params, &gz);
  out.grad_z.assign(gz.data(), gz.data() + gz.size());
  return out;
}

world::Trajectory rollout(world::Environment& env, HistoryWindow& hist, const PolicyParams& params,
                          const LatentContext& z, int horizon, Rng& rng) {
  world::Trajectory traj;
  traj.start_slot = env.slot();
  for (int k = 0; k < horizon && !env.done(); ++k) {
    const Action a = sample_action(forward(params, hist, z), rng);
    const auto r = env.step(a);
    hist.push(r.message, a);
    traj.steps.push_back({a, r.message, r.reward});
  }
  return traj;
}

void append_policy_bytes(std::vector<std::uint8_t>& out, const PolicyParams& params) {
  const auto& a = params.arch();
  for (auto v : {a.history, a.recurrent, a.dense, a.latent, a.actions, static_cast<std::uint32_t>(a.features)})
    bytes::put_u32(out, v);
  for (double v : params.values()) bytes::put_f64(out, v);
}

PolicyParams read_policy_bytes(std::span<const std::uint8_t> data, std::size_t& pos) {
  bytes::Reader r(data, pos);
  Architecture a;
  a.history = r.u32();
  a.recurrent = r.u32();
  a.dense = r.u32();
  a.latent = r.u32();
  a.actions = r.u32();
  a.features = static_cast<FeatureSet>(r.u32());
  a.validate();
  const std::size_t n = a.param_count();
  if (r.remaining() < n * 8) throw std::runtime_error("checkpoint: weight array truncated");
  std::vector<double> values(n);
  for (auto& v : values) v = r.f64();
  pos = r.pos();
  return PolicyParams(a, std::move(values));
}

std::vector<std::uint8_t> to_bytes(const PolicyParams& params) {
  std::vector<std::uint8_t> out;
  out.reserve(1 + 24 + params.size() * 8);
  bytes::put_u8(out, kCheckpointVersion);
  append_policy_bytes(out, params);
  return out;
}

PolicyParams from_bytes(std::span<const std::uint8_t> data) {
  if (data.empty()) throw std::runtime_error("checkpoint: empty");
  if (data[0] != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported format version " + std::to_string(data[0]));
  std::size_t pos = 1;
  auto p = read_policy_bytes(data, pos);
  if (pos != data.size()) throw std::runtime_error("checkpoint: trailing bytes");
  return p;
}

void save_checkpoint(const std::filesystem::path& path, const PolicyParams& params) {
  bytes::write_file(path, to_bytes(params));
}

PolicyParams load_checkpoint(const std::filesystem::path& path) { return from_bytes(bytes::read_file(path)); }

}  // namespace sarlora::policy
