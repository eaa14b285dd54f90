#include "sarlora/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "json.hpp"

#include "sarlora/baselines.hpp"

namespace sarlora::harness {

double trajectory_deviation(const RunRecord& record, const RunRecord& reference) {
  const auto a = record.positions();
  const auto b = reference.positions();
  const std::size_t n = std::max(a.size(), b.size()) - 1;
  if (n == 0) return 0.0;
  double total = 0.0;
  for (std::size_t t = 1; t <= n; ++t) total += distance(a[std::min(t, a.size() - 1)], b[std::min(t, b.size() - 1)]);
  return total / static_cast<double>(n);
}

namespace {

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

}  // namespace

std::vector<PolicySummary> summarize(const std::vector<RunRecord>& records, int max_slots,
                                     const std::vector<std::optional<double>>* deviations) {
  std::vector<PolicySummary> out;
  std::map<std::string, std::size_t> index;
  struct Acc {
    std::vector<double> slots;
    std::vector<double> found;
    double reward = 0.0;
    double dev = 0.0;
    int dev_n = 0;
  };
  std::vector<Acc> acc;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& s = records[i].summary;
    auto it = index.find(s.policy);
    if (it == index.end()) {
      it = index.emplace(s.policy, out.size()).first;
      out.push_back({});
      out.back().policy = s.policy;
      acc.emplace_back();
    }
    auto& p = out[it->second];
    auto& a = acc[it->second];
    ++p.runs;
    if (s.status == RunStatus::failed) ++p.failed;
    if (s.slots_to_find) {
      ++p.successes;
      a.found.push_back(*s.slots_to_find);
    }
    if (s.reached_found_radius) ++p.reached_found_radius;
    a.slots.push_back(s.slots_to_find ? *s.slots_to_find : max_slots);
    a.reward += s.mean_reward;
    if (deviations && (*deviations)[i]) {
      a.dev += *(*deviations)[i];
      ++a.dev_n;
    }
  }
  for (std::size_t k = 0; k < out.size(); ++k) {
    auto& p = out[k];
    const auto& a = acc[k];
    p.success_rate = static_cast<double>(p.successes) / p.runs;
    p.median_slots = median(a.slots);
    if (!a.found.empty()) {
      double s = 0.0;
      for (double v : a.found) s += v;
      p.mean_slots_found = s / static_cast<double>(a.found.size());
    }
    p.mean_reward = a.reward / p.runs;
    if (a.dev_n > 0) p.mean_deviation_m = a.dev / a.dev_n;
  }
  return out;
}

policy::PolicyParams fresh_policy(const ExperimentConfig& cfg) {
  return policy::PolicyParams::initialize(cfg.policy, cfg.trainer.seed);
}

RunRecord run_one(const ExperimentConfig& cfg, PolicyKind kind, std::uint64_t seed, const Models& models, Mode mode) {
  const std::string id(config::policy_name(kind));
  RunRecord rec;
  try {
    world::Environment env(config::scenario_for_seed(cfg, seed));
    switch (kind) {
      case PolicyKind::optimal: rec = baselines::run_optimal(env, seed); break;
      case PolicyKind::greedy: rec = baselines::run_greedy(env, seed); break;
      case PolicyKind::rl: {
        auto tc = cfg.trainer;
        if (mode == Mode::frozen) tc.train_probability = 0.0;
        train::Learner learner(models.rl ? *models.rl : fresh_policy(cfg), tc.memory_capacity);
        rec = train::run_online(env, learner, tc, seed, id).record;
        break;
      }
      case PolicyKind::meta: {
        if (!models.meta) throw std::invalid_argument("meta policy requested without a meta checkpoint");
        auto mc = cfg.meta;
        if (mode == Mode::frozen) mc.train_probability = 0.0;
        meta::MetaLearner learner = *models.meta;
        learner.memory = train::ExperienceMemory(cfg.trainer.memory_capacity);
        learner.phi_state = {};
        learner.psi_state = {};
        rec = meta::run_meta_online(env, learner, mc, seed, id).record;
        break;
      }
    }
  } catch (const std::exception& e) {
    rec = RunRecord{};
    rec.summary.policy = id;
    rec.summary.seed = seed;
    rec.summary.status = RunStatus::failed;
    rec.summary.error = e.what();
  }
  rec.summary.config_hash = config::config_hash(cfg);
  return rec;
}

std::uint64_t training_seed(const ExperimentConfig& cfg, int episode) {
  return mix_seed(cfg.trainer.seed, 0x7EA1000000ULL + static_cast<std::uint64_t>(episode));
}

RlTraining train_rl(const ExperimentConfig& cfg, const Progress& progress) {
  RlTraining out{train::Learner(fresh_policy(cfg), cfg.trainer.memory_capacity), {}, {}};
  for (int e = 0; e < cfg.trainer.max_episodes; ++e) {
    const auto seed = training_seed(cfg, e);
    world::Environment env(config::scenario_for_seed(cfg, seed));
    auto res = train::run_online(env, out.learner, cfg.trainer, seed, "rl");
    if (res.record.summary.status == RunStatus::failed)
      throw std::runtime_error("training episode " + std::to_string(e) + " failed: " + res.record.summary.error);
    EpisodeStat st;
    st.episode = e;
    st.seed = seed;
    st.slots = static_cast<int>(res.record.rows.size());
    st.success = res.record.summary.slots_to_find.has_value();
    st.mean_reward = res.record.summary.mean_reward;
    st.sum_return = res.record.rows.empty() ? 0.0 : res.record.rows.back().cumulative_return;
    st.updates = out.learner.updates;
    if (st.success) {
      auto tail = train::tail_samples(res.samples, st.slots);
      out.prior_tasks.insert(out.prior_tasks.end(), std::make_move_iterator(tail.begin()),
                             std::make_move_iterator(tail.end()));
    }
    out.log.push_back(st);
    if (progress) progress(st);
  }
  return out;
}

meta::MetaLearner train_meta(const ExperimentConfig& cfg, policy::PolicyParams theta, std::vector<meta::Task> prior) {
  if (prior.empty()) throw std::invalid_argument("train-meta: prior memory holds no tasks from successful runs");
  auto psi = meta::EncoderParams::initialize(cfg.encoder, cfg.trainer.seed);
  meta::MetaLearner learner(std::move(theta), std::move(psi), std::move(prior), cfg.trainer.memory_capacity);
  meta::meta_pretrain(learner, cfg.meta, cfg.meta_pretrain_iterations, cfg.trainer.seed);
  learner.phi_state = {};
  learner.psi_state = {};
  return learner;
}

Experiment run_experiment(const ExperimentConfig& cfg, const std::vector<PolicyKind>& kinds, const Models& models,
                          Mode mode, bool with_deviation) {
  Experiment ex;
  for (auto seed : cfg.seeds) {
    std::optional<RunRecord> reference;
    if (with_deviation) reference = run_one(cfg, PolicyKind::optimal, seed, models, mode);
    for (auto k : kinds) {
      RunRecord rec = (k == PolicyKind::optimal && reference) ? *reference : run_one(cfg, k, seed, models, mode);
      std::optional<double> dev;
      if (reference && reference->summary.status == RunStatus::ok && rec.summary.status == RunStatus::ok)
        dev = trajectory_deviation(rec, *reference);
      ex.records.push_back(std::move(rec));
      ex.deviations.push_back(dev);
    }
  }
  ex.summary = summarize(ex.records, cfg.scenario.max_slots, &ex.deviations);
  return ex;
}

std::string summary_json(const ExperimentConfig& cfg, const Experiment& ex) {
  using nlohmann::ordered_json;
  ordered_json j;
  j["config_hash"] = config::config_hash(cfg);
  j["max_slots"] = cfg.scenario.max_slots;
  ordered_json runs = ordered_json::array();
  for (std::size_t i = 0; i < ex.records.size(); ++i) {
    const auto& s = ex.records[i].summary;
    ordered_json r;
    r["policy"] = s.policy;
    r["seed"] = s.seed;
    r["status"] = s.status == RunStatus::ok ? "OK" : "FAILED";
    if (s.status == RunStatus::failed) r["error"] = s.error;
    if (s.slots_to_find)
      r["slots_to_find"] = *s.slots_to_find;
    else
      r["slots_to_find"] = "NOT_FOUND";
    r["reached_found_radius"] = s.reached_found_radius;
    r["mean_reward_dbm"] = s.mean_reward;
    r["slots"] = ex.records[i].rows.size();
    if (i < ex.deviations.size() && ex.deviations[i]) r["trajectory_deviation_m"] = *ex.deviations[i];
    runs.push_back(r);
  }
  j["runs"] = runs;
  ordered_json table = ordered_json::array();
  for (const auto& p : ex.summary) {
    ordered_json r;
    r["policy"] = p.policy;
    r["runs"] = p.runs;
    r["failed"] = p.failed;
    r["successes"] = p.successes;
    r["success_rate"] = p.success_rate;
    r["median_slots_to_find"] = p.median_slots;
    r["mean_slots_to_find"] = p.mean_slots_found ? ordered_json(*p.mean_slots_found) : ordered_json(nullptr);
    r["mean_reward_dbm"] = p.mean_reward;
    r["reached_found_radius"] = p.reached_found_radius;
    r["mean_trajectory_deviation_m"] = p.mean_deviation_m ? ordered_json(*p.mean_deviation_m) : ordered_json(nullptr);
    table.push_back(r);
  }
  j["summary"] = table;
  return j.dump(2) + "\n";
}

void write_outputs(const ExperimentConfig& cfg, const Experiment& ex, const std::filesystem::path& out) {
  std::filesystem::create_directories(out);
  for (const auto& rec : ex.records) {
    const auto dir = out / rec.summary.policy;
    std::filesystem::create_directories(dir);
    std::ofstream f(dir / ("seed_" + std::to_string(rec.summary.seed) + ".csv"), std::ios::binary);
    write_run_csv(f, rec);
  }
  std::ofstream j(out / "summary.json", std::ios::binary);
  j << summary_json(cfg, ex);
  std::ofstream c(out / "config.yaml", std::ios::binary);
  c << config::to_yaml(cfg);
}

void write_training_log(const std::filesystem::path& path, const std::vector<EpisodeStat>& log) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  f << "episode,seed,slots,success,mean_reward_dbm,sum_reward_dbm,updates\n";
  for (const auto& s : log)
    f << s.episode << ',' << s.seed << ',' << s.slots << ',' << (s.success ? 1 : 0) << ','
      << format_double(s.mean_reward) << ',' << format_double(s.sum_return) << ',' << s.updates << '\n';
}

}  // namespace sarlora::harness
