// sarlab: command-line front end of the search-and-rescue simulation lab.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sarlora/config.hpp"
#include "sarlora/harness.hpp"
#include "sarlora/radio.hpp"
#include "sarlora/record.hpp"
#include "sarlora/telemetry.hpp"
#include "sarlora/train_meta.hpp"
#include "sarlora/train_rl.hpp"

namespace fs = std::filesystem;
using namespace sarlora;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitFailedRun = 2;

struct CommonOptions {
  std::string config_path;
  std::string policy;
  std::string seeds;
  std::string out;
  std::string checkpoint;
  std::string meta_checkpoint;
  std::string prior_memory;
  std::string frames;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

config::ExperimentConfig load_config(const CommonOptions& o) {
  config::ExperimentConfig cfg;
  try {
    cfg = o.config_path.empty() ? config::parse("") : config::load(o.config_path);
    if (!o.policy.empty()) cfg.kind = config::policy_from_name(o.policy);
    if (!o.seeds.empty()) cfg.seeds = config::parse_seeds(o.seeds);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (!o.out.empty()) cfg.out_dir = o.out;
  if (!o.checkpoint.empty()) cfg.checkpoint = o.checkpoint;
  if (!o.prior_memory.empty()) cfg.prior_memory = o.prior_memory;
  return cfg;
}

std::vector<meta::Task> load_prior(const config::ExperimentConfig& cfg) {
  const fs::path p = cfg.prior_memory ? *cfg.prior_memory : cfg.out_dir / "prior.mem";
  return train::load_memory(p);
}

harness::Models load_models(const config::ExperimentConfig& cfg, const CommonOptions& o, bool need_rl,
                            bool need_meta) {
  harness::Models m;
  if (need_rl && cfg.checkpoint) m.rl = policy::load_checkpoint(*cfg.checkpoint);
  if (need_meta) {
    const fs::path mp = !o.meta_checkpoint.empty()
                            ? fs::path(o.meta_checkpoint)
                            : (cfg.kind == config::PolicyKind::meta && cfg.checkpoint ? *cfg.checkpoint
                                                                                      : cfg.out_dir / "meta.ckpt");
    auto [phi, psi] = meta::load_checkpoint(mp);
    m.meta.emplace(std::move(phi), std::move(psi), load_prior(cfg), cfg.trainer.memory_capacity);
  }
  return m;
}

int finish(const config::ExperimentConfig& cfg, const harness::Experiment& ex) {
  harness::write_outputs(cfg, ex, cfg.out_dir);
  bool failed = false;
  for (const auto& r : ex.records)
    if (r.summary.status == RunStatus::failed) {
      failed = true;
      std::cerr << "FAILED " << r.summary.policy << " seed " << r.summary.seed << ": " << r.summary.error << '\n';
    }
  for (const auto& p : ex.summary) {
    std::cout << p.policy << ": runs " << p.runs << ", success " << p.successes << "/" << p.runs << ", median slots "
              << p.median_slots << ", mean reward " << format_double(p.mean_reward) << " dBm";
    if (p.mean_deviation_m) std::cout << ", mean deviation " << format_double(*p.mean_deviation_m) << " m";
    std::cout << '\n';
  }
  std::cout << "wrote " << (cfg.out_dir / "summary.json").string() << '\n';
  return failed ? kExitFailedRun : kExitOk;
}

int cmd_run(const CommonOptions& o, harness::Mode mode) {
  const auto cfg = load_config(o);
  const bool learned = cfg.kind == config::PolicyKind::rl || cfg.kind == config::PolicyKind::meta;
  if (learned && mode == harness::Mode::frozen && cfg.kind == config::PolicyKind::rl && !cfg.checkpoint)
    throw UsageError("simulate --policy rl needs --checkpoint");
  const auto models = load_models(cfg, o, cfg.kind == config::PolicyKind::rl, cfg.kind == config::PolicyKind::meta);
  const auto ex = harness::run_experiment(cfg, {cfg.kind}, models, mode, false);
  return finish(cfg, ex);
}

int cmd_compare(const CommonOptions& o) {
  const auto cfg = load_config(o);
  std::vector<config::PolicyKind> kinds{config::PolicyKind::optimal, config::PolicyKind::greedy,
                                        config::PolicyKind::rl};
  const bool with_meta = !o.meta_checkpoint.empty() || fs::exists(cfg.out_dir / "meta.ckpt");
  if (with_meta) kinds.push_back(config::PolicyKind::meta);
  const auto models = load_models(cfg, o, true, with_meta);
  const auto ex = harness::run_experiment(cfg, kinds, models, harness::Mode::online, true);
  return finish(cfg, ex);
}

int cmd_train_rl(const CommonOptions& o) {
  const auto cfg = load_config(o);
  auto result = harness::train_rl(cfg, [](const harness::EpisodeStat& s) {
    std::cout << "episode " << s.episode << ": slots " << s.slots << (s.success ? " found" : " not found")
              << ", mean reward " << format_double(s.mean_reward) << " dBm, updates " << s.updates << '\n';
  });
  const fs::path ckpt = cfg.checkpoint ? *cfg.checkpoint : cfg.out_dir / "rl.ckpt";
  policy::save_checkpoint(ckpt, result.learner.params);
  harness::write_training_log(cfg.out_dir / "training.csv", result.log);
  const fs::path mem = cfg.prior_memory ? *cfg.prior_memory : cfg.out_dir / "prior.mem";
  train::save_memory(mem, result.prior_tasks, cfg.policy.history);
  std::ofstream(cfg.out_dir / "config.yaml", std::ios::binary) << config::to_yaml(cfg);
  std::cout << "wrote " << ckpt.string() << ", " << mem.string() << " (" << result.prior_tasks.size()
            << " prior tasks)\n";
  return kExitOk;
}

int cmd_train_meta(const CommonOptions& o) {
  const auto cfg = load_config(o);
  const fs::path rl = cfg.checkpoint ? *cfg.checkpoint : cfg.out_dir / "rl.ckpt";
  auto theta = policy::load_checkpoint(rl);
  auto learner = harness::train_meta(cfg, std::move(theta), load_prior(cfg));
  const fs::path out = !o.meta_checkpoint.empty() ? fs::path(o.meta_checkpoint) : cfg.out_dir / "meta.ckpt";
  meta::save_checkpoint(out, learner.phi, learner.psi);
  std::ofstream(cfg.out_dir / "config.yaml", std::ios::binary) << config::to_yaml(cfg);
  std::cout << "wrote " << out.string() << " after " << learner.updates << " meta iterations\n";
  return kExitOk;
}

int cmd_replay(const CommonOptions& o) {
  const auto cfg = load_config(o);
  if (o.frames.empty()) throw UsageError("replay needs --frames PATH");
  const auto frames = telemetry::load_frames(o.frames);
  fs::create_directories(cfg.out_dir);
  std::ofstream csv(cfg.out_dir / "replay.csv", std::ios::binary);
  csv << "seq,x_m,y_m,rssi_dbm,snr_db,signal_dbm,view_radius_m\n";
  for (const auto& f : frames) {
    const auto& m = f.message;
    std::string radius;
    try {
      radius = format_double(radio::view_circle_radius(m.rssi_dbm, m.snr_db, cfg.scenario.altitude_m,
                                                        cfg.scenario.radio));
    } catch (const std::exception&) {
      radius = "";
    }
    csv << f.seq << ',' << format_double(m.x_m) << ',' << format_double(m.y_m) << ',' << format_double(m.rssi_dbm)
        << ',' << format_double(m.snr_db) << ',' << format_double(radio::recover_signal_power(m.rssi_dbm, m.snr_db))
        << ',' << radius << '\n';
  }
  std::cout << "decoded " << frames.size() << " frames into " << (cfg.out_dir / "replay.csv").string() << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"UAV LoRa search-and-rescue simulation lab"};
  app.require_subcommand(1);
  CommonOptions o;

  auto add_common = [&](CLI::App* c) {
    c->add_option("--config", o.config_path, "YAML experiment config")->check(CLI::ExistingFile);
    c->add_option("--policy", o.policy, "optimal | greedy | rl | meta");
    c->add_option("--seeds", o.seeds, "seed list, e.g. 1..20 or 1,4,9");
    c->add_option("--out", o.out, "output directory");
    c->add_option("--checkpoint", o.checkpoint, "policy checkpoint");
    c->add_option("--meta-checkpoint", o.meta_checkpoint, "meta checkpoint (policy + encoder)");
    c->add_option("--prior-memory", o.prior_memory, "experience memory of prior successful runs");
  };
  auto* simulate = app.add_subcommand("simulate", "run a policy with frozen parameters");
  auto* train_rl = app.add_subcommand("train-rl", "train the RL policy over plain episodes");
  auto* train_meta = app.add_subcommand("train-meta", "meta-train on prior memories");
  auto* eval = app.add_subcommand("eval", "run a policy with online learning per seed");
  auto* compare = app.add_subcommand("compare", "optimal, greedy, rl and meta on paired seeds");
  auto* replay = app.add_subcommand("replay", "decode a .frames file");
  for (auto* c : {simulate, train_rl, train_meta, eval, compare, replay}) add_common(c);
  replay->add_option("--frames", o.frames, "concatenated telemetry frames")->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*simulate) return cmd_run(o, harness::Mode::frozen);
    if (*eval) return cmd_run(o, harness::Mode::online);
    if (*compare) return cmd_compare(o);
    if (*train_rl) return cmd_train_rl(o);
    if (*train_meta) return cmd_train_meta(o);
    if (*replay) return cmd_replay(o);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailedRun;
  }
  return kExitUsage;
}
