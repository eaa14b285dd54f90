#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sarlora/harness.hpp"

using namespace sarlora;
using namespace sarlora::harness;
namespace fs = std::filesystem;

namespace {

RunRecord track(Point2 start, const std::vector<Point2>& pts, std::string policy = "rl", std::uint64_t seed = 1) {
  RunRecord r;
  r.start = start;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    RunRow row;
    row.slot = static_cast<int>(i) + 1;
    row.x_m = pts[i].x;
    row.y_m = pts[i].y;
    r.rows.push_back(row);
  }
  r.summary.policy = std::move(policy);
  r.summary.seed = seed;
  return r;
}

RunRecord outcome(const std::string& policy, std::optional<int> slots, double mean_reward, bool reached = false) {
  RunRecord r;
  r.summary.policy = policy;
  r.summary.slots_to_find = slots;
  r.summary.mean_reward = mean_reward;
  r.summary.reached_found_radius = reached;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

ExperimentConfig noiseless_fixed(Point2 start, Point2 poi) {
  auto cfg = config::parse("");
  cfg.scenario.radio.shadow_sigma_db = 0.0;
  cfg.scenario.radio.rician_k_db = radio::kRicianKCapDb;
  cfg.scenario.uav_start = start;
  cfg.scenario.poi = poi;
  cfg.placement.randomize_poi = false;
  return cfg;
}

}  // namespace

TEST_CASE("trajectory deviation") {
  SUBCASE("a record against itself") {
    const auto a = track({0, 0}, {{40, 0}, {80, 0}, {80, 40}});
    CHECK(trajectory_deviation(a, a) == 0.0);
  }
  SUBCASE("parallel lines 100 m apart") {
    std::vector<Point2> p, q;
    for (int i = 1; i <= 20; ++i) {
      p.push_back({40.0 * i, 0.0});
      q.push_back({40.0 * i, 100.0});
    }
    CHECK(trajectory_deviation(track({0, 0}, p), track({0, 100}, q)) == doctest::Approx(100.0).epsilon(1e-15));
  }
  SUBCASE("hand-built three-slot pair") {
    const auto a = track({0, 0}, {{40, 0}, {40, 40}, {0, 40}});
    const auto b = track({0, 0}, {{0, 40}, {0, 80}, {0, 120}});
    // slot 1: |(40,0)-(0,40)| = 40 sqrt 2; slot 2: |(40,40)-(0,80)| = 40 sqrt 2;
    // slot 3: |(0,40)-(0,120)| = 80
    CHECK(trajectory_deviation(a, b) == doctest::Approx((80.0 * std::sqrt(2.0) + 80.0) / 3.0).epsilon(1e-14));
  }
  SUBCASE("the shorter track holds its final position") {
    const auto a = track({0, 0}, {{40, 0}, {80, 0}, {120, 0}, {160, 0}});
    const auto ref = track({0, 0}, {{40, 0}, {80, 0}});
    // slots 3 and 4 compare against (80, 0): distances 0, 0, 40, 80
    CHECK(trajectory_deviation(a, ref) == doctest::Approx(30.0));
    CHECK(trajectory_deviation(ref, a) == doctest::Approx(30.0));
  }
  SUBCASE("no slots") {
    CHECK(trajectory_deviation(track({5, 5}, {}), track({5, 5}, {})) == 0.0);
  }
}

TEST_CASE("summary table") {
  SUBCASE("single record gives its own values") {
    const std::vector<RunRecord> recs{outcome("rl", 57, -95.5, true)};
    const auto s = summarize(recs, 600);
    REQUIRE(s.size() == 1);
    CHECK(s[0].runs == 1);
    CHECK(s[0].successes == 1);
    CHECK(s[0].success_rate == 1.0);
    CHECK(s[0].median_slots == 57.0);
    CHECK(*s[0].mean_slots_found == 57.0);
    CHECK(s[0].mean_reward == -95.5);
    CHECK(s[0].reached_found_radius == 1);
    CHECK_FALSE(s[0].mean_deviation_m.has_value());
  }
  SUBCASE("all not found") {
    const std::vector<RunRecord> recs{outcome("greedy", std::nullopt, -110), outcome("greedy", std::nullopt, -112)};
    const auto s = summarize(recs, 600);
    CHECK(s[0].success_rate == 0.0);
    CHECK(s[0].median_slots == 600.0);
    CHECK_FALSE(s[0].mean_slots_found.has_value());
  }
  SUBCASE("mixed set against a direct recomputation") {
    Rng rng(5);
    std::vector<RunRecord> recs;
    std::vector<std::optional<double>> devs;
    for (int i = 0; i < 41; ++i) {
      const std::string p = i % 3 == 0 ? "meta" : (i % 3 == 1 ? "rl" : "greedy");
      std::optional<int> slots;
      if (uniform01(rng) < 0.6) slots = 1 + static_cast<int>(uniform_index(rng, 599));
      recs.push_back(outcome(p, slots, -120.0 + 30.0 * uniform01(rng)));
      devs.push_back(i % 5 == 0 ? std::nullopt : std::optional<double>(1000.0 * uniform01(rng)));
    }
    const auto s = summarize(recs, 600, &devs);
    REQUIRE(s.size() == 3);
    CHECK(s[0].policy == "meta");
    CHECK(s[1].policy == "rl");
    CHECK(s[2].policy == "greedy");
    for (const auto& row : s) {
      std::vector<double> slots, found;
      double reward = 0.0, dev = 0.0;
      int n = 0, nd = 0;
      for (std::size_t i = 0; i < recs.size(); ++i) {
        if (recs[i].summary.policy != row.policy) continue;
        ++n;
        const auto& f = recs[i].summary.slots_to_find;
        slots.push_back(f ? *f : 600);
        if (f) found.push_back(*f);
        reward += recs[i].summary.mean_reward;
        if (devs[i]) {
          dev += *devs[i];
          ++nd;
        }
      }
      std::sort(slots.begin(), slots.end());
      const double med =
          slots.size() % 2 ? slots[slots.size() / 2] : 0.5 * (slots[slots.size() / 2 - 1] + slots[slots.size() / 2]);
      double mean_found = 0.0;
      for (double v : found) mean_found += v;
      CHECK(row.runs == n);
      CHECK(row.successes == static_cast<int>(found.size()));
      CHECK(row.median_slots == med);
      CHECK(*row.mean_slots_found == doctest::Approx(mean_found / found.size()));
      CHECK(row.mean_reward == doctest::Approx(reward / n));
      CHECK(*row.mean_deviation_m == doctest::Approx(dev / nd));
    }
  }
}

TEST_CASE("configuration") {
  SUBCASE("empty text gives the defaults") {
    const auto c = config::parse("");
    CHECK(c.scenario.terrain == world::Terrain::plain);
    CHECK(c.scenario.max_slots == 600);
    CHECK(c.policy.history == 8);
    CHECK(c.seeds.empty());
  }
  SUBCASE("canonical text round trips") {
    auto c = config::parse("scenario:\n  terrain: canyon\ntrainer:\n  learning_rate: 0.01\nexperiment:\n  seeds: [3, 4]\n");
    CHECK(c.scenario.terrain == world::Terrain::canyon);
    CHECK(c.trainer.learning_rate == 0.01);
    CHECK(c.meta.estimator.learning_rate == 0.01);
    const auto text = config::to_yaml(c);
    const auto again = config::parse(text);
    CHECK(config::to_yaml(again) == text);
    CHECK(config::config_hash(again) == config::config_hash(c));
  }
  SUBCASE("hash is 16 hex digits and tracks content") {
    const auto a = config::parse("");
    const auto h = config::config_hash(a);
    CHECK(h.size() == 16);
    CHECK(h.find_first_not_of("0123456789abcdef") == std::string::npos);
    CHECK(config::config_hash(config::parse("trainer:\n  seed: 2\n")) != h);
  }
  SUBCASE("unknown keys are errors") {
    CHECK_THROWS_WITH_AS(config::parse("trainer:\n  learnig_rate: 0.1\n"), doctest::Contains("trainer.learnig_rate"),
                         std::invalid_argument);
    CHECK_THROWS_WITH_AS(config::parse("bogus: 1\n"), doctest::Contains("bogus"), std::invalid_argument);
  }
  SUBCASE("malformed values name their key") {
    CHECK_THROWS_WITH_AS(config::parse("scenario:\n  max_slots: many\n"), doctest::Contains("scenario.max_slots"),
                         std::invalid_argument);
    CHECK_THROWS_WITH_AS(config::parse("trainer:\n  reference: mean\n"), doctest::Contains("trainer.reference"),
                         std::invalid_argument);
    CHECK_THROWS_AS(config::parse("[1, 2]"), std::invalid_argument);
    CHECK_THROWS_AS(config::parse("scenario: {poi: [1]}"), std::invalid_argument);
  }
  SUBCASE("policy names") {
    for (auto k : {config::PolicyKind::optimal, config::PolicyKind::greedy, config::PolicyKind::rl,
                   config::PolicyKind::meta})
      CHECK(config::policy_from_name(config::policy_name(k)) == k);
    CHECK_THROWS_AS(config::policy_from_name("random"), std::invalid_argument);
  }
}

TEST_CASE("seed lists") {
  CHECK(config::parse_seeds("1..3") == std::vector<std::uint64_t>{1, 2, 3});
  CHECK(config::parse_seeds("4") == std::vector<std::uint64_t>{4});
  CHECK(config::parse_seeds("1,5..6,9") == std::vector<std::uint64_t>{1, 5, 6, 9});
  CHECK(config::parse_seeds("").empty());
  CHECK_THROWS_AS(config::parse_seeds("3..1"), std::invalid_argument);
  CHECK_THROWS_AS(config::parse_seeds("a..b"), std::invalid_argument);
  CHECK_THROWS_AS(config::parse_seeds("1,,2"), std::invalid_argument);
}

TEST_CASE("scenario placement per seed") {
  auto cfg = config::parse("scenario:\n  terrain: canyon\n");
  Point2 first{};
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto s = config::scenario_for_seed(cfg, seed);
    CHECK(std::hypot(s.poi.x, s.poi.y) == doctest::Approx(0.8 * s.sai_radius_m));
    CHECK(s.corridor.x_min == doctest::Approx(s.poi.x - 600.0));
    CHECK(s.corridor.y_max == doctest::Approx(s.poi.y + 100.0));
    const auto again = config::scenario_for_seed(cfg, seed);
    CHECK(again.poi == s.poi);
    CHECK(again.radio.seed == s.radio.seed);
    if (seed == 1) first = s.poi;
  }
  CHECK_FALSE(config::scenario_for_seed(cfg, 2).poi == first);
}

TEST_CASE("optimal oracle through the harness") {
  auto cfg = noiseless_fixed({1240, 0}, {0, 0});
  cfg.seeds = {1};
  const auto ex = run_experiment(cfg, {config::PolicyKind::optimal}, {}, Mode::frozen, false);
  REQUIRE(ex.records.size() == 1);
  CHECK(*ex.records[0].summary.slots_to_find == 31);
  CHECK(ex.summary[0].median_slots == 31.0);
  CHECK(ex.records[0].summary.config_hash == config::config_hash(cfg));
}

TEST_CASE("empty seed list gives an empty summary") {
  auto cfg = config::parse("");
  const auto ex = run_experiment(cfg, {config::PolicyKind::optimal, config::PolicyKind::greedy}, {}, Mode::frozen, true);
  CHECK(ex.records.empty());
  CHECK(ex.summary.empty());
  CHECK(summary_json(cfg, ex).find("\"summary\": []") != std::string::npos);
}

TEST_CASE("failed runs are recorded and the rest proceed") {
  auto cfg = config::parse("");
  cfg.seeds = {1, 2};
  const auto ex = run_experiment(cfg, {config::PolicyKind::meta, config::PolicyKind::greedy}, {}, Mode::online, true);
  REQUIRE(ex.records.size() == 4);
  CHECK(ex.records[0].summary.status == RunStatus::failed);
  CHECK(ex.records[0].summary.error.find("meta") != std::string::npos);
  CHECK_FALSE(ex.deviations[0].has_value());
  CHECK(ex.records[1].summary.status == RunStatus::ok);
  CHECK(ex.deviations[1].has_value());
  CHECK(ex.summary[0].failed == 2);
  CHECK(summary_json(cfg, ex).find("\"FAILED\"") != std::string::npos);
}

TEST_CASE("outputs are byte identical across reruns") {
  auto cfg = config::parse("");
  cfg.seeds = {3, 4};
  cfg.scenario.max_slots = 120;
  cfg.scenario.battery_s = 240.0;
  const auto root = fs::temp_directory_path() / "sarlora_harness_test";
  fs::remove_all(root);
  const std::vector<config::PolicyKind> kinds{config::PolicyKind::optimal, config::PolicyKind::greedy,
                                              config::PolicyKind::rl};
  for (const char* run : {"a", "b"}) {
    const auto ex = run_experiment(cfg, kinds, {}, Mode::online, true);
    write_outputs(cfg, ex, root / run);
  }
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(root / "a")) {
    if (!e.is_regular_file()) continue;
    ++files;
    const auto rel = fs::relative(e.path(), root / "a");
    CHECK(slurp(e.path()) == slurp(root / "b" / rel));
  }
  CHECK(files == 2 * 3 + 2);
  const auto csv = slurp(root / "a" / "greedy" / "seed_3.csv");
  CHECK(csv.rfind(std::string(kRunCsvHeader) + "\n", 0) == 0);
  CHECK(slurp(root / "a" / "summary.json").find(config::config_hash(cfg)) != std::string::npos);
  fs::remove_all(root);
}

TEST_CASE("training log and prior tasks") {
  auto cfg = config::parse("");
  cfg.trainer.max_episodes = 3;
  cfg.scenario.radio.shadow_sigma_db = 0.0;
  cfg.scenario.radio.rician_k_db = radio::kRicianKCapDb;
  cfg.placement.poi_distance_m = 200.0;
  cfg.scenario.max_slots = 60;
  cfg.scenario.battery_s = 120.0;
  int calls = 0;
  const auto t = train_rl(cfg, [&](const EpisodeStat& s) { CHECK(s.episode == calls++); });
  CHECK(calls == 3);
  REQUIRE(t.log.size() == 3);
  for (const auto& s : t.log) {
    CHECK(s.slots <= 60);
    CHECK(s.seed == training_seed(cfg, s.episode));
  }
  for (const auto& task : t.prior_tasks) CHECK_FALSE(task.trajectory.steps.empty());
  const auto again = train_rl(cfg);
  CHECK(again.learner.params == t.learner.params);
  CHECK(again.prior_tasks.size() == t.prior_tasks.size());
}
