#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <vector>

#include "sarlora/train_rl.hpp"

using namespace sarlora;
using namespace sarlora::train;
using world::Action;

namespace {

Sample make_sample(Rng& rng, std::size_t history, std::size_t steps, int start = 0) {
  Sample s{HistoryWindow(history), {start, {}}, "plain/1"};
  for (std::size_t i = 0; i < history; ++i)
    s.history.push({-110.0 + 20.0 * uniform01(rng), 5.0 + 10.0 * uniform01(rng),
                    world::action_from_code(static_cast<int>(uniform_index(rng, 5)))});
  for (std::size_t i = 0; i < steps; ++i) {
    world::TrajectoryStep st;
    st.action = world::action_from_code(static_cast<int>(uniform_index(rng, 5)));
    st.message = {-110.0 + 20.0 * uniform01(rng), 5.0 + 10.0 * uniform01(rng), 40.0 * i, -40.0 * i};
    st.reward = world::reward_of(st.message);
    s.trajectory.steps.push_back(st);
  }
  return s;
}

policy::Architecture small_arch() {
  policy::Architecture a;
  a.history = 4;
  a.recurrent = 8;
  a.dense = 8;
  a.latent = 3;
  return a;
}

std::vector<const Sample*> pointers(const std::vector<Sample>& v) {
  std::vector<const Sample*> out;
  for (const auto& s : v) out.push_back(&s);
  return out;
}

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// Pearson chi-square upper tail for large dof via the Wilson-Hilferty cube
// root normal approximation.
double chi_square_upper_tail(double x, double dof) {
  const double t = (std::cbrt(x / dof) - (1.0 - 2.0 / (9.0 * dof))) / std::sqrt(2.0 / (9.0 * dof));
  return 0.5 * std::erfc(t / std::sqrt(2.0));
}

}  // namespace

TEST_CASE("memory is a bounded FIFO") {
  ExperienceMemory m(3);
  Rng rng(1);
  for (int i = 0; i < 5; ++i) m.push(make_sample(rng, 2, 1, i));
  CHECK(m.size() == 3);
  CHECK(m[0].trajectory.start_slot == 2);
  CHECK(m[2].trajectory.start_slot == 4);
  CHECK_THROWS_AS(ExperienceMemory(0), std::invalid_argument);
}

TEST_CASE("batches are distinct and uniform") {
  ExperienceMemory m(50);
  Rng rng(2);
  for (int i = 0; i < 50; ++i) m.push(make_sample(rng, 1, 1, i));
  SUBCASE("without replacement") {
    for (int k = 0; k < 100; ++k) {
      auto idx = m.sample_indices(20, rng);
      CHECK(idx.size() == 20);
      std::sort(idx.begin(), idx.end());
      CHECK(std::adjacent_find(idx.begin(), idx.end()) == idx.end());
    }
    CHECK(m.sample_indices(80, rng).size() == 50);
  }
  SUBCASE("chi-square on index counts") {
    std::array<double, 50> counts{};
    const int draws = 20000;
    for (int k = 0; k < draws; ++k)
      for (auto i : m.sample_indices(5, rng)) counts[i] += 1.0;
    const double expected = draws * 5.0 / 50.0;
    double chi2 = 0.0;
    for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
    CHECK(chi_square_upper_tail(chi2, 49.0) > 0.01);
  }
}

TEST_CASE("memory file round trip") {
  Rng rng(3);
  std::vector<Sample> v;
  for (int i = 0; i < 7; ++i) v.push_back(make_sample(rng, 4, 1 + i % 3, i * 10));
  v[2].source = "canyon/77";
  const auto bytes = memory_to_bytes(v, 4);
  const auto back = memory_from_bytes(bytes);
  REQUIRE(back.size() == v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    CHECK(back[i].history == v[i].history);
    CHECK(back[i].source == v[i].source);
    CHECK(back[i].trajectory.start_slot == v[i].trajectory.start_slot);
    REQUIRE(back[i].trajectory.steps.size() == v[i].trajectory.steps.size());
    for (std::size_t j = 0; j < v[i].trajectory.steps.size(); ++j) {
      CHECK(back[i].trajectory.steps[j].message == v[i].trajectory.steps[j].message);
      CHECK(back[i].trajectory.steps[j].reward == v[i].trajectory.steps[j].reward);
    }
  }
  CHECK(memory_to_bytes(back, 4) == bytes);
  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS(memory_from_bytes(bad));
  CHECK_THROWS(memory_from_bytes(std::span(bytes).first(bytes.size() - 3)));
}

TEST_CASE("trainer validation") {
  TrainerConfig c;
  CHECK_NOTHROW(c.validate());
  c.train_probability = 1.5;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.discount = 0.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("advantages") {
  TrainerConfig cfg;
  cfg.discount = 0.5;
  Sample s{HistoryWindow(2), {0, {}}, "t"};
  s.history.push({-100.0, 60.0, Action::H});
  for (double r : {-90.0, -80.0, -70.0}) s.trajectory.steps.push_back({Action::E, {r, 60.0, 0, 0}, r});
  const Sample* one[] = {&s};

  SUBCASE("return to go without reference or baseline") {
    cfg.reference = Reference::none;
    cfg.baseline_enabled = false;
    const auto a = advantages(one, cfg);
    CHECK(a[0][2] == doctest::Approx(0.5 * -70.0));
    CHECK(a[0][1] == doctest::Approx(0.5 * -80.0 + 0.25 * -70.0));
    CHECK(a[0][0] == doctest::Approx(0.5 * -90.0 + 0.25 * -80.0 + 0.125 * -70.0));
  }
  SUBCASE("last-report reference") {
    cfg.reference = Reference::last_report;
    cfg.baseline_enabled = false;
    const auto a = advantages(one, cfg);
    const double p0 = radio::recover_signal_power(-100.0, 60.0);
    const double p2 = radio::recover_signal_power(-80.0, 60.0);
    CHECK(a[0][0] == doctest::Approx(0.5 * (-90.0 - p0) + 0.25 * (-80.0 - p0) + 0.125 * (-70.0 - p0)));
    CHECK(a[0][2] == doctest::Approx(0.5 * (-70.0 - p2)));
  }
  SUBCASE("window-mean reference") {
    cfg.reference = Reference::window_mean;
    cfg.baseline_enabled = false;
    const auto a = advantages(one, cfg);
    // Window at the last step holds the reports of steps 0 and 1.
    const double ref = 0.5 * (radio::recover_signal_power(-90.0, 60.0) + radio::recover_signal_power(-80.0, 60.0));
    CHECK(a[0][2] == doctest::Approx(0.5 * (-70.0 - ref)));
  }
  SUBCASE("whole trajectory estimator repeats one return") {
    cfg.estimator = Estimator::whole_trajectory;
    cfg.reference = Reference::none;
    cfg.baseline_enabled = false;
    const auto a = advantages(one, cfg);
    for (double v : a[0]) CHECK(v == doctest::Approx(0.5 * -90.0 + 0.25 * -80.0 + 0.125 * -70.0));
  }
  SUBCASE("baseline centers each offset") {
    Rng rng(4);
    std::vector<Sample> v;
    for (int i = 0; i < 6; ++i) v.push_back(make_sample(rng, 3, 5));
    const auto a = advantages(pointers(v), TrainerConfig{});
    for (std::size_t j = 0; j < 5; ++j) {
      double s = 0.0;
      for (const auto& g : a) s += g[j];
      CHECK(std::abs(s) < 1e-9);
    }
  }
}

TEST_CASE("null step leaves parameters unchanged") {
  Rng rng(5);
  std::vector<Sample> v;
  for (int i = 0; i < 4; ++i) v.push_back(make_sample(rng, 4, 6));
  const auto p = PolicyParams::initialize(small_arch(), 1);
  TrainerConfig cfg;
  cfg.learning_rate = 0.0;
  CHECK(reinforce_update(p, pointers(v), cfg) == p);
  cfg.optimizer = Optimizer::adam;
  CHECK(reinforce_update(p, pointers(v), cfg) == p);
}

TEST_CASE("equal returns with the baseline give a zero update") {
  Rng rng(6);
  Sample base = make_sample(rng, 4, 5);
  std::vector<Sample> v;
  for (int i = 0; i < 5; ++i) {
    Sample s = base;
    for (auto& st : s.trajectory.steps) st.action = world::action_from_code(static_cast<int>(uniform_index(rng, 5)));
    v.push_back(s);
  }
  const auto p = PolicyParams::initialize(small_arch(), 2);
  TrainerConfig cfg;
  cfg.learning_rate = 0.1;
  const auto est = estimate_gradient(p, pointers(v), cfg, LatentContext::null(3));
  CHECK(norm(est.grad) < 1e-12);
  CHECK(reinforce_update(p, pointers(v), cfg) == p);
}

TEST_CASE("empty batch is rejected") {
  const auto p = PolicyParams::initialize(small_arch(), 2);
  std::vector<const Sample*> none;
  CHECK_THROWS_AS(reinforce_update(p, none, TrainerConfig{}), std::invalid_argument);
}

TEST_CASE("adding a constant to every reward leaves the update unchanged") {
  Rng rng(7);
  std::vector<Sample> v;
  for (int i = 0; i < 8; ++i) v.push_back(make_sample(rng, 4, 6));
  auto shifted = v;
  for (auto& s : shifted)
    for (auto& st : s.trajectory.steps) st.reward += 37.5;
  const auto p = PolicyParams::initialize(small_arch(), 3);
  for (auto ref : {Reference::none, Reference::window_mean, Reference::last_report}) {
    TrainerConfig cfg;
    cfg.reference = ref;
    cfg.grad_clip = 1e9;
    const auto a = estimate_gradient(p, pointers(v), cfg, LatentContext::null(3));
    const auto b = estimate_gradient(p, pointers(shifted), cfg, LatentContext::null(3));
    for (std::size_t i = 0; i < a.grad.size(); ++i) CHECK(std::abs(a.grad[i] - b.grad[i]) <= 1e-8);
  }
}

TEST_CASE("update does not depend on batch order") {
  Rng rng(8);
  std::vector<Sample> v;
  for (int i = 0; i < 12; ++i) v.push_back(make_sample(rng, 4, 1 + i % 6));
  auto batch = pointers(v);
  const auto p = PolicyParams::initialize(small_arch(), 4);
  TrainerConfig cfg;
  cfg.entropy_bonus = 0.3;
  const auto a = estimate_gradient(p, batch, cfg, LatentContext::null(3));
  std::reverse(batch.begin(), batch.end());
  std::swap(batch[2], batch[7]);
  const auto b = estimate_gradient(p, batch, cfg, LatentContext::null(3));
  for (std::size_t i = 0; i < a.grad.size(); ++i) CHECK(std::abs(a.grad[i] - b.grad[i]) <= 1e-10);
}

TEST_CASE("gradient is clipped to the configured norm") {
  Rng rng(9);
  std::vector<Sample> v;
  for (int i = 0; i < 8; ++i) v.push_back(make_sample(rng, 4, 16));
  const auto p = PolicyParams::initialize(small_arch(), 5);
  TrainerConfig cfg;
  cfg.grad_clip = 1e-3;
  const auto est = estimate_gradient(p, pointers(v), cfg, LatentContext::null(3));
  CHECK(est.raw_norm > 1e-3);
  CHECK(norm(est.grad) == doctest::Approx(1e-3));
}

TEST_CASE("estimated gradient equals the finite-difference slope of the surrogate objective") {
  Rng rng(10);
  std::vector<Sample> v;
  for (int i = 0; i < 3; ++i) v.push_back(make_sample(rng, 4, 4));
  auto p = PolicyParams::initialize(small_arch(), 6);
  for (auto& x : p.values()) x *= 5.0;
  TrainerConfig cfg;
  cfg.grad_clip = 1e9;
  cfg.entropy_bonus = 0.5;
  const auto z = LatentContext{{0.3, -0.2, 0.9}};
  const auto est = estimate_gradient(p, pointers(v), cfg, z);
  for (std::size_t i = 0; i < p.size(); i += 7) {
    const double x = p.values()[i];
    p.values()[i] = x + 1e-5;
    const double up = estimate_gradient(p, pointers(v), cfg, z).objective;
    p.values()[i] = x - 1e-5;
    const double dn = estimate_gradient(p, pointers(v), cfg, z).objective;
    p.values()[i] = x;
    const double fd = (up - dn) / 2e-5;
    CHECK(std::abs(fd - est.grad[i]) / std::max(std::abs(fd) + std::abs(est.grad[i]), 1e-6) < 1e-4);
  }
}

TEST_CASE("single-step bandit converges to the best action") {
  // One history entry, one slot, a fixed reward per action; the best action
  // is known by enumeration.
  const std::array<double, 5> reward{-100.0, -95.0, -91.0, -97.0, -99.0};
  const auto best = static_cast<int>(std::max_element(reward.begin(), reward.end()) - reward.begin());
  policy::Architecture a;
  a.history = 1;
  a.recurrent = 8;
  a.dense = 8;
  a.latent = 0;
  auto p = PolicyParams::initialize(a, 11);
  TrainerConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.batch_size = 32;
  HistoryWindow h(1);
  h.push({-100.0, 20.0, Action::H});
  Rng rng(12);
  OptimizerState opt;
  int reached = -1;
  for (int it = 0; it < 2000; ++it) {
    const auto dist = policy::forward(p, h, LatentContext::null(0));
    const auto argmax = std::max_element(dist.p.begin(), dist.p.end()) - dist.p.begin();
    if (argmax == best && dist.p[best] > 0.5) {
      reached = it;
      break;
    }
    std::vector<Sample> batch;
    for (int m = 0; m < cfg.batch_size; ++m) {
      const auto act = policy::sample_action(dist, rng);
      Sample s{h, {0, {}}, "bandit"};
      s.trajectory.steps.push_back({act, {}, reward[world::code(act)]});
      batch.push_back(s);
    }
    p = reinforce_update(p, pointers(batch), cfg, LatentContext::null(0), opt);
  }
  CAPTURE(reached);
  CHECK(reached >= 0);
}

TEST_CASE("online loop") {
  auto sc = world::ScenarioConfig::plain();
  const auto p = PolicyParams::initialize(policy::Architecture{}, 1);

  SUBCASE("lowest target stops at slot 1") {
    auto c = sc;
    c.r_target_dbm = -INFINITY;
    world::Environment env(c);
    auto [q, rec] = run_online(env, p, TrainerConfig{}, 1);
    CHECK(rec.rows.size() == 1);
    CHECK(rec.summary.slots_to_find == 1);
  }
  SUBCASE("zero training probability freezes parameters") {
    world::Environment env(sc);
    TrainerConfig cfg;
    cfg.train_probability = 0.0;
    auto [q, rec] = run_online(env, p, cfg, 2);
    CHECK(q == p);
    CHECK(rec.rows.size() <= static_cast<std::size_t>(sc.max_slots));
  }
  SUBCASE("training changes parameters and respects the battery") {
    auto c = sc;
    c.r_target_dbm = 1e9;
    c.battery_s = 200.0;
    c.max_slots = 100;
    world::Environment env(c);
    Learner learner(p, 4096);
    TrainerConfig cfg;
    cfg.symmetry_augmentation = true;
    const auto res = run_online(env, learner, cfg, 3);
    CHECK(res.record.rows.size() == 100);
    CHECK_FALSE(learner.params == p);
    CHECK(learner.updates > 0);
    CHECK(learner.memory.size() == res.samples.size());
    CHECK(res.samples.size() == 100);  // one sample per slot, tails flushed
    for (const auto& s : res.samples) CHECK(s.trajectory.steps.size() <= 16);
    CHECK(res.samples.front().trajectory.steps.size() == 16);
    CHECK(res.samples.back().trajectory.steps.size() == 1);
    CHECK(res.samples.front().source == "plain/3");
  }
  SUBCASE("reproducible per seed") {
    auto c = sc;
    c.battery_s = 200.0;
    c.max_slots = 100;
    auto run = [&] {
      world::Environment env(c);
      Learner learner(p, 4096);
      const auto res = run_online(env, learner, TrainerConfig{}, 9);
      return std::make_pair(learner.params, res.record.rows.size());
    };
    const auto a = run();
    const auto b = run();
    CHECK(a.first == b.first);
    CHECK(a.second == b.second);
  }
}

TEST_CASE("symmetry transform of a sample") {
  Rng rng(13);
  const auto s = make_sample(rng, 4, 5);
  CHECK(transformed(s, 0).history == s.history);
  const auto t = transformed(s, 1);
  for (std::size_t i = 0; i < s.trajectory.steps.size(); ++i) {
    CHECK(t.trajectory.steps[i].action == world::transform_action(s.trajectory.steps[i].action, 1));
    CHECK(t.trajectory.steps[i].reward == s.trajectory.steps[i].reward);
    CHECK(t.trajectory.steps[i].message.x_m == doctest::Approx(-s.trajectory.steps[i].message.y_m));
  }
  std::vector<Sample> v{s, s};
  auto batch = pointers(v);
  std::vector<Sample> storage;
  Rng r(1);
  augment_batch(batch, storage, r);
  CHECK(batch[0] == &storage[0]);
  CHECK(storage.size() == 2);
}

TEST_CASE("tail samples keep the last quarter") {
  Rng rng(14);
  std::vector<Sample> v;
  for (int i = 0; i < 100; ++i) v.push_back(make_sample(rng, 1, 1, i));
  const auto t = tail_samples(v, 100);
  CHECK(t.size() == 25);
  CHECK(t.front().trajectory.start_slot == 75);
}
