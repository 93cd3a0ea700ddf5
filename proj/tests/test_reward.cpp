#include <doctest.h>

#include <cmath>

#include "core/error.hpp"
#include "oracle/reward_oracle.hpp"
#include "reward/reward.hpp"
#include "sim/world.hpp"
#include "support.hpp"

using namespace firemed;
using reward::RewardBreakdown;
using reward::RewardShaping;

namespace {

sim::StepEvents events_for(int n) {
  sim::StepEvents e;
  e.agents.resize(static_cast<std::size_t>(n));
  return e;
}

}  // namespace

TEST_SUITE("reward") {

TEST_CASE("single-component examples") {
  const auto plain = RewardShaping::unshaped();
  const auto shaped = RewardShaping::extinguish_focused();

  auto e = events_for(2);
  e.agents[0].crossed_border = true;
  auto r = reward::compute_rewards(e, plain);
  CHECK(r[0].crossed_border == -100.0);
  CHECK(r[0].total == -100.0);
  CHECK(r[1].total == 0.0);

  e = events_for(1);
  e.agents[0].extinguished_count = 3;
  CHECK(reward::compute_rewards(e, plain)[0].extinguish == 15.0);
  e.agents[0].extinguished_count = 2;
  CHECK(reward::compute_rewards(e, shaped)[0].extinguish == 2000.0);

  e = events_for(3);
  for (const auto& b : reward::compute_rewards(e, plain)) {
    CHECK(b == RewardBreakdown{});
    CHECK(b.total == 0.0);
  }
}

TEST_CASE("default and shaped values") {
  const auto plain = RewardShaping::unshaped();
  CHECK(plain.crash_reward == -100.0);
  CHECK(plain.water_pickup_reward == 1.0);
  CHECK(plain.fire_out_reward == 10.0);
  CHECK(plain.fire_close_to_village_reward == -50.0);
  CHECK(plain.time_step_burning == -0.01);
  CHECK(plain.ext_fire_reward == 5.0);
  CHECK(plain.prep_tree_reward == 1.0);

  const auto shaped = RewardShaping::extinguish_focused();
  CHECK(shaped.ext_fire_reward == 1000.0);
  CHECK(shaped.prep_tree_reward == 0.1);
  CHECK(shaped.water_pickup_reward == 0.1);
  CHECK(shaped.fire_out_reward == 0.0);
  CHECK(shaped.fire_close_to_village_reward == 0.0);
  CHECK(shaped.crash_reward == -100.0);
  CHECK(shaped.time_step_burning == -0.01);
}

TEST_CASE("global components are broadcast") {
  auto e = events_for(4);
  e.fire_out = true;
  e.fire_near_village = true;
  e.any_burning = true;  // not reachable together with fire_out in the sim; exercised directly here
  e.agents[2].picked_up_water = true;
  const auto r = reward::compute_rewards(e, RewardShaping::unshaped());
  for (const auto& b : r) {
    CHECK(b.fire_out == 10.0);
    CHECK(b.too_close_to_village == -50.0);
    CHECK(b.time_step_burning == -0.01);
  }
  CHECK(r[2].pickup == 1.0);
  CHECK(r[1].pickup == 0.0);
}

TEST_CASE("time penalty iff something burns") {
  auto e = events_for(2);
  CHECK(reward::compute_rewards(e, {})[0].time_step_burning == 0.0);
  e.any_burning = true;
  CHECK(reward::compute_rewards(e, {})[1].time_step_burning == -0.01);
}

TEST_CASE("negative counts are rejected") {
  auto e = events_for(1);
  e.agents[0].prepared_count = -1;
  CHECK_THROWS_AS(reward::compute_rewards(e, {}), InputError);
}

TEST_CASE("scaling the extinguish value scales only that component") {
  Rng rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    auto e = events_for(3);
    for (auto& a : e.agents) {
      a.crossed_border = rng.uniform() < 0.2;
      a.picked_up_water = rng.uniform() < 0.3;
      a.extinguished_count = static_cast<int>(rng.below(5));
      a.prepared_count = static_cast<int>(rng.below(5));
    }
    e.any_burning = rng.uniform() < 0.5;
    e.fire_near_village = rng.uniform() < 0.2;
    RewardShaping base;
    RewardShaping scaled = base;
    const double c = rng.uniform(0.5, 20.0);
    scaled.ext_fire_reward *= c;
    const auto a = reward::compute_rewards(e, base);
    const auto b = reward::compute_rewards(e, scaled);
    for (std::size_t i = 0; i < a.size(); ++i) {
      REQUIRE(b[i].extinguish == doctest::Approx(a[i].extinguish * c).epsilon(1e-14));
      REQUIRE(b[i].crossed_border == a[i].crossed_border);
      REQUIRE(b[i].pickup == a[i].pickup);
      REQUIRE(b[i].prepare == a[i].prepare);
      REQUIRE(b[i].fire_out == a[i].fire_out);
      REQUIRE(b[i].too_close_to_village == a[i].too_close_to_village);
      REQUIRE(b[i].time_step_burning == a[i].time_step_burning);
    }
  }
}

TEST_CASE("engine equals the state-diff recount on random fixtures") {
  for (const auto& shaping : {RewardShaping::unshaped(), RewardShaping::extinguish_focused()}) {
    for (std::uint64_t s = 0; s < 2000; ++s) {
      auto fx = oracle::random_fixture(mix_seed(55, s));
      auto after = fx.before;
      const auto ev = sim::step(after, fx.actions);
      const auto engine = reward::compute_rewards(ev, shaping);
      const auto recount = oracle::rewards_from_states(fx.before, after, fx.actions, shaping);
      REQUIRE(engine.size() == recount.size());
      for (std::size_t i = 0; i < engine.size(); ++i) {
        CAPTURE(s);
        CAPTURE(i);
        REQUIRE(engine[i] == recount[i]);
      }
      // Global terms agree across agents within the step.
      for (const auto& b : engine) {
        REQUIRE(b.fire_out == engine[0].fire_out);
        REQUIRE(b.too_close_to_village == engine[0].too_close_to_village);
        REQUIRE(b.time_step_burning == engine[0].time_step_burning);
        REQUIRE((b.time_step_burning != 0.0) == ev.any_burning);
      }
    }
  }
}

TEST_CASE("hand-built drop step: engine and recount agree on credit") {
  sim::WorldConfig c;
  c.spread_base_prob = 0.0;
  auto w = test::make_world(
      c,
      {test::tree_at({0, 0}, sim::TreeState::Burning), test::tree_at({25, 0}, sim::TreeState::Burning),
       test::tree_at({0, 30}), test::tree_at({300, 300}, sim::TreeState::Burning)},
      {test::agent_at({-5, 0}, {1, 0}, true), test::agent_at({40, 0}, {-1, 0}, true)});
  const std::vector<sim::AgentAction> acts{{0, {0.0, sim::Drop::DropWater}}, {1, {0.0, sim::Drop::DropWater}}};
  const auto before = w;
  const auto ev = sim::step(w, acts);
  const auto r = reward::compute_rewards(ev, {});
  // Agent 0 at (0,0), agent 1 at (35,0).
  CHECK(r[0].extinguish == 5.0);
  CHECK(r[0].prepare == 1.0);
  CHECK(r[1].extinguish == 5.0);
  CHECK(r[0].total == doctest::Approx(5.0 + 1.0 - 0.01));
  const auto rc = oracle::rewards_from_states(before, w, acts, {});
  CHECK(rc[0] == r[0]);
  CHECK(rc[1] == r[1]);
}

TEST_CASE("episode return sums totals") {
  RewardBreakdown only;
  only.pickup = 1.0;
  only.total = 1.0;
  const std::vector<std::vector<RewardBreakdown>> one{{only}};
  const auto single = reward::episode_return(one);
  CHECK(single.per_agent.size() == 1);
  CHECK(single.per_agent[0] == 1.0);
  CHECK(single.team_mean == 1.0);

  auto bd = [](double t) {
    RewardBreakdown b;
    b.total = t;
    return b;
  };
  const std::vector<std::vector<RewardBreakdown>> ledger{
      {bd(1.0), bd(-100.0)}, {bd(5.0), bd(0.5)}, {bd(-0.01), bd(-0.01)}};
  const auto ret = reward::episode_return(ledger);
  CHECK(ret.per_agent[0] == doctest::Approx(5.99));
  CHECK(ret.per_agent[1] == doctest::Approx(-99.51));
  CHECK(ret.team_mean == doctest::Approx((5.99 - 99.51) / 2.0));
}

TEST_CASE("bench harness reports no mismatches") {
  const auto r = oracle::bench_rewards(500, 9);
  CHECK(r.fixtures == 1000);  // both reward presets
  CHECK(r.mismatches == 0);
}

}  // TEST_SUITE
