#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>

#include "core/error.hpp"
#include "sim/observation.hpp"
#include "sim/snapshot.hpp"
#include "sim/world.hpp"
#include "support.hpp"

using namespace firemed;
using namespace firemed::sim;
using test::agent_at;
using test::make_world;
using test::tree_at;

namespace {

// Independent restatement of the spread law used as the Monte-Carlo target.
double expected_spread(double base, double humidity, Vec2 wind, Vec2 from, Vec2 to) {
  const double gain = std::sqrt(wind.x * wind.x + wind.y * wind.y);
  const double dx = to.x - from.x, dy = to.y - from.y;
  const double len = std::sqrt(dx * dx + dy * dy);
  double cosine = 0.0;
  if (gain > 0 && len > 0) cosine = (wind.x * dx + wind.y * dy) / (gain * len);
  return base * (1.0 - humidity) * (1.0 + gain * std::max(0.0, cosine));
}

std::vector<AgentAction> idle(const WorldState& w) {
  std::vector<AgentAction> out;
  for (const auto& a : w.agents)
    if (!a.crashed) out.push_back({a.id, {0.0, Drop::DoNothing}});
  return out;
}

std::vector<AgentAction> random_actions(const WorldState& w, Rng& rng) {
  std::vector<AgentAction> out;
  for (const auto& a : w.agents) {
    if (a.crashed) continue;
    // Bias steering toward turning so agents linger on the island.
    out.push_back({a.id,
                   {rng.uniform(-1.2, 1.2), rng.uniform() < 0.3 ? Drop::DropWater : Drop::DoNothing}});
  }
  return out;
}

bool legal(TreeState from, TreeState to) {
  if (from == to) return true;
  switch (from) {
    case TreeState::Alive: return to == TreeState::Wet || to == TreeState::Burning;
    case TreeState::Wet: return to == TreeState::Alive;
    case TreeState::Burning: return to == TreeState::Extinguished || to == TreeState::BurnedOut;
    default: return false;
  }
}

}  // namespace

TEST_SUITE("sim") {

TEST_CASE("init_world is deterministic per seed and honours the config") {
  WorldConfig c;
  c.seed = 42;
  const auto a = init_world(c);
  const auto b = init_world(c);
  CHECK(world_hash(a) == world_hash(b));
  CHECK(a.trees == b.trees);
  CHECK(a.agents == b.agents);
  CHECK(a.rng == b.rng);

  c.seed = 43;
  CHECK(world_hash(init_world(c)) != world_hash(a));

  c.n_agents = 6;
  CHECK(init_world(c).agents.size() == 6);
}

TEST_CASE("default world layout") {
  const auto w = init_world(WorldConfig{});
  CHECK(w.trees.size() == 1000);
  for (const auto& t : w.trees) {
    CHECK(std::abs(t.position.x) <= 600.0);
    CHECK(std::abs(t.position.y) <= 600.0);
  }
  const auto burning = w.count(TreeState::Burning);
  CHECK(burning >= 1);
  for (const auto& t : w.trees)
    if (t.state == TreeState::Burning) CHECK_FALSE(in_village_zone(t.position, w.config));
  for (const auto& a : w.agents) {
    CHECK_FALSE(a.holding_water);
    CHECK_FALSE(in_water_band(a.position, w.config));
    // On the shore, nose toward the nearest edge.
    const double edge = std::max(std::abs(a.position.x), std::abs(a.position.y));
    CHECK(edge == doctest::Approx(590.0));
    const Vec2 ahead = a.position + a.direction * 20.0;
    CHECK(in_water_band(ahead, w.config));
  }
}

TEST_CASE("straight flight and clamped steering") {
  WorldConfig c;
  const auto a = agent_at({0, 0});
  const auto s = steer_integrate(a, 0.0, c);
  CHECK(s.position.x == doctest::Approx(5.0));
  CHECK(s.position.y == doctest::Approx(0.0));
  CHECK(s.direction.x == doctest::Approx(1.0));
  CHECK(s.direction.y == doctest::Approx(0.0));

  const auto two = steer_integrate(a, 2.0, c);
  const auto one = steer_integrate(a, 1.0, c);
  CHECK(two == one);
  CHECK_THROWS_AS(steer_integrate(a, std::nan(""), c), InputError);
}

TEST_CASE("repeated full right turns rotate clockwise by the turn rate") {
  WorldConfig c;
  auto a = agent_at({0, 0}, {0.0, 1.0});
  const double start = std::atan2(1.0, 0.0);
  for (int k = 1; k <= 100; ++k) {
    const Vec2 before = a.position;
    a = steer_integrate(a, 1.0, c);
    const double heading = start - k * c.max_turn_rate;
    REQUIRE(a.direction.x == doctest::Approx(std::cos(heading)).epsilon(1e-9));
    REQUIRE(a.direction.y == doctest::Approx(std::sin(heading)).epsilon(1e-9));
    REQUIRE(distance(before, a.position) == doctest::Approx(c.agent_speed).epsilon(1e-12));
  }
}

TEST_CASE("water band predicate") {
  WorldConfig c;
  CHECK(in_water_band({700, 0}, c));
  CHECK_FALSE(in_water_band({0, 0}, c));
  CHECK_FALSE(in_water_band({600, 0}, c));
  CHECK(in_water_band({600.001, 0}, c));
  CHECK(in_water_band({750, 750}, c));
  CHECK_FALSE(in_water_band({750.001, 0}, c));
  // Grid oracle in max-norm form.
  for (double x = -800; x <= 800; x += 12.5) {
    for (double y = -800; y <= 800; y += 12.5) {
      const double m = std::max(std::abs(x), std::abs(y));
      REQUIRE(in_water_band({x, y}, c) == (m > 600.0 && m <= 750.0));
      REQUIRE(outside_environment({x, y}, c) == (m > 750.0));
    }
  }
}

TEST_CASE("crossing the border crashes and ends the episode") {
  auto w = make_world({}, {tree_at({0, 0}, TreeState::Burning)}, {agent_at({755, 0})});
  const auto ev = step(w, idle(w));
  CHECK(w.agents[0].position.x == doctest::Approx(760.0));
  CHECK(ev.agents[0].crossed_border);
  CHECK(w.agents[0].crashed);
  CHECK(w.terminal);
  CHECK_THROWS_AS(step(w, {}), StateError);
}

TEST_CASE("step validates actions") {
  auto w = make_world({}, {tree_at({0, 0}, TreeState::Burning)},
                      {agent_at({0, 100}), agent_at({0, -100})});
  std::vector<AgentAction> unknown{{0, {}}, {1, {}}, {2, {}}};
  CHECK_THROWS_AS(step(w, unknown), InputError);
  std::vector<AgentAction> dup{{0, {}}, {0, {}}};
  CHECK_THROWS_AS(step(w, dup), InputError);
  std::vector<AgentAction> missing{{0, {}}};
  CHECK_THROWS_AS(step(w, missing), InputError);
  std::vector<AgentAction> nan{{0, {std::nan(""), Drop::DoNothing}}, {1, {}}};
  CHECK_THROWS_AS(step(w, nan), InputError);
  CHECK(w.step == 0);
}

TEST_CASE("pickup happens only in the band and only when empty") {
  auto w = make_world({}, {tree_at({0, 0}, TreeState::Burning)},
                      {agent_at({690, 0}, {0, 1}), agent_at({690, 100}, {0, 1}, true), agent_at({0, 300})});
  auto ev = step(w, idle(w));
  CHECK(ev.agents[0].picked_up_water);
  CHECK(w.agents[0].holding_water);
  CHECK_FALSE(ev.agents[1].picked_up_water);
  CHECK_FALSE(ev.agents[2].picked_up_water);

  // Dropping over the band does not refill in the same step.
  std::vector<AgentAction> acts{{0, {0.0, Drop::DropWater}}, {1, {}}, {2, {}}};
  ev = step(w, acts);
  CHECK(ev.agents[0].dropped_water);
  CHECK_FALSE(ev.agents[0].picked_up_water);
  CHECK_FALSE(w.agents[0].holding_water);
  ev = step(w, idle(w));
  CHECK(ev.agents[0].picked_up_water);
}

TEST_CASE("drops extinguish and wet trees in range, credited to the closest dropper") {
  WorldConfig c;
  c.spread_base_prob = 0.0;
  // Agents move 5 along +x before the drop is evaluated.
  auto w = make_world(c,
                      {tree_at({20, 0}, TreeState::Burning), tree_at({20, 30}, TreeState::Alive),
                       tree_at({200, 0}, TreeState::Burning), tree_at({75, 0}, TreeState::Burning),
                       tree_at({-300, -300}, TreeState::Burning)},
                      {agent_at({-5, 0}, {1, 0}, true), agent_at({50, 0}, {1, 0}, true),
                       agent_at({-400, 200}, {1, 0}, false)});
  std::vector<AgentAction> acts{{0, {0.0, Drop::DropWater}}, {1, {0.0, Drop::DropWater}},
                                {2, {0.0, Drop::DropWater}}};
  const auto ev = step(w, acts);
  // Agent 0 at (0,0): tree (20,0) at 20 and (20,30) at 36. Agent 1 at (55,0):
  // tree (20,0) at 35, (75,0) at 20, (20,30) at ~46 (out of range).
  CHECK(w.trees[0].state == TreeState::Extinguished);
  CHECK(w.trees[1].state == TreeState::Wet);
  CHECK(w.trees[2].state == TreeState::Burning);
  CHECK(w.trees[3].state == TreeState::Extinguished);
  CHECK(ev.agents[0].extinguished_count == 1);
  CHECK(ev.agents[0].prepared_count == 1);
  CHECK(ev.agents[1].extinguished_count == 1);
  CHECK(ev.agents[1].prepared_count == 0);
  CHECK_FALSE(ev.agents[2].dropped_water);
  CHECK_FALSE(w.agents[0].holding_water);
  CHECK(ev.any_burning);
  CHECK_FALSE(w.terminal);
}

TEST_CASE("equidistant droppers: lower agent index gets the credit") {
  WorldConfig c;
  c.spread_base_prob = 0.0;
  auto w = make_world(c, {tree_at({0, 0}, TreeState::Burning), tree_at({300, 300}, TreeState::Burning)},
                      {agent_at({-15, 0}, {1, 0}, true), agent_at({15, 0}, {-1, 0}, true)});
  std::vector<AgentAction> acts{{0, {0.0, Drop::DropWater}}, {1, {0.0, Drop::DropWater}}};
  const auto ev = step(w, acts);
  CHECK(ev.agents[0].extinguished_count == 1);
  CHECK(ev.agents[1].extinguished_count == 0);
}

TEST_CASE("putting out the last fire ends the episode with fire_out") {
  WorldConfig c;
  c.spread_base_prob = 0.0;
  auto w = make_world(c, {tree_at({0, 0}, TreeState::Burning), tree_at({100, 100})},
                      {agent_at({-5, 0}, {1, 0}, true)});
  std::vector<AgentAction> acts{{0, {0.0, Drop::DropWater}}};
  const auto ev = step(w, acts);
  CHECK(ev.fire_out);
  CHECK_FALSE(ev.any_burning);
  CHECK(w.terminal);

  auto quiet = make_world(c, {tree_at({0, 0})}, {agent_at({0, 100})});
  const auto ev2 = step(quiet, idle(quiet));
  CHECK_FALSE(ev2.fire_out);
  CHECK_FALSE(ev2.any_burning);
  CHECK_FALSE(ev2.fire_near_village);
  CHECK_FALSE(ev2.agents[0].picked_up_water);
}

TEST_CASE("episode length limit") {
  WorldConfig c;
  c.episode_length = 3;
  c.spread_base_prob = 0.0;
  auto w = make_world(c, {tree_at({0, 0}, TreeState::Burning)}, {agent_at({0, 100}, {0, -1})});
  step(w, idle(w));
  step(w, idle(w));
  CHECK_FALSE(w.terminal);
  step(w, idle(w));
  CHECK(w.terminal);
  CHECK(w.step == 3);
}

TEST_CASE("burning trees burn out and wet trees dry") {
  WorldConfig c;
  c.spread_base_prob = 0.0;
  c.burn_duration = 4;
  c.wet_immunity = 3;
  auto w = make_world(c, {tree_at({0, 0}, TreeState::Burning), tree_at({300, 0}, TreeState::Wet),
                          tree_at({-300, 0}, TreeState::Burning)},
                      {agent_at({0, 300}, {0, -1})});
  for (int k = 0; k < 3; ++k) step(w, idle(w));
  CHECK(w.trees[0].state == TreeState::Burning);
  CHECK(w.trees[1].state == TreeState::Alive);
  step(w, idle(w));
  CHECK(w.trees[0].state == TreeState::BurnedOut);
  CHECK(w.trees[2].state == TreeState::BurnedOut);
  CHECK(w.terminal);  // last fire burned out
}

TEST_CASE("burning inside the village zone is reported") {
  WorldConfig c;
  c.spread_base_prob = 0.0;
  auto w = make_world(c, {tree_at(c.village_center + Vec2{50, 0}, TreeState::Burning)},
                      {agent_at({300, 0}, {0, 1})});
  CHECK(step(w, idle(w)).fire_near_village);
}

TEST_CASE("spread probability formula") {
  WorldConfig c;
  c.spread_base_prob = 0.1;
  c.humidity = 0.25;
  c.wind = {0.0, 2.0};
  for (const Vec2 to : {Vec2{0, 50}, Vec2{50, 0}, Vec2{0, -50}, Vec2{30, 40}}) {
    CHECK(spread_probability(c, {0, 0}, to) ==
          doctest::Approx(expected_spread(0.1, 0.25, {0, 2}, {0, 0}, to)).epsilon(1e-15));
  }
  c.spread_base_prob = 0.9;
  c.humidity = 0.0;
  CHECK(spread_probability(c, {0, 0}, {0, 50}) == 1.0);
}

TEST_CASE("Monte-Carlo ignition frequency matches the spread law") {
  struct Case {
    Vec2 target;
    Vec2 wind;
  };
  for (const auto& cs : {Case{{50, 0}, {1, 0}}, Case{{0, 50}, {1, 0}}, Case{{-40, 30}, {0.5, 0.5}}}) {
    WorldConfig c;
    c.spread_base_prob = 0.1;
    c.humidity = 0.0;
    c.wind = cs.wind;
    c.burn_duration = 1000;
    const double p = expected_spread(0.1, 0.0, cs.wind, {0, 0}, cs.target);
    const int trials = 10000;
    int hits = 0;
    auto base = make_world(c, {tree_at({0, 0}, TreeState::Burning), tree_at(cs.target)},
                           {agent_at({-300, -300}, {0, 1})});
    for (int i = 0; i < trials; ++i) {
      auto w = base;
      w.rng = Rng(mix_seed(991, static_cast<std::uint64_t>(i)));
      step(w, idle(w));
      hits += w.trees[1].state == TreeState::Burning;
    }
    CAPTURE(p);
    CAPTURE(hits);
    CHECK(test::within_sigma(hits, trials, p, 2.0));
  }
}

TEST_CASE("spread links equal an exhaustive neighbour scan") {
  WorldConfig c;
  c.tree_count = 400;
  c.seed = 5;
  const auto w = init_world(c);
  for (std::size_t i = 0; i < w.trees.size(); ++i) {
    std::vector<std::uint32_t> expect;
    for (std::size_t j = 0; j < w.trees.size(); ++j) {
      if (i == j) continue;
      const double dx = w.trees[i].position.x - w.trees[j].position.x;
      const double dy = w.trees[i].position.y - w.trees[j].position.y;
      if (dx * dx + dy * dy <= c.spread_radius * c.spread_radius) expect.push_back(static_cast<std::uint32_t>(j));
    }
    std::vector<std::uint32_t> got;
    for (const auto& l : w.spread_links[i]) got.push_back(l.target);
    REQUIRE(got == expect);
  }
}

TEST_CASE("closest active tree equals an exhaustive scan") {
  Rng rng(17);
  for (int world_index = 0; world_index < 200; ++world_index) {
    WorldConfig c;
    c.tree_count = 60;
    c.n_agents = 2;
    c.seed = rng.next();
    auto w = init_world(c);
    for (auto& t : w.trees) t.state = static_cast<TreeState>(rng.below(5));
    if (world_index % 10 == 0) w.trees[7].position = w.trees[3].position;  // exact tie
    for (auto& a : w.agents) a.position = {rng.uniform(-740, 740), rng.uniform(-740, 740)};
    for (const auto& a : w.agents) {
      std::optional<std::size_t> best;
      double bd = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < w.trees.size(); ++i) {
        if (w.trees[i].state == TreeState::Extinguished || w.trees[i].state == TreeState::BurnedOut) continue;
        const double dx = w.trees[i].position.x - a.position.x;
        const double dy = w.trees[i].position.y - a.position.y;
        const double d = dx * dx + dy * dy;
        if (d < bd) {
          bd = d;
          best = i;
        }
      }
      REQUIRE(closest_active_tree(w, a.position) == best);
    }
  }
}

TEST_CASE("observation encoding") {
  WorldConfig c;
  c.spread_base_prob = 0.0;
  auto w = make_world(c, {tree_at({400, 10}, TreeState::Burning), tree_at({380, 0}, TreeState::Extinguished)},
                      {agent_at({375, 0}, {0, 1}, true)});
  const auto o = encode_observation(w, 0);
  CHECK(o[0] == doctest::Approx(0.5));
  CHECK(o[1] == 0.0);
  CHECK(o[2] == 0.0);
  CHECK(o[3] == 1.0);
  CHECK(o[4] == 1.0);
  CHECK(o[5] == doctest::Approx(400.0 / 750.0));
  CHECK(o[6] == doctest::Approx(10.0 / 750.0));
  CHECK(o[7] == 1.0);

  w.trees[0].state = TreeState::BurnedOut;
  const auto none = encode_observation(w, 0);
  CHECK(none[5] == 0.0);
  CHECK(none[6] == 0.0);
  CHECK(none[7] == 0.0);
  CHECK_THROWS_AS(encode_observation(w, 3), InputError);
}

TEST_CASE("raster channels") {
  WorldConfig c;
  c.spread_base_prob = 0.0;
  auto w = make_world(c, {tree_at({0, 0}), tree_at({10, 0})}, {agent_at({700, 0}), agent_at({0, 0})});
  const auto r = encode_raster(w, 0, 42);
  CHECK(r.cells.size() == 42u * 42u * 3u);
  CHECK(r.at(21, 21, kRasterWater) == 1.0);
  for (int i = 0; i < 42; ++i)
    for (int j = 0; j < 42; ++j) REQUIRE(r.at(i, j, kRasterFire) == 0.0);
  const auto centre = encode_raster(w, 1, 5);
  CHECK(centre.at(2, 2, kRasterVegetation) == 1.0);
  CHECK(centre.at(2, 2, kRasterWater) == 0.0);
}

TEST_CASE("random rollouts respect the world invariants") {
  Rng rng(123);
  WorldConfig c;
  c.tree_count = 600;
  c.spread_base_prob = 0.02;
  std::int64_t steps = 0;
  std::uint64_t episode = 0;
  while (steps < 100000) {
    c.seed = mix_seed(77, episode++);
    auto w = init_world(c);
    std::vector<int> last_water_event(w.agents.size(), 0);  // +1 pickup, -1 drop
    std::size_t finished = 0;
    while (!w.terminal && steps < 100000) {
      const auto before = w;
      const auto acts = random_actions(w, rng);
      const auto ev = step(w, acts);
      ++steps;
      for (std::size_t t = 0; t < w.trees.size(); ++t)
        REQUIRE(legal(before.trees[t].state, w.trees[t].state));
      const auto done = w.count(TreeState::Extinguished) + w.count(TreeState::BurnedOut);
      REQUIRE(done >= finished);
      finished = done;
      for (std::size_t i = 0; i < w.agents.size(); ++i) {
        if (before.agents[i].crashed) continue;
        REQUIRE(distance(before.agents[i].position, w.agents[i].position) ==
                doctest::Approx(c.agent_speed).epsilon(1e-12));
        const auto& e = ev.agents[i];
        REQUIRE(!(e.picked_up_water && e.dropped_water));
        if (e.picked_up_water) {
          REQUIRE(last_water_event[i] != 1);
          last_water_event[i] = 1;
        }
        if (e.dropped_water) {
          REQUIRE(last_water_event[i] == 1);
          last_water_event[i] = -1;
        }
        if (!w.agents[i].crashed) {
          const auto o = encode_observation(w, static_cast<int>(i));
          for (double v : o.values) REQUIRE((v >= -1.0 && v <= 1.0));
        }
      }
    }
  }
  CHECK(steps == 100000);
}

TEST_CASE("identical actions give identical trajectories") {
  WorldConfig c;
  c.seed = 9;
  c.spread_base_prob = 0.02;
  auto a = init_world(c);
  auto b = init_world(c);
  Rng ra(1), rb(1);
  for (int k = 0; k < 300 && !a.terminal; ++k) {
    const auto ea = step(a, random_actions(a, ra));
    const auto eb = step(b, random_actions(b, rb));
    REQUIRE(world_hash(a) == world_hash(b));
    REQUIRE(ea.fire_out == eb.fire_out);
  }
}

TEST_CASE("snapshot round trip preserves the future") {
  WorldConfig c;
  c.seed = 11;
  c.spread_base_prob = 0.03;
  auto w = init_world(c);
  for (int k = 0; k < 20; ++k) step(w, idle(w));
  const auto j = snapshot_to_json(w);
  CHECK(j.at("version") == kSnapshotVersion);
  auto r = snapshot_from_json(nlohmann::json::parse(j.dump()));
  CHECK(world_hash(r) == world_hash(w));
  for (int k = 0; k < 50 && !w.terminal; ++k) {
    step(w, idle(w));
    step(r, idle(r));
    REQUIRE(world_hash(r) == world_hash(w));
  }
  auto bad = j;
  bad["version"] = 99;
  CHECK_THROWS_AS(snapshot_from_json(bad), ReplayError);
}

TEST_CASE("config validation") {
  WorldConfig c;
  c.n_agents = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.env_half_extent = 500;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.humidity = 1.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

}  // TEST_SUITE
