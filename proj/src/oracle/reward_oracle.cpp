#include "oracle/reward_oracle.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>

#include "core/error.hpp"
#include "core/rng.hpp"

namespace firemed::oracle {

namespace {

bool in_band(Vec2 p, const sim::WorldConfig& c) {
  const double ax = std::abs(p.x), ay = std::abs(p.y);
  const bool inside_env = ax <= c.env_half_extent && ay <= c.env_half_extent;
  const bool inside_island = ax <= c.island_half_extent && ay <= c.island_half_extent;
  return inside_env && !inside_island;
}

const sim::Action* action_for(std::span<const sim::AgentAction> actions, int id) {
  for (const auto& a : actions)
    if (a.agent_id == id) return &a.action;
  return nullptr;
}

}  // namespace

sim::StepEvents events_from_states(const sim::WorldState& before, const sim::WorldState& after,
                                   std::span<const sim::AgentAction> actions) {
  const auto& c = before.config;
  const std::size_t n = before.agents.size();
  if (after.agents.size() != n || after.trees.size() != before.trees.size())
    throw InputError("oracle: before and after worlds differ in shape");
  sim::StepEvents ev;
  ev.agents.resize(n);

  std::vector<std::size_t> droppers;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& b = before.agents[i];
    const auto& a = after.agents[i];
    ev.agents[i].crossed_border = !b.crashed && a.crashed;
    const auto* act = action_for(actions, static_cast<int>(i));
    const bool dropped = act && act->drop == sim::Drop::DropWater && b.holding_water;
    ev.agents[i].dropped_water = dropped;
    if (dropped) droppers.push_back(i);
    ev.agents[i].picked_up_water = !b.holding_water && a.holding_water;
    if (ev.agents[i].picked_up_water && !in_band(a.position, c))
      throw InputError("oracle: pickup outside the water band");
  }

  bool burning_before = false;
  for (std::size_t t = 0; t < before.trees.size(); ++t) {
    const auto s0 = before.trees[t].state;
    const auto s1 = after.trees[t].state;
    burning_before = burning_before || s0 == sim::TreeState::Burning;
    const bool extinguished = s0 == sim::TreeState::Burning && s1 == sim::TreeState::Extinguished;
    const bool prepared = s0 == sim::TreeState::Alive && s1 == sim::TreeState::Wet;
    if (!extinguished && !prepared) continue;
    std::size_t who = n;
    double best = std::numeric_limits<double>::infinity();
    for (auto i : droppers) {
      const double dx = before.trees[t].position.x - after.agents[i].position.x;
      const double dy = before.trees[t].position.y - after.agents[i].position.y;
      const double d2 = dx * dx + dy * dy;
      if (d2 <= c.drop_radius * c.drop_radius && d2 < best) {
        best = d2;
        who = i;
      }
    }
    if (who == n) throw InputError("oracle: tree changed by water with no dropper in range");
    if (extinguished) ++ev.agents[who].extinguished_count;
    else ++ev.agents[who].prepared_count;
  }

  for (const auto& t : after.trees) {
    if (t.state != sim::TreeState::Burning) continue;
    ev.any_burning = true;
    const double dx = t.position.x - c.village_center.x;
    const double dy = t.position.y - c.village_center.y;
    if (dx * dx + dy * dy <= c.village_radius * c.village_radius) ev.fire_near_village = true;
  }
  ev.fire_out = burning_before && !ev.any_burning;
  return ev;
}

std::vector<reward::RewardBreakdown> rewards_from_states(const sim::WorldState& before,
                                                         const sim::WorldState& after,
                                                         std::span<const sim::AgentAction> actions,
                                                         const reward::RewardShaping& s) {
  const auto ev = events_from_states(before, after, actions);
  std::vector<reward::RewardBreakdown> out(ev.agents.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto& r = out[i];
    const auto& e = ev.agents[i];
    r.crossed_border = e.crossed_border ? s.crash_reward : 0.0;
    r.pickup = e.picked_up_water ? s.water_pickup_reward : 0.0;
    r.extinguish = s.ext_fire_reward * e.extinguished_count;
    r.prepare = s.prep_tree_reward * e.prepared_count;
    r.fire_out = ev.fire_out ? s.fire_out_reward : 0.0;
    r.too_close_to_village = ev.fire_near_village ? s.fire_close_to_village_reward : 0.0;
    r.time_step_burning = ev.any_burning ? s.time_step_burning : 0.0;
    r.total = r.crossed_border + r.pickup + r.extinguish + r.prepare + r.fire_out +
              r.too_close_to_village + r.time_step_burning;
  }
  return out;
}

Fixture random_fixture(std::uint64_t seed) {
  Rng rng(seed);
  sim::WorldConfig c;
  c.n_agents = 1 + static_cast<int>(rng.below(6));
  c.tree_count = 48;
  c.burn_duration = 1 + static_cast<std::int64_t>(rng.below(40));
  c.wet_immunity = 1 + static_cast<std::int64_t>(rng.below(40));
  c.spread_base_prob = rng.uniform(0.0, 0.5);
  c.humidity = rng.uniform();
  c.wind = {rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5)};
  c.seed = seed;

  sim::WorldState w;
  w.config = c;
  w.rng = Rng(mix_seed(seed, 1));
  w.step = static_cast<std::int64_t>(rng.below(100));

  // Agents: anywhere from the island interior to just past the border.
  for (int k = 0; k < c.n_agents; ++k) {
    sim::AgentState a;
    a.id = k;
    const double r = rng.uniform() < 0.4 ? rng.uniform(560.0, 760.0) : rng.uniform(0.0, 560.0);
    const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
    a.position = {std::clamp(r * std::cos(phi), -749.0, 749.0),
                  std::clamp(r * std::sin(phi), -749.0, 749.0)};
    const double h = rng.uniform(0.0, 2.0 * std::numbers::pi);
    a.direction = {std::cos(h), std::sin(h)};
    a.holding_water = rng.uniform() < 0.6;
    w.agents.push_back(a);
  }

  // Trees: half clustered around agents' next positions, half scattered, and
  // a few near the village.
  const double ih = c.island_half_extent;
  auto clamp_island = [&](Vec2 p) {
    return Vec2{std::clamp(p.x, -ih, ih), std::clamp(p.y, -ih, ih)};
  };
  for (int t = 0; t < c.tree_count; ++t) {
    Vec2 p;
    const double u = rng.uniform();
    if (u < 0.5) {
      const auto& a = w.agents[rng.below(w.agents.size())];
      p = a.position + a.direction * c.agent_speed +
          Vec2{rng.uniform(-45.0, 45.0), rng.uniform(-45.0, 45.0)};
    } else if (u < 0.6) {
      p = c.village_center + Vec2{rng.uniform(-160.0, 160.0), rng.uniform(-160.0, 160.0)};
    } else {
      p = {rng.uniform(-ih, ih), rng.uniform(-ih, ih)};
    }
    sim::Tree tree;
    tree.position = clamp_island(p);
    tree.state = static_cast<sim::TreeState>(rng.below(5));
    const auto limit = tree.state == sim::TreeState::Wet ? c.wet_immunity : c.burn_duration;
    tree.state_age = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(limit)));
    w.trees.push_back(tree);
  }
  sim::rebuild_spread_links(w);

  Fixture f;
  f.before = std::move(w);
  for (int k = 0; k < c.n_agents; ++k) {
    sim::Action a;
    a.steer = rng.uniform(-1.5, 1.5);
    a.drop = rng.uniform() < 0.6 ? sim::Drop::DropWater : sim::Drop::DoNothing;
    f.actions.push_back({k, a});
  }
  return f;
}

BenchResult bench_rewards(int n, std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  BenchResult r;
  const reward::RewardShaping presets[] = {reward::RewardShaping::unshaped(),
                                           reward::RewardShaping::extinguish_focused()};
  for (int i = 0; i < n; ++i) {
    const auto f = random_fixture(mix_seed(seed, static_cast<std::uint64_t>(i)));
    sim::WorldState after = f.before;
    const auto events = sim::step(after, f.actions);
    for (const auto& shaping : presets) {
      ++r.fixtures;
      if (reward::compute_rewards(events, shaping) !=
          rewards_from_states(f.before, after, f.actions, shaping))
        ++r.mismatches;
    }
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

}  // namespace firemed::oracle
