#include "sim/world.hpp"

#include <algorithm>
#include <limits>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "core/error.hpp"
#include "core/hash.hpp"

namespace firemed::sim {

namespace {

constexpr int kIgnitionRetries = 64;

void require(bool ok, const char* what) {
  if (!ok) throw ConfigError(std::string("world config: ") + what);
}

bool finite(double v) { return std::isfinite(v); }

}  // namespace

void WorldConfig::validate() const {
  require(finite(env_half_extent) && finite(island_half_extent), "extents must be finite");
  require(island_half_extent > 0.0, "island_half_extent must be > 0");
  require(env_half_extent > island_half_extent, "env_half_extent must exceed island_half_extent");
  require(firemed::finite(village_center) && village_radius >= 0.0, "village must be finite");
  require(std::abs(village_center.x) + village_radius <= island_half_extent &&
              std::abs(village_center.y) + village_radius <= island_half_extent,
          "village must lie fully inside the island");
  require(episode_length >= 1, "episode_length must be >= 1");
  require(n_agents >= 1, "n_agents must be >= 1");
  require(tree_count >= 1, "tree_count must be >= 1");
  require(agent_speed > 0.0 && finite(agent_speed), "agent_speed must be > 0");
  require(max_turn_rate > 0.0 && finite(max_turn_rate), "max_turn_rate must be > 0");
  require(drop_radius >= 0.0 && finite(drop_radius), "drop_radius must be >= 0");
  require(spawn_inset > 0.0 && spawn_inset < island_half_extent, "spawn_inset out of range");
  require(burn_duration >= 1, "burn_duration must be >= 1");
  require(wet_immunity >= 1, "wet_immunity must be >= 1");
  require(spread_base_prob >= 0.0 && spread_base_prob <= 1.0, "spread_base_prob must be in [0,1]");
  require(spread_radius >= 0.0 && finite(spread_radius), "spread_radius must be >= 0");
  require(ignition_radius >= 0.0 && finite(ignition_radius), "ignition_radius must be >= 0");
  require(firemed::finite(wind), "wind must be finite");
  require(humidity >= 0.0 && humidity <= 1.0, "humidity must be in [0,1]");
}

const char* to_string(TreeState s) {
  switch (s) {
    case TreeState::Alive: return "alive";
    case TreeState::Wet: return "wet";
    case TreeState::Burning: return "burning";
    case TreeState::Extinguished: return "extinguished";
    case TreeState::BurnedOut: return "burned_out";
  }
  return "?";
}

char tree_state_code(TreeState s) {
  switch (s) {
    case TreeState::Alive: return 'A';
    case TreeState::Wet: return 'W';
    case TreeState::Burning: return 'B';
    case TreeState::Extinguished: return 'E';
    case TreeState::BurnedOut: return 'X';
  }
  return '?';
}

std::size_t WorldState::count(TreeState s) const {
  return static_cast<std::size_t>(
      std::count_if(trees.begin(), trees.end(), [s](const Tree& t) { return t.state == s; }));
}

bool WorldState::any_burning() const {
  return std::any_of(trees.begin(), trees.end(),
                     [](const Tree& t) { return t.state == TreeState::Burning; });
}

bool in_water_band(Vec2 p, const WorldConfig& c) {
  const bool inside_env = std::abs(p.x) <= c.env_half_extent && std::abs(p.y) <= c.env_half_extent;
  const bool inside_island =
      std::abs(p.x) <= c.island_half_extent && std::abs(p.y) <= c.island_half_extent;
  return inside_env && !inside_island;
}

bool outside_environment(Vec2 p, const WorldConfig& c) {
  return p.x > c.env_half_extent || p.x < -c.env_half_extent || p.y > c.env_half_extent ||
         p.y < -c.env_half_extent;
}

bool in_village_zone(Vec2 p, const WorldConfig& c) {
  return distance_sq(p, c.village_center) <= c.village_radius * c.village_radius;
}

double spread_probability(const WorldConfig& c, Vec2 from, Vec2 to) {
  const double wind_gain = norm(c.wind);
  double alignment = 0.0;
  if (wind_gain > 0.0) {
    const Vec2 d = to - from;
    const double dn = norm(d);
    if (dn > 0.0) alignment = std::max(0.0, dot(c.wind, d) / (wind_gain * dn));
  }
  const double p = c.spread_base_prob * (1.0 - c.humidity) * (1.0 + wind_gain * alignment);
  return std::clamp(p, 0.0, 1.0);
}

void rebuild_spread_links(WorldState& world) {
  const auto& c = world.config;
  const double r2 = c.spread_radius * c.spread_radius;
  const auto n = world.trees.size();
  world.spread_links.assign(n, {});
  // Bucket grid with cell size = spread radius keeps this O(n * k).
  const double cell = std::max(c.spread_radius, 1.0);
  const double origin = -c.env_half_extent;
  const int dim = static_cast<int>(std::ceil(2.0 * c.env_half_extent / cell)) + 1;
  auto cell_of = [&](double v) {
    return std::clamp(static_cast<int>(std::floor((v - origin) / cell)), 0, dim - 1);
  };
  std::vector<std::vector<std::uint32_t>> buckets(static_cast<std::size_t>(dim) * dim);
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto& p = world.trees[i].position;
    buckets[static_cast<std::size_t>(cell_of(p.y)) * dim + cell_of(p.x)].push_back(i);
  }
  for (std::uint32_t i = 0; i < n; ++i) {
    const auto& p = world.trees[i].position;
    const int cx = cell_of(p.x);
    const int cy = cell_of(p.y);
    std::vector<std::uint32_t> found;
    for (int y = std::max(cy - 1, 0); y <= std::min(cy + 1, dim - 1); ++y) {
      for (int x = std::max(cx - 1, 0); x <= std::min(cx + 1, dim - 1); ++x) {
        for (auto j : buckets[static_cast<std::size_t>(y) * dim + x]) {
          if (j != i && distance_sq(p, world.trees[j].position) <= r2) found.push_back(j);
        }
      }
    }
    std::sort(found.begin(), found.end());
    auto& links = world.spread_links[i];
    links.reserve(found.size());
    for (auto j : found) links.push_back({j, spread_probability(c, p, world.trees[j].position)});
  }
}

WorldState init_world(const WorldConfig& config) {
  config.validate();
  WorldState w;
  w.config = config;
  w.rng = Rng(config.seed);
  const double ih = config.island_half_extent;

  // Jittered grid: pick tree_count distinct cells of a g x g lattice.
  const int g = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(config.tree_count))));
  const double cell = 2.0 * ih / g;
  std::vector<int> cells(static_cast<std::size_t>(g) * g);
  std::iota(cells.begin(), cells.end(), 0);
  for (std::size_t i = 0; i < static_cast<std::size_t>(config.tree_count); ++i) {
    const auto j = i + w.rng.below(cells.size() - i);
    std::swap(cells[i], cells[j]);
  }
  cells.resize(static_cast<std::size_t>(config.tree_count));
  std::sort(cells.begin(), cells.end());
  w.trees.reserve(cells.size());
  for (int idx : cells) {
    const int cx = idx % g;
    const int cy = idx / g;
    const double jx = w.rng.uniform(-0.35, 0.35) * cell;
    const double jy = w.rng.uniform(-0.35, 0.35) * cell;
    w.trees.push_back({{-ih + (cx + 0.5) * cell + jx, -ih + (cy + 0.5) * cell + jy},
                       TreeState::Alive, 0});
  }

  // One ignition cluster, kept clear of the village.
  const double margin = std::min(config.ignition_radius + 50.0, 0.5 * ih);
  const double keep_out = config.village_radius + config.ignition_radius;
  bool ignited = false;
  for (int attempt = 0; attempt < kIgnitionRetries && !ignited; ++attempt) {
    const Vec2 point{w.rng.uniform(-ih + margin, ih - margin),
                     w.rng.uniform(-ih + margin, ih - margin)};
    if (distance(point, config.village_center) <= keep_out) continue;
    std::vector<std::size_t> cluster;
    std::size_t nearest = 0;
    double nearest_d2 = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < w.trees.size(); ++i) {
      const double d2 = distance_sq(point, w.trees[i].position);
      if (d2 <= config.ignition_radius * config.ignition_radius) cluster.push_back(i);
      if (d2 < nearest_d2) {
        nearest_d2 = d2;
        nearest = i;
      }
    }
    if (cluster.empty()) cluster.push_back(nearest);
    const bool touches_village = std::any_of(cluster.begin(), cluster.end(), [&](std::size_t i) {
      return in_village_zone(w.trees[i].position, config);
    });
    if (touches_village) continue;
    for (auto i : cluster) w.trees[i].state = TreeState::Burning;
    ignited = true;
  }
  if (!ignited) throw ConfigError("could not place an ignition cluster away from the village");

  // Agents start evenly spaced around the shore, facing the water.
  const double theta0 = w.rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double rim = ih - config.spawn_inset;
  for (int k = 0; k < config.n_agents; ++k) {
    const double theta = theta0 + 2.0 * std::numbers::pi * k / config.n_agents;
    const double cx = std::cos(theta);
    const double sy = std::sin(theta);
    const double s = rim / std::max(std::abs(cx), std::abs(sy));
    AgentState a;
    a.id = k;
    a.position = {cx * s, sy * s};
    a.direction = std::abs(cx) >= std::abs(sy) ? Vec2{cx > 0 ? 1.0 : -1.0, 0.0}
                                               : Vec2{0.0, sy > 0 ? 1.0 : -1.0};
    w.agents.push_back(a);
  }

  rebuild_spread_links(w);
  return w;
}

AgentState steer_integrate(const AgentState& agent, double steer, const WorldConfig& c) {
  if (!std::isfinite(steer)) throw InputError("steer must be finite");
  if (agent.crashed) throw StateError("crashed agents cannot move");
  const double s = std::clamp(steer, -1.0, 1.0);
  AgentState out = agent;
  // Positive steer turns right (clockwise).
  out.direction = normalized(rotated(agent.direction, -s * c.max_turn_rate));
  out.position = agent.position + out.direction * c.agent_speed;
  return out;
}

StepEvents step(WorldState& w, std::span<const AgentAction> actions) {
  if (w.terminal) throw StateError("step called on a terminal world");
  const auto& c = w.config;
  const std::size_t n_agents = w.agents.size();

  std::vector<const Action*> by_agent(n_agents, nullptr);
  for (const auto& aa : actions) {
    if (aa.agent_id < 0 || static_cast<std::size_t>(aa.agent_id) >= n_agents)
      throw InputError("action for unknown agent " + std::to_string(aa.agent_id));
    const auto id = static_cast<std::size_t>(aa.agent_id);
    if (w.agents[id].crashed) throw InputError("action for crashed agent " + std::to_string(id));
    if (by_agent[id] != nullptr) throw InputError("duplicate action for agent " + std::to_string(id));
    if (!std::isfinite(aa.action.steer)) throw InputError("steer must be finite");
    by_agent[id] = &aa.action;
  }
  for (std::size_t i = 0; i < n_agents; ++i) {
    if (!w.agents[i].crashed && by_agent[i] == nullptr)
      throw InputError("missing action for agent " + std::to_string(i));
  }

  StepEvents ev;
  ev.agents.resize(n_agents);
  const bool burning_before = w.any_burning();

  // Kinematics and border.
  std::vector<bool> holding_before(n_agents);
  for (std::size_t i = 0; i < n_agents; ++i) {
    auto& a = w.agents[i];
    holding_before[i] = a.holding_water;
    if (a.crashed) continue;
    a = steer_integrate(a, by_agent[i]->steer, c);
    if (outside_environment(a.position, c)) {
      a.crashed = true;
      ev.agents[i].crossed_border = true;
    }
  }

  // Water drops act on the tree states as they were at the start of the step.
  std::vector<std::size_t> droppers;
  for (std::size_t i = 0; i < n_agents; ++i) {
    if (by_agent[i] != nullptr && by_agent[i]->drop == Drop::DropWater && holding_before[i]) {
      droppers.push_back(i);
      w.agents[i].holding_water = false;
      ev.agents[i].dropped_water = true;
    }
  }
  std::vector<bool> changed(w.trees.size(), false);
  if (!droppers.empty()) {
    const double r2 = c.drop_radius * c.drop_radius;
    for (std::size_t t = 0; t < w.trees.size(); ++t) {
      auto& tree = w.trees[t];
      if (is_terminal(tree.state)) continue;
      // Closest dropper gets the credit; ties go to the lower agent index.
      std::size_t credited = n_agents;
      double best = std::numeric_limits<double>::infinity();
      for (auto i : droppers) {
        const double d2 = distance_sq(tree.position, w.agents[i].position);
        if (d2 <= r2 && d2 < best) {
          best = d2;
          credited = i;
        }
      }
      if (credited == n_agents) continue;
      switch (tree.state) {
        case TreeState::Burning:
          tree.state = TreeState::Extinguished;
          ++ev.agents[credited].extinguished_count;
          break;
        case TreeState::Alive:
          tree.state = TreeState::Wet;
          ++ev.agents[credited].prepared_count;
          break;
        default:  // already wet: immunity restarts
          break;
      }
      tree.state_age = 0;
      changed[t] = true;
    }
  }

  // Pickup only for agents that began the step empty-handed.
  for (std::size_t i = 0; i < n_agents; ++i) {
    auto& a = w.agents[i];
    if (!holding_before[i] && !a.crashed && in_water_band(a.position, c)) {
      a.holding_water = true;
      ev.agents[i].picked_up_water = true;
    }
  }

  // Fire spread from trees burning after the drops.
  std::vector<std::uint32_t> sources;
  for (std::uint32_t t = 0; t < w.trees.size(); ++t) {
    if (w.trees[t].state == TreeState::Burning) sources.push_back(t);
  }
  for (auto src : sources) {
    for (const auto& link : w.spread_links[src]) {
      auto& target = w.trees[link.target];
      if (target.state != TreeState::Alive) continue;
      if (w.rng.uniform() < link.probability) {
        target.state = TreeState::Burning;
        target.state_age = 0;
        changed[link.target] = true;
      }
    }
  }

  // Aging of trees that did not transition this step.
  for (std::size_t t = 0; t < w.trees.size(); ++t) {
    if (changed[t]) continue;
    auto& tree = w.trees[t];
    ++tree.state_age;
    if (tree.state == TreeState::Burning && tree.state_age >= c.burn_duration) {
      tree.state = TreeState::BurnedOut;
      tree.state_age = 0;
    } else if (tree.state == TreeState::Wet && tree.state_age >= c.wet_immunity) {
      tree.state = TreeState::Alive;
      tree.state_age = 0;
    }
  }

  ++w.step;
  for (const auto& tree : w.trees) {
    if (tree.state != TreeState::Burning) continue;
    ev.any_burning = true;
    if (in_village_zone(tree.position, c)) {
      ev.fire_near_village = true;
      break;
    }
  }
  ev.fire_out = burning_before && !ev.any_burning;
  const bool crash = std::any_of(ev.agents.begin(), ev.agents.end(),
                                 [](const AgentEvents& e) { return e.crossed_border; });
  w.terminal = ev.fire_out || crash || w.step >= c.episode_length;
  return ev;
}

std::string world_hash(const WorldState& w) {
  Fnv1a h;
  for (const auto& t : w.trees) {
    h.f64(t.position.x);
    h.f64(t.position.y);
    h.u64(static_cast<std::uint64_t>(t.state));
    h.i64(t.state_age);
  }
  for (const auto& a : w.agents) {
    h.i64(a.id);
    h.f64(a.position.x);
    h.f64(a.position.y);
    h.f64(a.direction.x);
    h.f64(a.direction.y);
    h.u64(a.holding_water);
    h.u64(a.crashed);
  }
  h.i64(w.step);
  h.u64(w.terminal);
  return h.hex();
}

}  // namespace firemed::sim
