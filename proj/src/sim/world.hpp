#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "core/geometry.hpp"
#include "core/rng.hpp"

namespace firemed::sim {

struct WorldConfig {
  double env_half_extent = 750.0;
  double island_half_extent = 600.0;
  Vec2 village_center{-250.0, -250.0};
  double village_radius = 150.0;
  std::int64_t episode_length = 3000;
  int n_agents = 3;
  int tree_count = 1000;

  double agent_speed = 5.0;
  double max_turn_rate = 0.1;
  double drop_radius = 40.0;
  // Agents start this far inside the island edge, nose pointing at the water.
  double spawn_inset = 10.0;

  std::int64_t burn_duration = 400;
  std::int64_t wet_immunity = 600;
  double spread_base_prob = 0.004;
  double spread_radius = 75.0;
  double ignition_radius = 60.0;
  Vec2 wind{1.0, 0.0};
  double humidity = 0.3;

  std::uint64_t seed = 42;

  // Throws ConfigError naming the first violated invariant.
  void validate() const;
  bool operator==(const WorldConfig&) const = default;
};

enum class TreeState : std::uint8_t { Alive, Wet, Burning, Extinguished, BurnedOut };

const char* to_string(TreeState s);
char tree_state_code(TreeState s);

inline bool is_terminal(TreeState s) {
  return s == TreeState::Extinguished || s == TreeState::BurnedOut;
}

struct Tree {
  Vec2 position;
  TreeState state = TreeState::Alive;
  std::int64_t state_age = 0;
  bool operator==(const Tree&) const = default;
};

struct AgentState {
  int id = 0;
  Vec2 position;
  Vec2 direction{1.0, 0.0};
  bool holding_water = false;
  bool crashed = false;
  bool operator==(const AgentState&) const = default;
};

enum class Drop : std::uint8_t { DoNothing = 0, DropWater = 1 };

struct Action {
  double steer = 0.0;
  Drop drop = Drop::DoNothing;
  bool operator==(const Action&) const = default;
};

struct AgentAction {
  int agent_id = 0;
  Action action;
};

struct AgentEvents {
  bool crossed_border = false;
  bool picked_up_water = false;
  bool dropped_water = false;
  int extinguished_count = 0;
  int prepared_count = 0;
};

struct StepEvents {
  std::vector<AgentEvents> agents;
  bool fire_out = false;
  bool fire_near_village = false;
  bool any_burning = false;
};

struct SpreadLink {
  std::uint32_t target;
  double probability;
};

struct WorldState {
  WorldConfig config;
  std::vector<Tree> trees;
  std::vector<AgentState> agents;
  std::int64_t step = 0;
  bool terminal = false;
  Rng rng;
  // Derived from tree positions and config; rebuilt by rebuild_spread_links().
  std::vector<std::vector<SpreadLink>> spread_links;

  std::size_t count(TreeState s) const;
  bool any_burning() const;
};

WorldState init_world(const WorldConfig& config);

// Recomputes spread_links; needed after trees/config are set from outside
// (snapshot restore, test fixtures).
void rebuild_spread_links(WorldState& world);

// Per-step ignition probability from `from` onto `to` under the configured
// humidity and wind.
double spread_probability(const WorldConfig& config, Vec2 from, Vec2 to);

AgentState steer_integrate(const AgentState& agent, double steer, const WorldConfig& config);

StepEvents step(WorldState& world, std::span<const AgentAction> actions);

// Water band: inside the (closed) environment square and strictly outside the
// (closed) island square.
bool in_water_band(Vec2 p, const WorldConfig& config);
bool outside_environment(Vec2 p, const WorldConfig& config);
bool in_village_zone(Vec2 p, const WorldConfig& config);

// Fingerprint of trees, agents and step counter. The rng stream is left out;
// any divergence in it shows up in the trees within a step or two.
std::string world_hash(const WorldState& world);

}  // namespace firemed::sim
