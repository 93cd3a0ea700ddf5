#include "sim/snapshot.hpp"

#include <set>
#include <string>

#include "core/error.hpp"

namespace firemed::sim {

using nlohmann::json;

namespace {

json vec(Vec2 v) { return json::array({v.x, v.y}); }

Vec2 vec_from(const json& j, const char* key) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
    throw ConfigError(std::string(key) + ": expected [x, y]");
  return {j[0].get<double>(), j[1].get<double>()};
}

TreeState tree_state_from(int v) {
  if (v < 0 || v > static_cast<int>(TreeState::BurnedOut)) throw ReplayError("bad tree state");
  return static_cast<TreeState>(v);
}

}  // namespace

json config_to_json(const WorldConfig& c) {
  return json{{"env_half_extent", c.env_half_extent},
              {"island_half_extent", c.island_half_extent},
              {"village_center", vec(c.village_center)},
              {"village_radius", c.village_radius},
              {"episode_length", c.episode_length},
              {"n_agents", c.n_agents},
              {"tree_count", c.tree_count},
              {"agent_speed", c.agent_speed},
              {"max_turn_rate", c.max_turn_rate},
              {"drop_radius", c.drop_radius},
              {"spawn_inset", c.spawn_inset},
              {"burn_duration", c.burn_duration},
              {"wet_immunity", c.wet_immunity},
              {"spread_base_prob", c.spread_base_prob},
              {"spread_radius", c.spread_radius},
              {"ignition_radius", c.ignition_radius},
              {"wind", vec(c.wind)},
              {"humidity", c.humidity},
              {"seed", c.seed}};
}

WorldConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("world config must be an object");
  WorldConfig c;
  static const std::set<std::string> known = {
      "env_half_extent", "island_half_extent", "village_center", "village_radius",
      "episode_length",  "n_agents",           "tree_count",     "agent_speed",
      "max_turn_rate",   "drop_radius",        "spawn_inset",    "burn_duration",
      "wet_immunity",    "spread_base_prob",   "spread_radius",  "ignition_radius",
      "wind",            "humidity",           "seed"};
  for (const auto& [k, _] : j.items()) {
    if (!known.contains(k)) throw ConfigError("world config: unknown key '" + k + "'");
  }
  try {
    auto num = [&](const char* k, double& out) {
      if (j.contains(k)) out = j.at(k).get<double>();
    };
    auto integer = [&](const char* k, auto& out) {
      if (j.contains(k)) out = j.at(k).get<std::remove_reference_t<decltype(out)>>();
    };
    num("env_half_extent", c.env_half_extent);
    num("island_half_extent", c.island_half_extent);
    if (j.contains("village_center")) c.village_center = vec_from(j["village_center"], "village_center");
    num("village_radius", c.village_radius);
    integer("episode_length", c.episode_length);
    integer("n_agents", c.n_agents);
    integer("tree_count", c.tree_count);
    num("agent_speed", c.agent_speed);
    num("max_turn_rate", c.max_turn_rate);
    num("drop_radius", c.drop_radius);
    num("spawn_inset", c.spawn_inset);
    integer("burn_duration", c.burn_duration);
    integer("wet_immunity", c.wet_immunity);
    num("spread_base_prob", c.spread_base_prob);
    num("spread_radius", c.spread_radius);
    num("ignition_radius", c.ignition_radius);
    if (j.contains("wind")) c.wind = vec_from(j["wind"], "wind");
    num("humidity", c.humidity);
    integer("seed", c.seed);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("world config: ") + e.what());
  }
  return c;
}

json snapshot_to_json(const WorldState& w) {
  json trees = json::array();
  for (const auto& t : w.trees)
    trees.push_back(json::array({t.position.x, t.position.y, static_cast<int>(t.state), t.state_age}));
  json agents = json::array();
  for (const auto& a : w.agents) {
    agents.push_back({{"id", a.id},
                      {"position", vec(a.position)},
                      {"direction", vec(a.direction)},
                      {"holding_water", a.holding_water},
                      {"crashed", a.crashed}});
  }
  return json{{"version", kSnapshotVersion},
              {"config", config_to_json(w.config)},
              {"trees", std::move(trees)},
              {"agents", std::move(agents)},
              {"step", w.step},
              {"terminal", w.terminal},
              {"rng_state", w.rng.state()}};
}

WorldState snapshot_from_json(const json& j) {
  if (!j.is_object() || !j.contains("version")) throw ReplayError("snapshot: missing version");
  if (j["version"] != kSnapshotVersion)
    throw ReplayError("snapshot: unsupported version " + j["version"].dump());
  WorldState w;
  try {
    w.config = config_from_json(j.at("config"));
    for (const auto& t : j.at("trees")) {
      w.trees.push_back({{t.at(0).get<double>(), t.at(1).get<double>()},
                         tree_state_from(t.at(2).get<int>()),
                         t.at(3).get<std::int64_t>()});
    }
    for (const auto& a : j.at("agents")) {
      AgentState s;
      s.id = a.at("id").get<int>();
      s.position = vec_from(a.at("position"), "position");
      s.direction = vec_from(a.at("direction"), "direction");
      s.holding_water = a.at("holding_water").get<bool>();
      s.crashed = a.at("crashed").get<bool>();
      w.agents.push_back(s);
    }
    w.step = j.at("step").get<std::int64_t>();
    w.terminal = j.at("terminal").get<bool>();
    w.rng.restore(j.at("rng_state").get<std::string>());
  } catch (const json::exception& e) {
    throw ReplayError(std::string("snapshot: ") + e.what());
  }
  rebuild_spread_links(w);
  return w;
}

}  // namespace firemed::sim
