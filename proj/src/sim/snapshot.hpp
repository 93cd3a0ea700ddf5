#pragma once

#include <json.hpp>

#include "sim/world.hpp"

namespace firemed::sim {

inline constexpr int kSnapshotVersion = 1;

nlohmann::json config_to_json(const WorldConfig& config);
// Missing keys keep their defaults; unknown keys raise ConfigError.
WorldConfig config_from_json(const nlohmann::json& j);

// Versioned {version, config, trees, agents, step, terminal, rng_state}.
nlohmann::json snapshot_to_json(const WorldState& world);
WorldState snapshot_from_json(const nlohmann::json& j);

}  // namespace firemed::sim
