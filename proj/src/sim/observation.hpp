#pragma once

#include <array>
#include <optional>
#include <vector>

#include "sim/world.hpp"

namespace firemed::sim {

// position(2), direction(2), holding_water(1), closest_tree_position(2),
// closest_tree_burning(1). Positions are divided by env_half_extent.
struct FeatureObservation {
  static constexpr std::size_t kSize = 8;
  std::array<double, kSize> values{};

  double operator[](std::size_t i) const { return values[i]; }
};

// Index of the nearest tree that is not extinguished or burned out; ties go to
// the lowest index. Empty when no such tree exists.
std::optional<std::size_t> closest_active_tree(const WorldState& world, Vec2 from);

FeatureObservation encode_observation(const WorldState& world, int agent_id);

// Coarse k x k x 3 raster centred on the agent: vegetation, fire, water.
// Row-major, row 0 at the lowest y; values are 0 or 1.
struct Raster {
  int k = 0;
  double half_width = 0.0;
  std::vector<double> cells;

  double at(int row, int col, int channel) const {
    return cells[(static_cast<std::size_t>(row) * k + col) * 3 + channel];
  }
};

inline constexpr int kRasterVegetation = 0;
inline constexpr int kRasterFire = 1;
inline constexpr int kRasterWater = 2;
inline constexpr double kRasterHalfWidth = 150.0;

Raster encode_raster(const WorldState& world, int agent_id, int k,
                     double half_width = kRasterHalfWidth);

}  // namespace firemed::sim
