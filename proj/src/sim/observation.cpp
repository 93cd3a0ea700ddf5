#include "sim/observation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "core/error.hpp"

namespace firemed::sim {

namespace {

const AgentState& agent_at(const WorldState& w, int id) {
  if (id < 0 || static_cast<std::size_t>(id) >= w.agents.size())
    throw InputError("unknown agent " + std::to_string(id));
  return w.agents[static_cast<std::size_t>(id)];
}

double unit(double v) { return std::clamp(v, -1.0, 1.0); }

}  // namespace

std::optional<std::size_t> closest_active_tree(const WorldState& w, Vec2 from) {
  std::optional<std::size_t> best;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < w.trees.size(); ++i) {
    if (is_terminal(w.trees[i].state)) continue;
    const double d2 = distance_sq(from, w.trees[i].position);
    if (d2 < best_d2) {
      best_d2 = d2;
      best = i;
    }
  }
  return best;
}

FeatureObservation encode_observation(const WorldState& w, int agent_id) {
  const auto& a = agent_at(w, agent_id);
  const double eh = w.config.env_half_extent;
  FeatureObservation obs;
  auto& v = obs.values;
  v[0] = unit(a.position.x / eh);
  v[1] = unit(a.position.y / eh);
  v[2] = unit(a.direction.x);
  v[3] = unit(a.direction.y);
  v[4] = a.holding_water ? 1.0 : 0.0;
  if (auto idx = closest_active_tree(w, a.position)) {
    const auto& t = w.trees[*idx];
    v[5] = unit(t.position.x / eh);
    v[6] = unit(t.position.y / eh);
    v[7] = t.state == TreeState::Burning ? 1.0 : 0.0;
  }
  return obs;
}

Raster encode_raster(const WorldState& w, int agent_id, int k, double half_width) {
  if (k < 1) throw InputError("raster resolution must be >= 1");
  if (!(half_width > 0.0)) throw InputError("raster half width must be > 0");
  const auto& a = agent_at(w, agent_id);
  Raster r;
  r.k = k;
  r.half_width = half_width;
  r.cells.assign(static_cast<std::size_t>(k) * k * 3, 0.0);
  const double cell = 2.0 * half_width / k;
  const double x0 = a.position.x - half_width;
  const double y0 = a.position.y - half_width;

  for (int row = 0; row < k; ++row) {
    for (int col = 0; col < k; ++col) {
      const Vec2 centre{x0 + (col + 0.5) * cell, y0 + (row + 0.5) * cell};
      if (in_water_band(centre, w.config))
        r.cells[(static_cast<std::size_t>(row) * k + col) * 3 + kRasterWater] = 1.0;
    }
  }
  for (const auto& t : w.trees) {
    const int col = static_cast<int>(std::floor((t.position.x - x0) / cell));
    const int row = static_cast<int>(std::floor((t.position.y - y0) / cell));
    if (col < 0 || row < 0 || col >= k || row >= k) continue;
    auto* px = &r.cells[(static_cast<std::size_t>(row) * k + col) * 3];
    if (t.state == TreeState::Alive || t.state == TreeState::Wet) px[kRasterVegetation] = 1.0;
    if (t.state == TreeState::Burning) px[kRasterFire] = 1.0;
  }
  return r;
}

}  // namespace firemed::sim
