#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/geometry.hpp"
#include "sim/world.hpp"

namespace firemed::controllers {

struct FireCluster {
  Vec2 centroid;
  std::vector<std::size_t> trees;  // ascending tree indices
};

// Connected components of burning trees, two trees linked when their distance
// is at most `link_distance`. Clusters are ordered by their lowest tree index.
std::vector<FireCluster> fire_clusters(const sim::WorldState& world, double link_distance);

// Natural-language rendering of the world for prompt placeholders.
struct WorldDigest {
  std::int64_t step = 0;
  std::vector<std::string> agent_lines;
  std::vector<std::string> fire_lines;
  std::vector<FireCluster> clusters;

  std::string location_info() const;
  std::string fire_info() const;
  bool has_fire() const { return !clusters.empty(); }
};

WorldDigest digest(const sim::WorldState& world);

// Index into `clusters` of the cluster whose centroid is nearest to `from`;
// ties go to the lower index. Requires a non-empty list.
std::size_t nearest_cluster(const std::vector<FireCluster>& clusters, Vec2 from);

}  // namespace firemed::controllers
