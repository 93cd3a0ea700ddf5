#include "controllers/digest.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <deque>
#include <limits>
#include <sstream>

#include "core/error.hpp"

namespace firemed::controllers {

namespace {

long long rounded(double v) { return std::llround(v); }

// 0 = east (+x), 90 = north (+y).
long long heading_degrees(Vec2 dir) {
  double deg = std::atan2(dir.y, dir.x) * 180.0 / std::numbers::pi;
  if (deg < 0.0) deg += 360.0;
  return rounded(deg) % 360;
}

std::string join(const std::vector<std::string>& lines) {
  std::string out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (i) out += '\n';
    out += lines[i];
  }
  return out;
}

}  // namespace

std::vector<FireCluster> fire_clusters(const sim::WorldState& world, double link_distance) {
  std::vector<std::size_t> burning;
  for (std::size_t i = 0; i < world.trees.size(); ++i) {
    if (world.trees[i].state == sim::TreeState::Burning) burning.push_back(i);
  }
  const double r2 = link_distance * link_distance;
  std::vector<bool> visited(burning.size(), false);
  std::vector<FireCluster> clusters;
  for (std::size_t s = 0; s < burning.size(); ++s) {
    if (visited[s]) continue;
    FireCluster c;
    std::deque<std::size_t> frontier{s};
    visited[s] = true;
    while (!frontier.empty()) {
      const auto cur = frontier.front();
      frontier.pop_front();
      c.trees.push_back(burning[cur]);
      const auto p = world.trees[burning[cur]].position;
      for (std::size_t o = 0; o < burning.size(); ++o) {
        if (!visited[o] && distance_sq(p, world.trees[burning[o]].position) <= r2) {
          visited[o] = true;
          frontier.push_back(o);
        }
      }
    }
    std::sort(c.trees.begin(), c.trees.end());
    Vec2 sum;
    for (auto t : c.trees) sum = sum + world.trees[t].position;
    c.centroid = sum * (1.0 / static_cast<double>(c.trees.size()));
    clusters.push_back(std::move(c));
  }
  return clusters;
}

std::size_t nearest_cluster(const std::vector<FireCluster>& clusters, Vec2 from) {
  if (clusters.empty()) throw NoFireToTarget("no fire clusters");
  std::size_t best = 0;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < clusters.size(); ++i) {
    const double d2 = distance_sq(from, clusters[i].centroid);
    if (d2 < best_d2) {
      best_d2 = d2;
      best = i;
    }
  }
  return best;
}

std::string WorldDigest::location_info() const { return join(agent_lines); }
std::string WorldDigest::fire_info() const { return join(fire_lines); }

WorldDigest digest(const sim::WorldState& world) {
  WorldDigest d;
  d.step = world.step;
  for (const auto& a : world.agents) {
    if (a.crashed) continue;
    std::ostringstream os;
    os << "Agent " << a.id << " is at (" << rounded(a.position.x) << ", " << rounded(a.position.y)
       << ") heading " << heading_degrees(a.direction) << " degrees and is " << (a.holding_water ? "holding water" : "not holding water") << ".";
    d.agent_lines.push_back(os.str());
  }
  d.clusters = fire_clusters(world, world.config.spread_radius);
  if (d.clusters.empty()) {
    d.fire_lines.push_back("There are no active fires.");
  } else {
    for (std::size_t i = 0; i < d.clusters.size(); ++i) {
      const auto& c = d.clusters[i];
      std::ostringstream os;
      os << "Fire " << i << " is at (" << rounded(c.centroid.x) << ", " << rounded(c.centroid.y)
         << ") with " << c.trees.size() << (c.trees.size() == 1 ? " burning tree." : " burning trees.");
      d.fire_lines.push_back(os.str());
    }
  }
  return d;
}

}  // namespace firemed::controllers
