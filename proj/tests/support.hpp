#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include "sim/world.hpp"

namespace firemed::test {

// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::mt19937_64 gen(std::random_device{}());
    path_ = std::filesystem::temp_directory_path() /
            ("firemed-" + tag + "-" + std::to_string(gen() % 1000000000));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

// Hand-built world with explicit trees and agents; spread links rebuilt.
inline sim::WorldState make_world(sim::WorldConfig c, std::vector<sim::Tree> trees,
                                  std::vector<sim::AgentState> agents) {
  sim::WorldState w;
  c.n_agents = static_cast<int>(agents.size());
  c.tree_count = static_cast<int>(trees.size());
  w.config = c;
  w.rng = Rng(c.seed);
  w.trees = std::move(trees);
  for (std::size_t i = 0; i < agents.size(); ++i) agents[i].id = static_cast<int>(i);
  w.agents = std::move(agents);
  sim::rebuild_spread_links(w);
  return w;
}

inline sim::AgentState agent_at(Vec2 p, Vec2 dir = {1.0, 0.0}, bool water = false) {
  sim::AgentState a;
  a.position = p;
  a.direction = dir;
  a.holding_water = water;
  return a;
}

inline sim::Tree tree_at(Vec2 p, sim::TreeState s = sim::TreeState::Alive) {
  return {p, s, 0};
}

// Binomial tolerance in standard deviations.
inline bool within_sigma(double hits, double n, double p, double k) {
  const double sd = std::sqrt(n * p * (1.0 - p));
  return std::abs(hits - n * p) <= k * sd + 1e-12;
}

}  // namespace firemed::test
