#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "reward/reward.hpp"
#include "sim/world.hpp"

namespace firemed::oracle {

// Re-derives per-agent rewards by diffing full world states around one step,
// without looking at the StepEvents the simulator produced.
std::vector<reward::RewardBreakdown> rewards_from_states(const sim::WorldState& before,
                                                         const sim::WorldState& after,
                                                         std::span<const sim::AgentAction> actions,
                                                         const reward::RewardShaping& shaping);

// Event counts recovered the same way.
sim::StepEvents events_from_states(const sim::WorldState& before, const sim::WorldState& after,
                                   std::span<const sim::AgentAction> actions);

struct Fixture {
  sim::WorldState before;
  std::vector<sim::AgentAction> actions;
};

// Small randomized world built so that drops, pickups, crashes, spread and
// state expiry all occur with useful frequency.
Fixture random_fixture(std::uint64_t seed);

struct BenchResult {
  int fixtures = 0;
  int mismatches = 0;
  double seconds = 0.0;
};

// Runs `n` fixtures under both the unshaped and the extinguish-focused reward
// values and compares the reward engine against the state-diff oracle.
BenchResult bench_rewards(int n, std::uint64_t seed);

}  // namespace firemed::oracle
