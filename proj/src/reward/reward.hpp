#pragma once

#include <span>
#include <vector>

#include "sim/world.hpp"

namespace firemed::reward {

// Per-component reward values. Defaults are the unshaped values; the shaped
// preset rescales extinguishing up and the auxiliary terms down.
struct RewardShaping {
  double ext_fire_reward = 5.0;
  double prep_tree_reward = 1.0;
  double water_pickup_reward = 1.0;
  double fire_out_reward = 10.0;
  double crash_reward = -100.0;
  double fire_close_to_village_reward = -50.0;
  double time_step_burning = -0.01;

  static RewardShaping unshaped() { return {}; }
  static RewardShaping extinguish_focused();

  void validate() const;
  bool operator==(const RewardShaping&) const = default;
};

struct RewardBreakdown {
  // agent-specific
  double crossed_border = 0.0;
  double pickup = 0.0;
  double extinguish = 0.0;
  double prepare = 0.0;
  // broadcast to every agent
  double fire_out = 0.0;
  double too_close_to_village = 0.0;
  double time_step_burning = 0.0;

  double total = 0.0;

  // Sums the components in declaration order; compute_rewards and the oracle
  // both go through this so totals compare exactly.
  double component_sum() const;
  bool operator==(const RewardBreakdown&) const = default;
};

std::vector<RewardBreakdown> compute_rewards(const sim::StepEvents& events,
                                             const RewardShaping& shaping);

struct EpisodeReturn {
  std::vector<double> per_agent;
  double team_mean = 0.0;
};

// steps[t][i] is agent i's breakdown at step t.
EpisodeReturn episode_return(std::span<const std::vector<RewardBreakdown>> steps);

}  // namespace firemed::reward
