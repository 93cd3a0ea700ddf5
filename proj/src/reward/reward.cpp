#include "reward/reward.hpp"

#include <cmath>
#include <string>

#include "core/error.hpp"

namespace firemed::reward {

RewardShaping RewardShaping::extinguish_focused() {
  RewardShaping s;
  s.ext_fire_reward = 1000.0;
  s.prep_tree_reward = 0.1;
  s.water_pickup_reward = 0.1;
  s.fire_out_reward = 0.0;
  s.fire_close_to_village_reward = 0.0;
  return s;
}

void RewardShaping::validate() const {
  for (double v : {ext_fire_reward, prep_tree_reward, water_pickup_reward, fire_out_reward,
                   crash_reward, fire_close_to_village_reward, time_step_burning}) {
    if (!std::isfinite(v)) throw ConfigError("reward shaping values must be finite");
  }
}

double RewardBreakdown::component_sum() const {
  double s = 0.0;
  s += crossed_border;
  s += pickup;
  s += extinguish;
  s += prepare;
  s += fire_out;
  s += too_close_to_village;
  s += time_step_burning;
  return s;
}

std::vector<RewardBreakdown> compute_rewards(const sim::StepEvents& events,
                                             const RewardShaping& shaping) {
  std::vector<RewardBreakdown> out(events.agents.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto& e = events.agents[i];
    if (e.extinguished_count < 0 || e.prepared_count < 0)
      throw InputError("negative event count for agent " + std::to_string(i));
    auto& r = out[i];
    if (e.crossed_border) r.crossed_border = shaping.crash_reward;
    if (e.picked_up_water) r.pickup = shaping.water_pickup_reward;
    if (e.extinguished_count > 0) r.extinguish = shaping.ext_fire_reward * e.extinguished_count;
    if (e.prepared_count > 0) r.prepare = shaping.prep_tree_reward * e.prepared_count;
    if (events.fire_out) r.fire_out = shaping.fire_out_reward;
    if (events.fire_near_village) r.too_close_to_village = shaping.fire_close_to_village_reward;
    if (events.any_burning) r.time_step_burning = shaping.time_step_burning;
    r.total = r.component_sum();
  }
  return out;
}

EpisodeReturn episode_return(std::span<const std::vector<RewardBreakdown>> steps) {
  EpisodeReturn ret;
  for (const auto& step : steps) {
    if (ret.per_agent.size() < step.size()) ret.per_agent.resize(step.size(), 0.0);
    for (std::size_t i = 0; i < step.size(); ++i) ret.per_agent[i] += step[i].total;
  }
  if (!ret.per_agent.empty()) {
    double sum = 0.0;
    for (double v : ret.per_agent) sum += v;
    ret.team_mean = sum / static_cast<double>(ret.per_agent.size());
  }
  return ret;
}

}  // namespace firemed::reward
