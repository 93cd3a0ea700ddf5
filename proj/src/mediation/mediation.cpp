#include "mediation/mediation.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <spdlog/spdlog.h>

#include "core/error.hpp"

namespace firemed::mediation {

const char* to_string(Decision d) {
  switch (d) {
    case Decision::RequestIntervention: return "request_intervention";
    case Decision::Override: return "override";
    case Decision::Policy: return "policy";
  }
  return "?";
}

MediationState::MediationState(int n_agents, MediationConfig config) : config_(config) {
  if (n_agents < 1) throw InputError("mediation needs at least one agent");
  if (config_.cooldown < 1) throw ConfigError("cooldown must be >= 1");
  if (!(config_.arrival_radius >= 0.0)) throw ConfigError("arrival_radius must be >= 0");
  agents_.resize(static_cast<std::size_t>(n_agents));
  for (auto& a : agents_) a.timer = config_.cooldown;
}

const AgentSchedule& MediationState::agent(int id) const {
  if (id < 0 || id >= agent_count()) throw InputError("unknown agent " + std::to_string(id));
  return agents_[static_cast<std::size_t>(id)];
}

AgentSchedule& MediationState::mut(int id) {
  return const_cast<AgentSchedule&>(std::as_const(*this).agent(id));
}

const Task* MediationState::active_task(int id) const {
  const auto& a = agent(id);
  return a.task ? &*a.task : nullptr;
}

bool MediationState::request_outstanding() const {
  return std::any_of(agents_.begin(), agents_.end(),
                     [](const AgentSchedule& a) { return a.awaiting_reply; });
}

Decision MediationState::schedule(int agent_id, std::int64_t step) const {
  const auto& a = agent(agent_id);
  if (a.task && !a.task->completed && step < a.task->deadline) return Decision::Override;
  if (a.armed && !a.awaiting_reply) return Decision::RequestIntervention;
  return Decision::Policy;
}

std::vector<int> MediationState::requesting_agents(std::int64_t step) const {
  std::vector<int> out;
  for (int i = 0; i < agent_count(); ++i) {
    if (schedule(i, step) == Decision::RequestIntervention) out.push_back(i);
  }
  return out;
}

void MediationState::begin_request(std::span<const int> ids, std::int64_t step) {
  for (int id : ids) {
    auto& a = mut(id);
    a.armed = false;
    a.awaiting_reply = true;
    a.last_request_step = step;
    a.timer = config_.cooldown;
  }
}

void MediationState::abandon_request() {
  for (auto& a : agents_) a.awaiting_reply = false;
}

AssignReport MediationState::assign(std::span<const TaskDirective> directives, std::int64_t step) {
  AssignReport report;
  if (directives.empty()) return report;
  for (const auto& d : directives) {
    if (d.agent_id < 0 || d.agent_id >= agent_count())
      throw RejectedTask("task for unknown agent " + std::to_string(d.agent_id));
    if (!finite(d.target)) throw InputError("task target must be finite");
  }
  std::vector<bool> seen(agents_.size(), false);
  for (const auto& d : directives) {
    const auto idx = static_cast<std::size_t>(d.agent_id);
    if (seen[idx]) {
      report.duplicates.push_back(d.agent_id);
      spdlog::warn("duplicate task for agent {}; keeping the first", d.agent_id);
      continue;
    }
    seen[idx] = true;
    auto& a = agents_[idx];
    if (a.task || (!a.armed && !a.awaiting_reply)) {
      report.deferred.push_back(d.agent_id);
      continue;
    }
    if (!a.awaiting_reply) a.last_request_step = step;
    Task t{d.agent_id, d.target, step, step + config_.cooldown, false};
    a.task = t;
    a.timer = config_.cooldown;
    a.armed = false;
    report.issued.push_back(t);
    ++intervention_count_;
  }
  for (auto& a : agents_) a.awaiting_reply = false;
  return report;
}

std::vector<TaskOutcome> MediationState::tick(std::int64_t step, std::span<const int> arrived) {
  if (last_tick_ && step <= *last_tick_)
    throw StateError("mediation tick repeated for step " + std::to_string(step));
  last_tick_ = step;
  std::vector<TaskOutcome> outcomes;
  for (int id = 0; id < agent_count(); ++id) {
    auto& a = agents_[static_cast<std::size_t>(id)];
    if (a.task) {
      --a.timer;
      const bool reached = std::find(arrived.begin(), arrived.end(), id) != arrived.end();
      if (reached) {
        a.task->completed = true;
        outcomes.push_back({*a.task, TaskEnd::Completed, step});
        a.task.reset();
        a.timer = config_.cooldown;
        a.armed = a.last_request_step && step + 1 >= *a.last_request_step + config_.cooldown;
      } else if (a.timer <= 0) {
        outcomes.push_back({*a.task, TaskEnd::Expired, step});
        a.task.reset();
        a.timer = config_.cooldown;
        a.armed = true;
      }
    } else if (!a.armed && !a.awaiting_reply && a.last_request_step &&
               step + 1 >= *a.last_request_step + config_.cooldown) {
      a.armed = true;
    }
  }
  return outcomes;
}

OverrideCommand override_action(const sim::WorldState& world, const sim::AgentState& agent,
                                const Task& task, const MediationConfig& config) {
  const auto& wc = world.config;
  OverrideCommand cmd;
  const Vec2 to_target = task.target - agent.position;
  const double dist = norm(to_target);

  if (dist <= config.arrival_radius) {
    cmd.arrived = true;
    if (agent.holding_water) {
      const double r2 = wc.drop_radius * wc.drop_radius;
      const bool fire_in_range =
          std::any_of(world.trees.begin(), world.trees.end(), [&](const sim::Tree& t) {
            return t.state == sim::TreeState::Burning &&
                   distance_sq(t.position, agent.position) <= r2;
          });
      if (fire_in_range) cmd.action.drop = sim::Drop::DropWater;
    }
    return cmd;
  }

  // Counter-clockwise angle from heading to target; positive means "to the left".
  const double left_error = std::atan2(cross(agent.direction, to_target), dot(agent.direction, to_target));
  // A full turn visits points on a fixed circle: each step rotates the
  // heading by the turn rate, then moves one chord. A target well inside that
  // circle cannot be reached by turning; fly straight until it falls out.
  // Targets near the edge are kept so the turn passes within arrival range.
  const double side = left_error > 0.0 ? 1.0 : -1.0;
  const double half = 0.5 * wc.agent_speed;
  const double radius = half / std::sin(0.5 * wc.max_turn_rate);
  const Vec2 chord = rotated(agent.direction, side * wc.max_turn_rate);
  const Vec2 chord_left{-chord.y, chord.x};
  const Vec2 centre = agent.position + chord * half +
                      chord_left * (side * std::sqrt(radius * radius - half * half));
  const double unreachable = std::max(radius - 0.5 * config.arrival_radius, 0.0);
  if (std::abs(left_error) > 1e-12 && distance(centre, task.target) < unreachable) {
    cmd.action.steer = 0.0;
  } else {
    cmd.action.steer = std::clamp(-left_error / wc.max_turn_rate, -1.0, 1.0);
  }
  return cmd;
}

}  // namespace firemed::mediation
