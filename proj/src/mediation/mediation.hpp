#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "core/geometry.hpp"
#include "sim/world.hpp"

namespace firemed::mediation {

enum class Decision { RequestIntervention, Override, Policy };

const char* to_string(Decision d);

// What a controller reply asks for: send `agent_id` to `target`.
struct TaskDirective {
  int agent_id = 0;
  Vec2 target;
  bool operator==(const TaskDirective&) const = default;
};

struct Task {
  int agent_id = 0;
  Vec2 target;
  std::int64_t issued_step = 0;
  std::int64_t deadline = 0;  // issued_step + cooldown
  bool completed = false;
};

struct MediationConfig {
  int cooldown = 200;
  double arrival_radius = 30.0;
};

struct AgentSchedule {
  int timer = 0;  // counts down from cooldown while a task executes
  std::optional<Task> task;
  std::optional<std::int64_t> last_request_step;
  bool armed = true;           // eligible to request at the next scheduling point
  bool awaiting_reply = false; // requested, reply not yet applied
};

struct AssignReport {
  std::vector<Task> issued;
  std::vector<int> duplicates;  // agents named more than once (first kept)
  std::vector<int> deferred;    // agents not eligible for a task right now
};

enum class TaskEnd { Completed, Expired };

struct TaskOutcome {
  Task task;
  TaskEnd end;
  std::int64_t step;  // env step at which the task ended
};

// Per-agent cooldown scheduling and task bookkeeping for one episode.
//
// Timers start at the cooldown value f and every agent is armed, so the first
// scheduling point requests an intervention. Requests disarm an agent; it is
// re-armed once f steps have passed since its last request, either because
// its task ran out (timer underflow at the deadline) or, for agents idle under
// the policy, at that same cycle boundary. This keeps consecutive requests for
// an agent at least f steps apart.
class MediationState {
 public:
  MediationState(int n_agents, MediationConfig config = {});

  Decision schedule(int agent_id, std::int64_t step) const;
  std::vector<int> requesting_agents(std::int64_t step) const;

  // Marks the agents' requests as sent at `step`.
  void begin_request(std::span<const int> agents, std::int64_t step);
  // Drops an outstanding request that produced no usable reply.
  void abandon_request();

  // Applies a reply. Unknown agents raise RejectedTask before any change is
  // made; duplicates keep the first directive. Agents that are neither armed
  // nor awaiting a reply are reported as deferred and left untouched.
  AssignReport assign(std::span<const TaskDirective> directives, std::int64_t step);

  // Once per env step, after the step executed. `arrived` lists agents whose
  // override reached the target during that step.
  std::vector<TaskOutcome> tick(std::int64_t step, std::span<const int> arrived);

  const MediationConfig& config() const { return config_; }
  const AgentSchedule& agent(int id) const;
  int agent_count() const { return static_cast<int>(agents_.size()); }
  const Task* active_task(int id) const;
  std::int64_t intervention_count() const { return intervention_count_; }
  bool request_outstanding() const;

 private:
  AgentSchedule& mut(int id);

  MediationConfig config_;
  std::vector<AgentSchedule> agents_;
  std::int64_t intervention_count_ = 0;
  std::optional<std::int64_t> last_tick_;
};

struct OverrideCommand {
  sim::Action action;
  bool arrived = false;
};

// Proportional heading controller toward the task target. Left of the
// heading gives negative steer. Water is held until arrival, where it is
// dropped if a burning tree is within drop range.
OverrideCommand override_action(const sim::WorldState& world, const sim::AgentState& agent,
                                const Task& task, const MediationConfig& config);

}  // namespace firemed::mediation
