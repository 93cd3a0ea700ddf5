#pragma once

#include <chrono>
#include <cstdint>
#include <deque>
#include <future>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "controllers/prompts.hpp"
#include "llm/gateway.hpp"
#include "mediation/mediation.hpp"
#include "ppo/ppo.hpp"
#include "reward/reward.hpp"
#include "runtime/config.hpp"
#include "runtime/telemetry.hpp"
#include "sim/world.hpp"

namespace firemed::runtime {

// Bounded queue of human strategy texts, drained at scheduling points.
class HumanQueue {
 public:
  explicit HumanQueue(std::size_t capacity = 4) : capacity_(capacity) {}
  bool push(std::string text);  // false when full
  std::optional<std::string> pop();
  std::size_t size() const;
  std::size_t capacity() const { return capacity_; }

 private:
  std::size_t capacity_;
  mutable std::mutex mu_;
  std::deque<std::string> q_;
};

struct DriverConfig {
  InterventionType type = InterventionType::None;
  std::string model;
  controllers::PromptOptions prompt;
  // Mock runs resolve each request inside the step that issued it, which keeps
  // them reproducible. Otherwise the loop waits at most `wait` per step.
  bool blocking = true;
  std::chrono::milliseconds wait{0};
  std::chrono::milliseconds timeout{20000};
  int retries = 2;
};

struct DriverResult {
  std::vector<mediation::Task> issued;
  std::vector<int> requested;  // agents whose request went out this step
  std::string source;          // "auto", "llm" or "human"
};

struct DriverStats {
  std::int64_t requests = 0;
  std::int64_t failed = 0;
  std::int64_t human = 0;
};

// Runs the controller side of the intervention cycle: when the schedule asks
// for an intervention it builds the prompt, calls the gateway and turns the
// reply into tasks. The reply's source world is a copy, so the env loop never
// waits on shared state.
class InterventionDriver {
 public:
  InterventionDriver(DriverConfig config, std::shared_ptr<llm::Gateway> gateway,
                     std::shared_ptr<controllers::TemplateStore> templates,
                     std::shared_ptr<HumanQueue> human);
  ~InterventionDriver();

  DriverResult before_step(const sim::WorldState& world, mediation::MediationState& med);
  void reset();
  const DriverStats& stats() const { return stats_; }

 private:
  struct Reply {
    std::vector<mediation::TaskDirective> directives;
    std::string source;
    std::string error;
  };

  Reply run(std::shared_ptr<const sim::WorldState> world,
            std::optional<std::string> human_text) const;
  std::string ask(const controllers::PromptBundle& bundle, llm::Purpose purpose,
                  double temperature, const std::shared_ptr<const sim::WorldState>& world) const;
  DriverResult apply(Reply reply, const sim::WorldState& world, mediation::MediationState& med);

  DriverConfig config_;
  std::shared_ptr<llm::Gateway> gateway_;
  std::shared_ptr<controllers::TemplateStore> templates_;
  std::shared_ptr<HumanQueue> human_;
  std::optional<std::future<Reply>> pending_;
  DriverStats stats_;
};

// Builds the gateway named by the config (mock or http from the environment).
std::shared_ptr<llm::Gateway> make_gateway(const RunConfig& config,
                                           const std::filesystem::path& audit_path = {});
DriverConfig driver_config(const RunConfig& config);

struct SessionServices {
  std::shared_ptr<llm::Gateway> gateway;
  std::shared_ptr<controllers::TemplateStore> templates;
  std::shared_ptr<HumanQueue> human;
  EventLog* events = nullptr;
};

// Records checked by the scheduling acceptance test.
struct ScheduleAudit {
  struct Request {
    int agent;
    std::int64_t episode;
    std::int64_t step;
  };
  std::vector<Request> requests;
  std::vector<Request> issued;
  std::vector<std::int64_t> override_durations;  // overridden steps per finished task
  std::int64_t window_violations = 0;            // overridden steps outside [issued, deadline)
};

struct StepOutcome {
  std::vector<ppo::Transition> transitions;  // indexed by agent id
  sim::StepEvents events;
  std::vector<reward::RewardBreakdown> rewards;
  std::vector<bool> overridden;
  DriverResult interventions;
  bool terminal = false;
  std::optional<EpisodeRecord> finished;
};

// One environment with its mediator. Episodes roll over automatically: the
// step after a terminal one starts the next episode.
class Session {
 public:
  Session(RunConfig config, SessionServices services, std::int64_t first_episode = 0,
          std::int64_t prior_steps = 0, std::int64_t prior_tasks = 0);

  StepOutcome step(const ppo::PolicyParams& params, Rng& policy_rng);

  std::vector<sim::FeatureObservation> observations() const;
  const sim::WorldState& world() const { return world_; }
  const mediation::MediationState& mediation() const { return med_; }
  const RunConfig& config() const { return config_; }
  std::int64_t episode_index() const { return episode_; }
  std::int64_t total_steps() const { return total_steps_; }
  std::int64_t total_tasks() const { return total_tasks_; }
  std::int64_t current_task_count() const { return tally_.tasks(); }
  const ScheduleAudit& audit() const { return audit_; }
  const InterventionDriver& driver() const { return driver_; }
  std::uint64_t episode_seed(std::int64_t episode) const;

 private:
  void begin_episode();

  RunConfig config_;
  sim::WorldConfig world_config_;
  reward::RewardShaping shaping_;
  SessionServices services_;
  InterventionDriver driver_;
  sim::WorldState world_;
  mediation::MediationState med_;
  EpisodeTally tally_;
  std::vector<std::int64_t> override_steps_;
  std::int64_t episode_ = 0;
  std::int64_t total_steps_ = 0;
  std::int64_t total_tasks_ = 0;
  bool started_ = false;
  ScheduleAudit audit_;
};

}  // namespace firemed::runtime
