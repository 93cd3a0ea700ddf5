#include "runtime/rollout.hpp"

#include <spdlog/spdlog.h>

#include "controllers/digest.hpp"
#include "controllers/tasks.hpp"
#include "core/error.hpp"
#include "ppo/policy.hpp"
#include "sim/observation.hpp"

namespace firemed::runtime {

bool HumanQueue::push(std::string text) {
  std::lock_guard lock(mu_);
  if (q_.size() >= capacity_) return false;
  q_.push_back(std::move(text));
  return true;
}

std::optional<std::string> HumanQueue::pop() {
  std::lock_guard lock(mu_);
  if (q_.empty()) return std::nullopt;
  auto t = std::move(q_.front());
  q_.pop_front();
  return t;
}

std::size_t HumanQueue::size() const {
  std::lock_guard lock(mu_);
  return q_.size();
}

InterventionDriver::InterventionDriver(DriverConfig config, std::shared_ptr<llm::Gateway> gateway,
                                       std::shared_ptr<controllers::TemplateStore> templates,
                                       std::shared_ptr<HumanQueue> human)
    : config_(std::move(config)),
      gateway_(std::move(gateway)),
      templates_(std::move(templates)),
      human_(std::move(human)) {
  if (config_.type != InterventionType::None && !gateway_)
    throw ConfigError("interventions need an LLM gateway");
  if (!templates_) templates_ = std::make_shared<controllers::TemplateStore>();
}

InterventionDriver::~InterventionDriver() { reset(); }

void InterventionDriver::reset() {
  if (pending_ && pending_->valid()) pending_->wait();
  pending_.reset();
}

std::string InterventionDriver::ask(const controllers::PromptBundle& bundle, llm::Purpose purpose,
                                    double temperature,
                                    const std::shared_ptr<const sim::WorldState>& world) const {
  llm::CompletionRequest req;
  req.model = config_.model;
  req.messages = llm::to_messages(bundle);
  req.max_tokens = purpose == llm::Purpose::Strategy ? 400 : 256;
  req.temperature = temperature;
  req.timeout = config_.timeout;
  req.retries = config_.retries;
  req.purpose = purpose;
  req.context = world;
  return gateway_->complete(req);
}

InterventionDriver::Reply InterventionDriver::run(std::shared_ptr<const sim::WorldState> world,
                                                  std::optional<std::string> human_text) const {
  Reply r;
  try {
    const auto d = controllers::digest(*world);
    controllers::PromptBundle bundle;
    if (human_text) {
      r.source = "human";
      bundle = controllers::nl_build_translate(*human_text, d, *templates_, config_.prompt);
    } else if (config_.type == InterventionType::Auto) {
      r.source = "auto";
      bundle = controllers::rb_build(d, *templates_, config_.prompt);
    } else {
      r.source = "llm";
      const auto strategy_prompt = controllers::nl_build_strategy(d, *templates_, config_.prompt);
      const auto strategy =
          ask(strategy_prompt, llm::Purpose::Strategy, llm::kStrategyTemperature, world);
      bundle = controllers::nl_build_translate(strategy, d, *templates_, config_.prompt);
    }
    // One retry on an unparseable reply, then give up on this cycle.
    for (int attempt = 0;; ++attempt) {
      const auto text = ask(bundle, llm::Purpose::Mediator, llm::kMediatorTemperature, world);
      try {
        r.directives = controllers::parse_tasks(text, *world);
        return r;
      } catch (const ParseError&) {
        if (attempt >= 1) throw;
        spdlog::info("mediator reply did not parse; asking again");
      }
    }
  } catch (const Error& e) {
    r.directives.clear();
    r.error = e.what();
  }
  return r;
}

DriverResult InterventionDriver::apply(Reply reply, const sim::WorldState& world,
                                       mediation::MediationState& med) {
  DriverResult out;
  out.source = reply.source;
  if (!reply.error.empty()) {
    ++stats_.failed;
    spdlog::warn("intervention skipped at step {}: {}", world.step, reply.error);
    med.abandon_request();
    return out;
  }
  if (reply.directives.empty()) {
    med.abandon_request();
    return out;
  }
  try {
    out.issued = med.assign(reply.directives, world.step).issued;
  } catch (const RejectedTask& e) {
    ++stats_.failed;
    spdlog::warn("mediator reply rejected: {}", e.what());
    med.abandon_request();
  }
  return out;
}

DriverResult InterventionDriver::before_step(const sim::WorldState& world,
                                             mediation::MediationState& med) {
  DriverResult out;
  if (config_.type == InterventionType::None) return out;

  if (pending_) {
    const bool ready = config_.blocking ||
                       pending_->wait_for(config_.wait) == std::future_status::ready;
    if (!ready) return out;
    auto reply = pending_->get();
    pending_.reset();
    out = apply(std::move(reply), world, med);
  }

  const auto requesting = med.requesting_agents(world.step);
  if (requesting.empty()) return out;
  std::optional<std::string> human = human_ ? human_->pop() : std::nullopt;
  if (!human && !world.any_burning()) return out;

  auto copy = std::make_shared<sim::WorldState>(world);
  copy->spread_links.clear();
  std::shared_ptr<const sim::WorldState> snap = std::move(copy);
  med.begin_request(requesting, world.step);
  out.requested = requesting;
  ++stats_.requests;
  if (human) ++stats_.human;

  if (config_.blocking) {
    auto applied = apply(run(snap, std::move(human)), world, med);
    out.issued.insert(out.issued.end(), applied.issued.begin(), applied.issued.end());
    out.source = applied.source;
  } else {
    pending_ = std::async(std::launch::async,
                          [this, snap, human]() { return run(snap, human); });
  }
  return out;
}

std::shared_ptr<llm::Gateway> make_gateway(const RunConfig& config,
                                           const std::filesystem::path& audit_path) {
  if (config.intervention_type == InterventionType::None) return nullptr;
  std::unique_ptr<llm::Backend> backend;
  if (config.backend() == BackendKind::Mock) {
    const auto p = config.extensions.mock_policy.value_or("nearest_fire");
    backend = std::make_unique<llm::MockBackend>(p == "silent"    ? llm::MockPolicy::Silent
                                                 : p == "garbage" ? llm::MockPolicy::Garbage
                                                                  : llm::MockPolicy::NearestFire);
  } else {
    backend = std::make_unique<llm::HttpBackend>(llm::HttpConfig::from_env());
  }
  return std::make_shared<llm::Gateway>(std::move(backend), audit_path);
}

DriverConfig driver_config(const RunConfig& config) {
  DriverConfig d;
  d.type = config.intervention_type;
  d.model = config.model.value_or("mock");
  d.prompt.few_shot = config.few_shot();
  d.blocking = config.backend() == BackendKind::Mock;
  const auto& x = config.extensions;
  if (x.reply_wait_ms) d.wait = std::chrono::milliseconds(*x.reply_wait_ms);
  if (x.llm_timeout_ms) d.timeout = std::chrono::milliseconds(*x.llm_timeout_ms);
  if (x.llm_retries) d.retries = static_cast<int>(*x.llm_retries);
  return d;
}

Session::Session(RunConfig config, SessionServices services, std::int64_t first_episode,
                 std::int64_t prior_steps, std::int64_t prior_tasks)
    : config_(std::move(config)),
      world_config_(config_.world_config()),
      shaping_(config_.shaping()),
      services_(std::move(services)),
      driver_(driver_config(config_), services_.gateway, services_.templates, services_.human),
      med_(world_config_.n_agents, config_.mediation_config()),
      episode_(first_episode),
      total_steps_(prior_steps),
      total_tasks_(prior_tasks) {}

std::uint64_t Session::episode_seed(std::int64_t episode) const {
  return mix_seed(config_.seed(), static_cast<std::uint64_t>(episode));
}

void Session::begin_episode() {
  driver_.reset();
  world_config_.seed = episode_seed(episode_);
  world_ = sim::init_world(world_config_);
  med_ = mediation::MediationState(world_config_.n_agents, config_.mediation_config());
  tally_ = EpisodeTally(static_cast<std::size_t>(world_config_.n_agents));
  override_steps_.assign(static_cast<std::size_t>(world_config_.n_agents), 0);
  if (services_.events) services_.events->episode(episode_, world_);
  started_ = true;
}

std::vector<sim::FeatureObservation> Session::observations() const {
  std::vector<sim::FeatureObservation> out;
  out.reserve(world_.agents.size());
  for (const auto& a : world_.agents) out.push_back(sim::encode_observation(world_, a.id));
  return out;
}

StepOutcome Session::step(const ppo::PolicyParams& params, Rng& policy_rng) {
  if (!started_ || world_.terminal) begin_episode();
  StepOutcome out;
  const std::int64_t now = world_.step;

  out.interventions = driver_.before_step(world_, med_);
  for (int id : out.interventions.requested) audit_.requests.push_back({id, episode_, now});
  for (const auto& t : out.interventions.issued) {
    audit_.issued.push_back({t.agent_id, episode_, t.issued_step});
    override_steps_[static_cast<std::size_t>(t.agent_id)] = 0;
  }
  if (!out.interventions.issued.empty()) {
    tally_.add_tasks(static_cast<std::int64_t>(out.interventions.issued.size()));
    if (services_.events)
      services_.events->tasks(episode_, now, out.interventions.source, out.interventions.issued);
  }

  const auto obs = observations();
  const auto sampled = ppo::act(params, obs, policy_rng);
  const auto n = world_.agents.size();
  std::vector<sim::AgentAction> actions;
  std::vector<int> arrived;
  out.overridden.assign(n, false);
  out.transitions.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& agent = world_.agents[i];
    if (agent.crashed) continue;
    auto& tr = out.transitions[i];
    tr.observation = obs[i];
    tr.value = sampled[i].value;
    const int id = agent.id;
    if (med_.schedule(id, now) == mediation::Decision::Override) {
      const auto* task = med_.active_task(id);
      if (now < task->issued_step || now >= task->deadline) ++audit_.window_violations;
      ++override_steps_[i];
      const auto cmd = mediation::override_action(world_, agent, *task, med_.config());
      if (cmd.arrived) arrived.push_back(id);
      tr.action = cmd.action;
      tr.raw_steer = ppo::steer_to_raw(cmd.action.steer);
      tr.behavior_logprob = ppo::evaluate(params, obs[i], tr.raw_steer, cmd.action.drop).logprob;
      tr.overridden = true;
      out.overridden[i] = true;
    } else {
      tr.action = sampled[i].action;
      tr.raw_steer = sampled[i].raw_steer;
      tr.behavior_logprob = sampled[i].logprob;
    }
    actions.push_back({id, tr.action});
  }

  out.events = sim::step(world_, actions);
  out.rewards = reward::compute_rewards(out.events, shaping_);
  for (const auto& o : med_.tick(now, arrived))
    audit_.override_durations.push_back(override_steps_[static_cast<std::size_t>(o.task.agent_id)]);
  if (services_.events) services_.events->step(episode_, world_, actions, out.overridden);
  tally_.add_step(out.events, out.rewards);
  ++total_steps_;

  out.terminal = world_.terminal;
  for (std::size_t i = 0; i < n; ++i) {
    out.transitions[i].reward = out.rewards[i].total;
    out.transitions[i].done = out.terminal;
  }
  if (out.terminal) {
    const auto prior_steps = total_steps_ - tally_.steps();
    out.finished = tally_.finish(config_.name, config_.seed(), episode_ + 1, prior_steps, total_tasks_);
    total_tasks_ += tally_.tasks();
    if (services_.events) services_.events->end(episode_, world_.step);
    ++episode_;
  }
  return out;
}

}  // namespace firemed::runtime
