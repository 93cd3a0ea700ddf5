#include "runtime/training.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <sstream>

#include <spdlog/spdlog.h>

#include "core/error.hpp"
#include "core/hash.hpp"
#include "ppo/gae.hpp"

namespace firemed::runtime {

namespace fs = std::filesystem;

nlohmann::json checkpoint_to_json(const Checkpoint& c) {
  return {{"version", kCheckpointVersion},
          {"config", c.config_yaml},
          {"params", c.params.theta},
          {"adam", {{"m", c.adam.m}, {"v", c.adam.v}, {"t", c.adam.t}}},
          {"policy_rng", c.policy_rng},
          {"update_rng", c.update_rng},
          {"env_steps", c.env_steps},
          {"updates", c.updates},
          {"next_episode", c.next_episode},
          {"total_tasks", c.total_tasks}};
}

Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  if (j.value("version", -1) != kCheckpointVersion)
    throw ReplayError("checkpoint has an unsupported version");
  Checkpoint c;
  try {
    c.config_yaml = j.at("config").get<std::string>();
    c.params.theta = j.at("params").get<std::vector<double>>();
    c.adam.m = j.at("adam").at("m").get<std::vector<double>>();
    c.adam.v = j.at("adam").at("v").get<std::vector<double>>();
    c.adam.t = j.at("adam").at("t").get<std::int64_t>();
    c.policy_rng = j.at("policy_rng").get<std::string>();
    c.update_rng = j.at("update_rng").get<std::string>();
    c.env_steps = j.at("env_steps").get<std::int64_t>();
    c.updates = j.at("updates").get<std::int64_t>();
    c.next_episode = j.at("next_episode").get<std::int64_t>();
    c.total_tasks = j.at("total_tasks").get<std::int64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ReplayError(std::string("malformed checkpoint: ") + e.what());
  }
  if (c.params.theta.size() != ppo::Layout::size)
    throw ReplayError("checkpoint parameter count does not match the network");
  if (!c.params.finite()) throw NumericsError("checkpoint holds non-finite parameters");
  return c;
}

void save_checkpoint(const Checkpoint& c, const fs::path& path) {
  fs::create_directories(path.parent_path());
  const auto tmp = fs::path(path).concat(".tmp");
  {
    std::ofstream out(tmp);
    out << checkpoint_to_json(c).dump() << '\n';
    if (!out) throw IoError("cannot write checkpoint " + tmp.string());
  }
  fs::rename(tmp, path);
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  try {
    return checkpoint_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ReplayError(std::string("checkpoint is not JSON: ") + e.what());
  }
}

std::optional<fs::path> latest_checkpoint(const fs::path& run_dir) {
  const auto dir = run_dir / "checkpoints";
  if (!fs::is_directory(dir)) return std::nullopt;
  std::optional<fs::path> best;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() != ".json") continue;
    // Names are zero-padded update counts, so lexical order is numeric order.
    if (!best || e.path().filename() > best->filename()) best = e.path();
  }
  return best;
}

fs::path make_run_dir(const fs::path& runs_root, const std::string& name) {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", &tm);
  fs::path dir = runs_root / name / stamp;
  for (int k = 1; fs::exists(dir); ++k) dir = runs_root / name / (std::string(stamp) + "-" + std::to_string(k));
  fs::create_directories(dir);
  return dir;
}

namespace {

fs::path checkpoint_path(const fs::path& run_dir, std::int64_t updates) {
  char name[32];
  std::snprintf(name, sizeof name, "%08lld.json", static_cast<long long>(updates));
  return run_dir / "checkpoints" / name;
}

}  // namespace

RunArtifacts run_training(const RunConfig& config, const TrainOptions& options) {
  config.validate();
  const auto hyper = config.train_hyper();
  hyper.validate();
  const int n_agents = config.world_config().n_agents;
  const std::int64_t steps_per_update = hyper.batch / n_agents;

  RunArtifacts art;
  std::optional<Checkpoint> resume_from;
  if (options.write_files) {
    if (options.resume) {
      if (!options.run_dir) throw ConfigError("resume needs a run directory");
      art.run_dir = *options.run_dir;
      if (const auto p = latest_checkpoint(art.run_dir)) resume_from = load_checkpoint(*p);
    } else {
      art.run_dir = options.run_dir ? *options.run_dir : make_run_dir(options.runs_root, config.name);
      fs::create_directories(art.run_dir);
    }
    std::ofstream(art.run_dir / "config.yaml") << emit_config(config);
  }

  ppo::PolicyParams params = ppo::PolicyParams::init(mix_seed(config.seed(), 1), hyper.initial_log_std);
  ppo::Adam adam;
  Rng policy_rng(mix_seed(config.seed(), 2));
  Rng update_rng(mix_seed(config.seed(), 3));
  std::int64_t first_episode = 0, prior_tasks = 0;
  if (resume_from) {
    params = resume_from->params;
    adam = resume_from->adam;
    policy_rng.restore(resume_from->policy_rng);
    update_rng.restore(resume_from->update_rng);
    art.env_steps = resume_from->env_steps;
    art.updates = resume_from->updates;
    first_episode = resume_from->next_episode;
    prior_tasks = resume_from->total_tasks;
    spdlog::info("resuming {} at update {}", art.run_dir.string(), art.updates);
  }

  std::optional<MetricsWriter> metrics;
  EventLog events;
  SessionServices services;
  services.human = options.human;
  fs::path audit_path;
  if (options.write_files) {
    metrics.emplace(art.run_dir);
    if (config.extensions.record_events.value_or(true)) events = EventLog(art.run_dir / "events.log");
    audit_path = art.run_dir / "llm_audit.jsonl";
  }
  services.events = events.enabled() ? &events : nullptr;
  services.gateway = make_gateway(config, audit_path);
  if (config.extensions.prompt_dir)
    services.templates = std::make_shared<controllers::TemplateStore>(*config.extensions.prompt_dir);

  Session session(config, services, first_episode, art.env_steps, prior_tasks);
  std::vector<std::vector<ppo::Transition>> buffers(static_cast<std::size_t>(n_agents));
  for (auto& b : buffers) b.reserve(static_cast<std::size_t>(steps_per_update));
  std::int64_t since_update = 0;
  std::int64_t finished_episodes = first_episode;
  Fnv1a metrics_digest;
  const auto checkpoint_every = config.extensions.checkpoint_every.value_or(5);
  auto episode_start = std::chrono::steady_clock::now();

  auto make_checkpoint = [&]() {
    Checkpoint c;
    c.config_yaml = emit_config(config);
    c.params = params;
    c.adam = adam;
    c.policy_rng = policy_rng.state();
    c.update_rng = update_rng.state();
    c.env_steps = art.env_steps;
    c.updates = art.updates;
    c.next_episode = finished_episodes;
    c.total_tasks = session.total_tasks();
    return c;
  };

  auto update = [&]() {
    ppo::TrainBatch batch;
    const auto obs = session.observations();
    std::vector<std::int64_t> census;
    for (std::size_t i = 0; i < buffers.size(); ++i) {
      auto& buf = buffers[i];
      census.push_back(static_cast<std::int64_t>(buf.size()));
      if (buf.empty()) continue;
      std::vector<double> r, v;
      auto d = std::make_unique<bool[]>(buf.size());
      for (std::size_t t = 0; t < buf.size(); ++t) {
        r.push_back(buf[t].reward);
        v.push_back(buf[t].value);
        d[t] = buf[t].done;
      }
      const double last_value =
          buf.back().done ? 0.0 : ppo::evaluate(params, obs[i], 0.0, sim::Drop::DoNothing).value;
      const auto g = ppo::gae(r, v, std::span<const bool>(d.get(), buf.size()), last_value, hyper.gamma, hyper.gae_lambda);
      for (std::size_t t = 0; t < buf.size(); ++t) batch.push(buf[t], g.advantages[t], g.returns[t]);
      buf.clear();
    }
    art.buffer_census.push_back(std::move(census));
    art.last_update = ppo::ppo_update(params, adam, batch, hyper, update_rng);
    ++art.updates;
    if (!params.finite()) throw NumericsError("non-finite parameters after update");
    if (options.write_files && checkpoint_every > 0 && art.updates % checkpoint_every == 0)
      save_checkpoint(make_checkpoint(), checkpoint_path(art.run_dir, art.updates));
  };

  try {
    while (art.env_steps < hyper.total_steps) {
      if (options.stop && options.stop->load()) break;
      auto out = session.step(params, policy_rng);
      ++art.env_steps;
      for (std::size_t i = 0; i < buffers.size(); ++i) buffers[i].push_back(std::move(out.transitions[i]));
      if (out.finished) {
        const auto now = std::chrono::steady_clock::now();
        const double wall = std::chrono::duration<double>(now - episode_start).count();
        episode_start = now;
        ++finished_episodes;
        if (metrics) metrics->write(*out.finished, wall);
        metrics_digest.text(to_json(*out.finished).dump());
        metrics_digest.text("\n");
        art.episodes.push_back(*out.finished);
      }
      if (options.on_step) options.on_step(session, out);
      if (++since_update == steps_per_update) {
        since_update = 0;
        update();
      }
    }
  } catch (const Error& e) {
    spdlog::critical("training run failed after {} env steps: {}", art.env_steps, e.what());
    events.flush();
    throw;
  }
  events.flush();
  if (options.write_files && art.updates > 0)
    save_checkpoint(make_checkpoint(), checkpoint_path(art.run_dir, art.updates));

  art.params = params;
  art.metrics_hash = metrics_digest.hex();
  art.audit = session.audit();
  if (services.gateway) art.gateway_calls = services.gateway->stats().requests;
  return art;
}

std::vector<EpisodeRecord> run_evaluation(const RunConfig& config, const ppo::PolicyParams& params,
                                          const EvalOptions& options) {
  config.validate();
  // Evaluation episodes draw worlds from a stream apart from training's.
  RunConfig eval_config = config;
  eval_config.extensions.seed = mix_seed(config.seed(), options.seed_offset);
  SessionServices services;
  services.human = options.human;
  services.gateway = make_gateway(config, options.audit_path);
  if (config.extensions.prompt_dir)
    services.templates = std::make_shared<controllers::TemplateStore>(*config.extensions.prompt_dir);
  Session session(eval_config, services);
  Rng rng(mix_seed(config.seed(), 4));
  std::vector<EpisodeRecord> out;
  while (static_cast<int>(out.size()) < options.episodes) {
    if (options.stop && options.stop->load()) break;
    auto step = session.step(params, rng);
    if (options.on_step) options.on_step(session, step);
    if (step.finished) out.push_back(*step.finished);
  }
  return out;
}

}  // namespace firemed::runtime
