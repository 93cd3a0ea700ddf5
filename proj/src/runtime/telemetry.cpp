#include "runtime/telemetry.hpp"

#include <sstream>

#include "controllers/tasks.hpp"
#include "core/error.hpp"
#include "sim/snapshot.hpp"

namespace firemed::runtime {

nlohmann::json to_json(const EpisodeRecord& r) {
  return {{"schema", kMetricsSchema},
          {"config_name", r.config_name},
          {"seed", r.seed},
          {"episode_count", r.episode_count},
          {"crash_count", r.crash_count},
          {"extinguishing_trees", r.extinguishing_trees},
          {"extinguishing_trees_reward", r.extinguishing_trees_reward},
          {"fire_out_count", r.fire_out_count},
          {"fire_too_close_to_village", r.fire_too_close_to_village},
          {"preparing_trees", r.preparing_trees},
          {"preparing_trees_reward", r.preparing_trees_reward},
          {"time_step_count", r.time_step_count},
          {"water_drop_count", r.water_drop_count},
          {"water_pickup_count", r.water_pickup_count},
          {"episode_return", r.episode_return},
          {"episode_reward", r.episode_reward},
          {"task_count", r.task_count},
          {"total_task_count", r.total_task_count},
          {"episode_length", r.episode_length}};
}

EpisodeRecord record_from_json(const nlohmann::json& j) {
  if (j.value("schema", -1) != kMetricsSchema)
    throw ReplayError("metrics record has an unsupported schema");
  EpisodeRecord r;
  try {
    r.config_name = j.at("config_name").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.episode_count = j.at("episode_count").get<std::int64_t>();
    r.crash_count = j.at("crash_count").get<std::int64_t>();
    r.extinguishing_trees = j.at("extinguishing_trees").get<std::int64_t>();
    r.extinguishing_trees_reward = j.at("extinguishing_trees_reward").get<double>();
    r.fire_out_count = j.at("fire_out_count").get<std::int64_t>();
    r.fire_too_close_to_village = j.at("fire_too_close_to_village").get<std::int64_t>();
    r.preparing_trees = j.at("preparing_trees").get<std::int64_t>();
    r.preparing_trees_reward = j.at("preparing_trees_reward").get<double>();
    r.time_step_count = j.at("time_step_count").get<std::int64_t>();
    r.water_drop_count = j.at("water_drop_count").get<std::int64_t>();
    r.water_pickup_count = j.at("water_pickup_count").get<std::int64_t>();
    r.episode_return = j.at("episode_return").get<double>();
    r.episode_reward = j.at("episode_reward").get<double>();
    r.task_count = j.at("task_count").get<std::int64_t>();
    r.total_task_count = j.at("total_task_count").get<std::int64_t>();
    r.episode_length = j.at("episode_length").get<std::int64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ReplayError(std::string("malformed metrics record: ") + e.what());
  }
  return r;
}

void EpisodeTally::add_step(const sim::StepEvents& ev,
                            std::span<const reward::RewardBreakdown> rewards) {
  if (returns_.size() < rewards.size()) returns_.resize(rewards.size(), 0.0);
  for (std::size_t i = 0; i < ev.agents.size(); ++i) {
    const auto& e = ev.agents[i];
    r_.crash_count += e.crossed_border;
    r_.extinguishing_trees += e.extinguished_count;
    r_.preparing_trees += e.prepared_count;
    r_.water_drop_count += e.dropped_water;
    r_.water_pickup_count += e.picked_up_water;
  }
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    r_.extinguishing_trees_reward += rewards[i].extinguish;
    r_.preparing_trees_reward += rewards[i].prepare;
    returns_[i] += rewards[i].total;
  }
  r_.fire_out_count += ev.fire_out;
  r_.fire_too_close_to_village += ev.fire_near_village;
  ++steps_;
}

EpisodeRecord EpisodeTally::finish(const std::string& config_name, std::uint64_t seed,
                                   std::int64_t episode_count, std::int64_t prior_steps,
                                   std::int64_t prior_tasks) const {
  EpisodeRecord r = r_;
  r.config_name = config_name;
  r.seed = seed;
  r.episode_count = episode_count;
  r.episode_length = steps_;
  r.time_step_count = prior_steps + steps_;
  r.task_count = tasks_;
  r.total_task_count = prior_tasks + tasks_;
  double sum = 0.0;
  for (double v : returns_) sum += v;
  r.episode_reward = sum;
  r.episode_return = returns_.empty() ? 0.0 : sum / static_cast<double>(returns_.size());
  return r;
}

MetricsWriter::MetricsWriter(const std::filesystem::path& run_dir) {
  std::filesystem::create_directories(run_dir);
  metrics_.open(run_dir / "metrics.jsonl", std::ios::app);
  timing_.open(run_dir / "timing.jsonl", std::ios::app);
  if (!metrics_ || !timing_) throw IoError("cannot open metrics files in " + run_dir.string());
}

void MetricsWriter::write(const EpisodeRecord& r, double wall_seconds) {
  metrics_ << to_json(r).dump() << '\n';
  metrics_.flush();
  timing_ << nlohmann::json{{"episode_count", r.episode_count}, {"wall_clock_s", wall_seconds}}.dump()
          << '\n';
  timing_.flush();
  if (!metrics_ || !timing_) throw IoError("failed writing metrics");
}

std::vector<EpisodeRecord> read_metrics(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<EpisodeRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ReplayError(std::string("malformed metrics line: ") + e.what());
    }
  }
  return out;
}

EventLog::EventLog(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  out_.open(path, std::ios::app);
  if (!out_) throw IoError("cannot open event log " + path.string());
}

void EventLog::episode(std::int64_t episode, const sim::WorldState& world) {
  if (!enabled()) return;
  out_ << nlohmann::json{{"type", "episode"},
                         {"schema", kEventsSchema},
                         {"episode", episode},
                         {"snapshot", sim::snapshot_to_json(world)}}
              .dump()
       << '\n';
}

void EventLog::step(std::int64_t episode, const sim::WorldState& after,
                    std::span<const sim::AgentAction> actions, const std::vector<bool>& overridden) {
  if (!enabled()) return;
  nlohmann::json acts = nlohmann::json::array();
  for (const auto& a : actions)
    acts.push_back({a.agent_id, a.action.steer, a.action.drop == sim::Drop::DropWater ? 1 : 0});
  out_ << nlohmann::json{{"type", "step"},
                         {"episode", episode},
                         {"step", after.step},
                         {"actions", std::move(acts)},
                         {"overridden", overridden},
                         {"hash", sim::world_hash(after)}}
              .dump()
       << '\n';
}

void EventLog::tasks(std::int64_t episode, std::int64_t step, const std::string& source,
                     std::span<const mediation::Task> issued) {
  if (!enabled() || issued.empty()) return;
  std::vector<mediation::TaskDirective> d;
  for (const auto& t : issued) d.push_back({t.agent_id, t.target});
  out_ << nlohmann::json{{"type", "tasks"},
                         {"episode", episode},
                         {"step", step},
                         {"source", source},
                         {"tasks", controllers::tasks_to_json(d)}}
              .dump()
       << '\n';
}

void EventLog::end(std::int64_t episode, std::int64_t step) {
  if (!enabled()) return;
  out_ << nlohmann::json{{"type", "end"}, {"episode", episode}, {"step", step}}.dump() << '\n';
  out_.flush();
}

void EventLog::flush() {
  if (enabled()) out_.flush();
}

}  // namespace firemed::runtime
