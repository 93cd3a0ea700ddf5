#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "mediation/mediation.hpp"
#include "reward/reward.hpp"
#include "sim/world.hpp"

namespace firemed::runtime {

inline constexpr int kMetricsSchema = 1;
inline constexpr int kEventsSchema = 1;

// One line of metrics.jsonl. Counts are team totals over the episode;
// episode_reward sums every agent's return and episode_return is the mean per
// agent. time_step_count and total_task_count are cumulative over the run.
struct EpisodeRecord {
  std::string config_name;
  std::uint64_t seed = 0;
  std::int64_t episode_count = 0;
  std::int64_t crash_count = 0;
  std::int64_t extinguishing_trees = 0;
  double extinguishing_trees_reward = 0.0;
  std::int64_t fire_out_count = 0;
  std::int64_t fire_too_close_to_village = 0;
  std::int64_t preparing_trees = 0;
  double preparing_trees_reward = 0.0;
  std::int64_t time_step_count = 0;
  std::int64_t water_drop_count = 0;
  std::int64_t water_pickup_count = 0;
  double episode_return = 0.0;
  double episode_reward = 0.0;
  std::int64_t task_count = 0;
  std::int64_t total_task_count = 0;
  std::int64_t episode_length = 0;

  bool operator==(const EpisodeRecord&) const = default;
};

nlohmann::json to_json(const EpisodeRecord& r);
EpisodeRecord record_from_json(const nlohmann::json& j);  // ReplayError on schema mismatch

// Accumulates one episode.
class EpisodeTally {
 public:
  explicit EpisodeTally(std::size_t n_agents = 0) : returns_(n_agents, 0.0) {}

  void add_step(const sim::StepEvents& events, std::span<const reward::RewardBreakdown> rewards);
  void add_tasks(std::int64_t n) { tasks_ += n; }

  // Closes the episode. `prior_steps` and `prior_tasks` are run totals before it.
  EpisodeRecord finish(const std::string& config_name, std::uint64_t seed,
                       std::int64_t episode_count, std::int64_t prior_steps,
                       std::int64_t prior_tasks) const;

  std::int64_t steps() const { return steps_; }
  std::int64_t tasks() const { return tasks_; }

 private:
  std::vector<double> returns_;
  EpisodeRecord r_;
  std::int64_t steps_ = 0;
  std::int64_t tasks_ = 0;
};

// metrics.jsonl plus a timing.jsonl sidecar holding wall-clock values, so the
// metrics stream itself is reproducible byte for byte.
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::filesystem::path& run_dir);
  void write(const EpisodeRecord& r, double wall_seconds);

 private:
  std::ofstream metrics_;
  std::ofstream timing_;
};

std::vector<EpisodeRecord> read_metrics(const std::filesystem::path& metrics_path);

// events.log: JSON lines of
//   {"type":"episode","episode":k,"snapshot":{...}}
//   {"type":"step","episode":k,"step":t,"actions":[[id,steer,drop],...],"overridden":[...],"hash":"..."}
//   {"type":"tasks","episode":k,"step":t,"source":"auto","tasks":[{"agent":0,"x":..,"y":..}]}
//   {"type":"end","episode":k,"step":t}
class EventLog {
 public:
  EventLog() = default;
  explicit EventLog(const std::filesystem::path& path);

  bool enabled() const { return out_.is_open(); }
  void episode(std::int64_t episode, const sim::WorldState& world);
  void step(std::int64_t episode, const sim::WorldState& after,
            std::span<const sim::AgentAction> actions, const std::vector<bool>& overridden);
  void tasks(std::int64_t episode, std::int64_t step, const std::string& source,
             std::span<const mediation::Task> issued);
  void end(std::int64_t episode, std::int64_t step);
  void flush();

 private:
  std::ofstream out_;
};

}  // namespace firemed::runtime
