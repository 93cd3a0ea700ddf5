#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ppo/ppo.hpp"
#include "runtime/config.hpp"
#include "runtime/rollout.hpp"
#include "runtime/telemetry.hpp"

namespace firemed::runtime {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  std::string config_yaml;
  ppo::PolicyParams params;
  ppo::Adam adam;
  std::string policy_rng;
  std::string update_rng;
  std::int64_t env_steps = 0;
  std::int64_t updates = 0;
  std::int64_t next_episode = 0;  // episodes finished before this checkpoint
  std::int64_t total_tasks = 0;
};

nlohmann::json checkpoint_to_json(const Checkpoint& c);
Checkpoint checkpoint_from_json(const nlohmann::json& j);  // ReplayError on version mismatch
void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);
// Newest checkpoint file under <run_dir>/checkpoints, if any.
std::optional<std::filesystem::path> latest_checkpoint(const std::filesystem::path& run_dir);

struct TrainOptions {
  std::filesystem::path runs_root = "runs";
  // Use this directory instead of runs/<name>/<timestamp>.
  std::optional<std::filesystem::path> run_dir;
  bool resume = false;      // continue from the newest checkpoint in run_dir
  bool write_files = true;  // false: keep everything in memory
  std::shared_ptr<HumanQueue> human;
  std::function<void(const Session&, const StepOutcome&)> on_step;
  const std::atomic<bool>* stop = nullptr;
};

struct RunArtifacts {
  std::filesystem::path run_dir;
  std::vector<EpisodeRecord> episodes;
  ppo::PolicyParams params;
  std::int64_t env_steps = 0;
  std::int64_t updates = 0;
  std::string metrics_hash;  // over the metrics lines produced by this call
  ScheduleAudit audit;
  // Transitions per agent in each update's buffer.
  std::vector<std::vector<std::int64_t>> buffer_census;
  std::optional<ppo::UpdateStats> last_update;
  std::int64_t gateway_calls = 0;
};

std::filesystem::path make_run_dir(const std::filesystem::path& runs_root, const std::string& name);

// Rollout and shared-policy updates until total_steps env steps.
RunArtifacts run_training(const RunConfig& config, const TrainOptions& options = {});

struct EvalOptions {
  int episodes = 1;
  std::uint64_t seed_offset = 1000003;
  std::shared_ptr<HumanQueue> human;
  std::function<void(const Session&, const StepOutcome&)> on_step;
  const std::atomic<bool>* stop = nullptr;
  std::filesystem::path audit_path;
};

// Runs the frozen policy without updates.
std::vector<EpisodeRecord> run_evaluation(const RunConfig& config, const ppo::PolicyParams& params,
                                          const EvalOptions& options = {});

}  // namespace firemed::runtime
