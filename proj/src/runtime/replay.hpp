#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "runtime/config.hpp"
#include "runtime/telemetry.hpp"

namespace firemed::runtime {

struct ReplayReport {
  std::int64_t episodes = 0;  // completed episodes re-simulated
  std::int64_t steps = 0;
  std::vector<EpisodeRecord> recounted;
  std::string trajectory_hash;  // digest of every per-step world hash
  std::string metrics_hash;     // digest of the recounted metric lines
  bool metrics_checked = false;
};

// Name of the first field where the records differ, empty when equal.
std::string first_difference(const EpisodeRecord& a, const EpisodeRecord& b);

// Re-simulates every episode in an event log from its starting snapshot and
// the recorded actions. Throws ReplayMismatch at the first step whose world
// hash differs from the log. Episode metrics are recounted from state diffs
// alone; when `expected` is given each recount must equal its record.
ReplayReport replay_events(const std::filesystem::path& events_log, const RunConfig& config,
                           const std::vector<EpisodeRecord>* expected = nullptr);

// replay_events over <run_dir>/{config.yaml, events.log, metrics.jsonl}.
ReplayReport replay_run(const std::filesystem::path& run_dir);

}  // namespace firemed::runtime
