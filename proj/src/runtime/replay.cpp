#include "runtime/replay.hpp"

#include <fstream>

#include "core/error.hpp"
#include "core/hash.hpp"
#include "oracle/reward_oracle.hpp"
#include "sim/snapshot.hpp"

namespace firemed::runtime {

namespace fs = std::filesystem;

std::string first_difference(const EpisodeRecord& a, const EpisodeRecord& b) {
  const auto ja = to_json(a);
  const auto jb = to_json(b);
  for (const auto& [key, value] : ja.items())
    if (!jb.contains(key) || jb.at(key) != value) return key;
  return {};
}

namespace {

std::vector<sim::AgentAction> parse_actions(const nlohmann::json& j) {
  std::vector<sim::AgentAction> out;
  for (const auto& a : j) {
    sim::AgentAction act;
    act.agent_id = a.at(0).get<int>();
    act.action.steer = a.at(1).get<double>();
    act.action.drop = a.at(2).get<int>() ? sim::Drop::DropWater : sim::Drop::DoNothing;
    out.push_back(act);
  }
  return out;
}

}  // namespace

ReplayReport replay_events(const fs::path& events_log, const RunConfig& config,
                           const std::vector<EpisodeRecord>* expected) {
  std::ifstream in(events_log);
  if (!in) throw IoError("cannot read " + events_log.string());
  const auto shaping = config.shaping();

  ReplayReport rep;
  Fnv1a traj, metrics;
  std::optional<sim::WorldState> world;
  EpisodeTally tally;
  std::int64_t episode = -1;
  std::int64_t cumulative_steps = 0, cumulative_tasks = 0;
  std::string line;
  std::int64_t line_no = 0;

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error&) {
      throw ReplayMismatch(episode, world ? world->step + 1 : 0,
                           "event log line " + std::to_string(line_no) + " is not JSON");
    }
    const auto type = j.value("type", std::string{});
    try {
      if (type == "episode") {
        if (j.value("schema", -1) != kEventsSchema) throw ReplayError("event log schema mismatch");
        // An episode without an end line was cut short (interrupted run); drop it.
        if (world) cumulative_steps -= tally.steps();
        episode = j.at("episode").get<std::int64_t>();
        world = sim::snapshot_from_json(j.at("snapshot"));
        tally = EpisodeTally(world->agents.size());
      } else if (type == "step") {
        if (!world) throw ReplayError("step record before any episode");
        const auto step = j.at("step").get<std::int64_t>();
        const auto actions = parse_actions(j.at("actions"));
        const sim::WorldState before = *world;
        sim::step(*world, actions);
        const auto hash = sim::world_hash(*world);
        if (world->step != step || hash != j.at("hash").get<std::string>())
          throw ReplayMismatch(episode, step,
                               "replay diverged at episode " + std::to_string(episode) + ", step " +
                                   std::to_string(step));
        traj.text(hash);
        const auto ev = oracle::events_from_states(before, *world, actions);
        const auto rewards = oracle::rewards_from_states(before, *world, actions, shaping);
        tally.add_step(ev, rewards);
        ++cumulative_steps;
        ++rep.steps;
      } else if (type == "tasks") {
        tally.add_tasks(static_cast<std::int64_t>(j.at("tasks").size()));
      } else if (type == "end") {
        if (!world) throw ReplayError("end record before any episode");
        const auto rec = tally.finish(config.name, config.seed(), episode + 1,
                                      cumulative_steps - tally.steps(), cumulative_tasks);
        cumulative_tasks += tally.tasks();
        if (expected) {
          const auto idx = static_cast<std::size_t>(rep.episodes);
          if (idx >= expected->size())
            throw ReplayMismatch(episode, world->step, "event log has more episodes than metrics.jsonl");
          const auto field = first_difference(rec, (*expected)[idx]);
          if (!field.empty())
            throw ReplayMismatch(episode, world->step,
                                 "recounted " + field + " differs from metrics.jsonl in episode " +
                                     std::to_string(episode));
        }
        metrics.text(to_json(rec).dump());
        metrics.text("\n");
        rep.recounted.push_back(rec);
        ++rep.episodes;
        world.reset();
      } else {
        throw ReplayError("unknown event type '" + type + "' on line " + std::to_string(line_no));
      }
    } catch (const nlohmann::json::exception& e) {
      throw ReplayMismatch(episode, world ? world->step + 1 : 0,
                           "malformed event on line " + std::to_string(line_no) + ": " + e.what());
    } catch (const InputError& e) {
      // The oracle refuses transitions that cannot have come from the simulator.
      throw ReplayMismatch(episode, world ? world->step : 0, e.what());
    }
  }
  if (expected) {
    rep.metrics_checked = true;
    if (static_cast<std::size_t>(rep.episodes) != expected->size())
      throw ReplayMismatch(episode, world ? world->step : 0,
                           "metrics.jsonl has " + std::to_string(expected->size()) +
                               " episodes, the event log " + std::to_string(rep.episodes));
  }
  rep.trajectory_hash = traj.hex();
  rep.metrics_hash = metrics.hex();
  return rep;
}

ReplayReport replay_run(const fs::path& run_dir) {
  const auto config = load_config(run_dir / "config.yaml");
  const auto expected = read_metrics(run_dir / "metrics.jsonl");
  return replay_events(run_dir / "events.log", config, &expected);
}

}  // namespace firemed::runtime
