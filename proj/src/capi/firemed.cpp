#include "firemed/firemed.h"

#include <atomic>
#include <climits>
#include <cstring>
#include <memory>
#include <string>
#include <thread>

#include <spdlog/spdlog.h>

#include "core/error.hpp"
#include "oracle/reward_oracle.hpp"
#include "reward/reward.hpp"
#include "runtime/config.hpp"
#include "runtime/replay.hpp"
#include "runtime/server.hpp"
#include "runtime/training.hpp"
#include "sim/observation.hpp"
#include "sim/snapshot.hpp"

using namespace firemed;

struct firemed_config {
  runtime::RunConfig config;
};

struct firemed_world {
  sim::WorldState world;
  reward::RewardShaping shaping;
};

struct firemed_server {
  std::shared_ptr<runtime::LiveFeed> feed;
  std::unique_ptr<runtime::OpsServer> server;
  std::atomic<bool> stop{false};
  std::atomic<bool> finished{false};
  std::thread loop;
};

namespace {

thread_local std::string g_last_error;

firemed_status fail(firemed_status s, const std::string& msg) {
  g_last_error = msg;
  return s;
}

// Runs `f`, mapping exceptions onto status codes.
template <class F>
firemed_status guarded(F&& f) {
  try {
    f();
    return FIREMED_OK;
  } catch (const Error& e) {
    return fail(static_cast<firemed_status>(static_cast<int>(e.code())), e.what());
  } catch (const std::bad_alloc&) {
    return fail(FIREMED_E_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(FIREMED_E_INTERNAL, e.what());
  }
}

char* dup_string(const std::string& s) {
  auto* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (!p) throw std::bad_alloc();
  std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

#define FIREMED_REQUIRE(ptr) \
  if (!(ptr)) return fail(FIREMED_E_NULL_ARGUMENT, #ptr " is null")

runtime::Overrides to_overrides(const firemed_overrides* o) {
  runtime::Overrides out;
  if (!o) return out;
  if (o->has_seed) out.seed = o->seed;
  if (o->backend) out.backend = runtime::backend_from(o->backend);
  if (o->agents < 0) throw InputError("agents must be positive");
  if (o->agents > 0) out.agents = o->agents;
  if (o->total_steps < 0) throw InputError("total_steps must be positive");
  if (o->total_steps > 0) out.total_steps = o->total_steps;
  return out;
}

nlohmann::json summary_json(const runtime::RunArtifacts& a) {
  nlohmann::json census = nlohmann::json::array();
  for (const auto& c : a.buffer_census) census.push_back(c);
  nlohmann::json j{{"run_dir", a.run_dir.string()},
                   {"episodes", a.episodes.size()},
                   {"env_steps", a.env_steps},
                   {"updates", a.updates},
                   {"metrics_hash", a.metrics_hash},
                   {"gateway_calls", a.gateway_calls},
                   {"buffer_census", std::move(census)}};
  if (!a.episodes.empty()) j["last_episode"] = runtime::to_json(a.episodes.back());
  return j;
}

nlohmann::json events_json(const sim::StepEvents& ev, const std::vector<reward::RewardBreakdown>& r) {
  auto agents = nlohmann::json::array();
  for (std::size_t i = 0; i < ev.agents.size(); ++i) {
    const auto& e = ev.agents[i];
    agents.push_back({{"crossed_border", e.crossed_border},
                      {"picked_up_water", e.picked_up_water},
                      {"dropped_water", e.dropped_water},
                      {"extinguished", e.extinguished_count},
                      {"prepared", e.prepared_count},
                      {"reward", r[i].total}});
  }
  return {{"agents", std::move(agents)},
          {"fire_out", ev.fire_out},
          {"fire_near_village", ev.fire_near_village},
          {"any_burning", ev.any_burning}};
}

}  // namespace

extern "C" {

const char* firemed_version(void) { return "0.1.0"; }

const char* firemed_last_error(void) { return g_last_error.c_str(); }

const char* firemed_status_name(firemed_status s) {
  switch (s) {
    case FIREMED_OK: return "ok";
    case FIREMED_E_CONFIG: return "config";
    case FIREMED_E_INPUT: return "input";
    case FIREMED_E_STATE: return "state";
    case FIREMED_E_PARSE: return "parse";
    case FIREMED_E_NUMERICS: return "numerics";
    case FIREMED_E_BACKEND: return "backend";
    case FIREMED_E_UNAVAILABLE: return "unavailable";
    case FIREMED_E_REPLAY_MISMATCH: return "replay_mismatch";
    case FIREMED_E_REPLAY: return "replay";
    case FIREMED_E_IO: return "io";
    case FIREMED_E_REJECTED_TASK: return "rejected_task";
    case FIREMED_E_NO_FIRE: return "no_fire";
    case FIREMED_E_NULL_ARGUMENT: return "null_argument";
    case FIREMED_E_INTERNAL: return "internal";
  }
  return "unknown";
}

void firemed_string_free(char* s) { std::free(s); }

firemed_status firemed_set_log_level(const char* level) {
  FIREMED_REQUIRE(level);
  const auto l = spdlog::level::from_str(level);
  if (l == spdlog::level::off && std::string(level) != "off")
    return fail(FIREMED_E_INPUT, std::string("unknown log level '") + level + "'");
  spdlog::set_level(l);
  return FIREMED_OK;
}

firemed_status firemed_config_load(const char* path, firemed_config** out) {
  FIREMED_REQUIRE(path);
  FIREMED_REQUIRE(out);
  return guarded([&] { *out = new firemed_config{runtime::load_config(path)}; });
}

firemed_status firemed_config_parse(const char* yaml, firemed_config** out) {
  FIREMED_REQUIRE(yaml);
  FIREMED_REQUIRE(out);
  return guarded([&] { *out = new firemed_config{runtime::parse_config(yaml)}; });
}

firemed_status firemed_config_apply(firemed_config* config, const firemed_overrides* o) {
  FIREMED_REQUIRE(config);
  return guarded([&] {
    auto copy = config->config;
    runtime::apply_overrides(copy, to_overrides(o));
    copy.validate();
    config->config = std::move(copy);
  });
}

firemed_status firemed_config_validate(const firemed_config* config) {
  FIREMED_REQUIRE(config);
  return guarded([&] { config->config.validate(); });
}

firemed_status firemed_config_emit(const firemed_config* config, char** yaml_out) {
  FIREMED_REQUIRE(config);
  FIREMED_REQUIRE(yaml_out);
  return guarded([&] { *yaml_out = dup_string(runtime::emit_config(config->config)); });
}

void firemed_config_free(firemed_config* config) { delete config; }

firemed_status firemed_world_create(const firemed_config* config, uint64_t seed, firemed_world** out) {
  FIREMED_REQUIRE(config);
  FIREMED_REQUIRE(out);
  return guarded([&] {
    config->config.validate();
    auto wc = config->config.world_config();
    wc.seed = seed;
    *out = new firemed_world{sim::init_world(wc), config->config.shaping()};
  });
}

firemed_status firemed_world_restore(const char* snapshot_json, firemed_world** out) {
  FIREMED_REQUIRE(snapshot_json);
  FIREMED_REQUIRE(out);
  return guarded([&] {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(snapshot_json);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("snapshot is not JSON: ") + e.what());
    }
    *out = new firemed_world{sim::snapshot_from_json(j), reward::RewardShaping::unshaped()};
  });
}

firemed_status firemed_world_agent_count(const firemed_world* world, size_t* out) {
  FIREMED_REQUIRE(world);
  FIREMED_REQUIRE(out);
  *out = world->world.agents.size();
  return FIREMED_OK;
}

firemed_status firemed_world_observe(const firemed_world* world, double* out, size_t capacity,
                                     size_t* written) {
  FIREMED_REQUIRE(world);
  FIREMED_REQUIRE(out);
  return guarded([&] {
    const auto k = sim::FeatureObservation::kSize;
    const auto need = world->world.agents.size() * k;
    if (capacity < need) throw InputError("observation buffer needs " + std::to_string(need) + " doubles");
    for (const auto& a : world->world.agents) {
      const auto obs = sim::encode_observation(world->world, a.id);
      std::memcpy(out + static_cast<std::size_t>(a.id) * k, obs.values.data(), k * sizeof(double));
    }
    if (written) *written = need;
  });
}

firemed_status firemed_world_step(firemed_world* world, const double* steer, const int* drop,
                                  size_t n, int* terminal, char** events_out) {
  FIREMED_REQUIRE(world);
  if (n > 0) {
    FIREMED_REQUIRE(steer);
    FIREMED_REQUIRE(drop);
  }
  return guarded([&] {
    std::vector<sim::AgentAction> actions;
    std::size_t k = 0;
    for (const auto& a : world->world.agents) {
      if (a.crashed) continue;
      if (k >= n) throw InputError("missing action for agent " + std::to_string(a.id));
      if (drop[k] != 0 && drop[k] != 1) throw InputError("drop must be 0 or 1");
      actions.push_back({a.id, {steer[k], drop[k] ? sim::Drop::DropWater : sim::Drop::DoNothing}});
      ++k;
    }
    if (k != n) throw InputError("more actions than live agents");
    const auto ev = sim::step(world->world, actions);
    if (terminal) *terminal = world->world.terminal ? 1 : 0;
    if (events_out) *events_out = dup_string(events_json(ev, reward::compute_rewards(ev, world->shaping)).dump());
  });
}

firemed_status firemed_world_snapshot(const firemed_world* world, char** json_out) {
  FIREMED_REQUIRE(world);
  FIREMED_REQUIRE(json_out);
  return guarded([&] { *json_out = dup_string(sim::snapshot_to_json(world->world).dump()); });
}

firemed_status firemed_world_hash(const firemed_world* world, char** hash_out) {
  FIREMED_REQUIRE(world);
  FIREMED_REQUIRE(hash_out);
  return guarded([&] { *hash_out = dup_string(sim::world_hash(world->world)); });
}

void firemed_world_destroy(firemed_world* world) { delete world; }

firemed_status firemed_train(const firemed_config* config, const char* runs_root, char** summary) {
  FIREMED_REQUIRE(config);
  return guarded([&] {
    runtime::TrainOptions o;
    if (runs_root) o.runs_root = runs_root;
    const auto art = runtime::run_training(config->config, o);
    if (summary) *summary = dup_string(summary_json(art).dump());
  });
}

firemed_status firemed_train_resume(const char* run_dir, char** summary) {
  FIREMED_REQUIRE(run_dir);
  return guarded([&] {
    const auto config = runtime::load_config(std::filesystem::path(run_dir) / "config.yaml");
    runtime::TrainOptions o;
    o.run_dir = run_dir;
    o.resume = true;
    const auto art = runtime::run_training(config, o);
    if (summary) *summary = dup_string(summary_json(art).dump());
  });
}

firemed_status firemed_eval(const char* checkpoint_path, const firemed_overrides* ov, int episodes,
                            char** records_json) {
  FIREMED_REQUIRE(checkpoint_path);
  return guarded([&] {
    if (episodes <= 0) throw InputError("episodes must be positive");
    const auto ck = runtime::load_checkpoint(checkpoint_path);
    auto config = runtime::parse_config(ck.config_yaml);
    runtime::apply_overrides(config, to_overrides(ov));
    runtime::EvalOptions o;
    o.episodes = episodes;
    const auto records = runtime::run_evaluation(config, ck.params, o);
    auto arr = nlohmann::json::array();
    for (const auto& r : records) arr.push_back(runtime::to_json(r));
    if (records_json) *records_json = dup_string(arr.dump());
  });
}

firemed_status firemed_replay(const char* run_dir, char** report_json) {
  FIREMED_REQUIRE(run_dir);
  return guarded([&] {
    const auto rep = runtime::replay_run(run_dir);
    if (report_json)
      *report_json = dup_string(nlohmann::json{{"episodes", rep.episodes},
                                               {"steps", rep.steps},
                                               {"trajectory_hash", rep.trajectory_hash},
                                               {"metrics_hash", rep.metrics_hash},
                                               {"metrics_checked", rep.metrics_checked}}
                                    .dump());
  });
}

firemed_status firemed_bench_rewards(int fixtures, uint64_t seed, char** report_json) {
  return guarded([&] {
    if (fixtures <= 0) throw InputError("fixtures must be positive");
    const auto r = oracle::bench_rewards(fixtures, seed);
    if (report_json)
      *report_json = dup_string(nlohmann::json{{"fixtures", r.fixtures},
                                               {"mismatches", r.mismatches},
                                               {"seconds", r.seconds}}
                                    .dump());
  });
}

firemed_status firemed_serve_start(const firemed_serve_options* options, firemed_server** out) {
  FIREMED_REQUIRE(options);
  FIREMED_REQUIRE(options->source);
  FIREMED_REQUIRE(out);
  return guarded([&] {
    const std::filesystem::path source = options->source;
    runtime::RunConfig config;
    ppo::PolicyParams params;
    if (options->live) {
      config = runtime::load_config(source);
    } else {
      config = runtime::load_config(source / "config.yaml");
      if (const auto ck = runtime::latest_checkpoint(source)) {
        params = runtime::load_checkpoint(*ck).params;
      } else {
        spdlog::warn("no checkpoint in {}; serving an untrained policy", source.string());
        params = ppo::PolicyParams::init(mix_seed(config.seed(), 1),
                                         config.train_hyper().initial_log_std);
      }
    }
    runtime::apply_overrides(config, to_overrides(options->overrides));
    config.validate();

    auto human = std::make_shared<runtime::HumanQueue>();
    auto srv = std::make_unique<firemed_server>();
    srv->feed = std::make_shared<runtime::LiveFeed>(config.intervention_type, human);
    runtime::ServerOptions so;
    if (options->bind) so.bind = options->bind;
    so.port = options->port;
    if (options->stream_hz > 0) so.stream_hz = options->stream_hz;
    srv->server = std::make_unique<runtime::OpsServer>(srv->feed, so);
    srv->server->start();

    const auto pace = std::chrono::duration<double, std::milli>(std::max(0.0, options->step_ms));
    auto* s = srv.get();
    auto hook = [s, pace](const runtime::Session& session, const runtime::StepOutcome& step) {
      if (step.finished) s->feed->add_episode(*step.finished);
      s->feed->publish(session, step.terminal || !step.interventions.issued.empty());
      if (pace.count() > 0) std::this_thread::sleep_for(pace);
    };
    const std::string runs_root = options->runs_root ? options->runs_root : "runs";
    const bool live = options->live != 0;
    srv->loop = std::thread([s, config, params, human, hook, runs_root, live] {
      try {
        if (live) {
          runtime::TrainOptions o;
          o.runs_root = runs_root;
          o.human = human;
          o.on_step = hook;
          o.stop = &s->stop;
          runtime::run_training(config, o);
        } else {
          runtime::EvalOptions o;
          o.episodes = INT_MAX;
          o.human = human;
          o.on_step = hook;
          o.stop = &s->stop;
          runtime::run_evaluation(config, params, o);
        }
      } catch (const std::exception& e) {
        spdlog::error("serve loop ended: {}", e.what());
      }
      s->finished = true;
    });
    *out = srv.release();
  });
}

firemed_status firemed_server_port(const firemed_server* server, unsigned short* port) {
  FIREMED_REQUIRE(server);
  FIREMED_REQUIRE(port);
  *port = server->server->port();
  return FIREMED_OK;
}

firemed_status firemed_server_finished(const firemed_server* server, int* finished) {
  FIREMED_REQUIRE(server);
  FIREMED_REQUIRE(finished);
  *finished = server->finished ? 1 : 0;
  return FIREMED_OK;
}

void firemed_server_stop(firemed_server* server) {
  if (!server) return;
  server->stop = true;
  if (server->loop.joinable()) server->loop.join();
  server->feed->close();
  server->server->stop();
  delete server;
}

}  // extern "C"
