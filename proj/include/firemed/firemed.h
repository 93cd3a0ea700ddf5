#ifndef FIREMED_FIREMED_H
#define FIREMED_FIREMED_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define FIREMED_API __declspec(dllexport)
#else
#define FIREMED_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Every call returns a status. On failure a message is kept per thread and
 * can be read with firemed_last_error() until the next failing call. */
typedef enum firemed_status {
  FIREMED_OK = 0,
  FIREMED_E_CONFIG = 1,
  FIREMED_E_INPUT = 2,
  FIREMED_E_STATE = 3,
  FIREMED_E_PARSE = 4,
  FIREMED_E_NUMERICS = 5,
  FIREMED_E_BACKEND = 6,
  FIREMED_E_UNAVAILABLE = 7,
  FIREMED_E_REPLAY_MISMATCH = 8,
  FIREMED_E_REPLAY = 9,
  FIREMED_E_IO = 10,
  FIREMED_E_REJECTED_TASK = 11,
  FIREMED_E_NO_FIRE = 12,
  FIREMED_E_NULL_ARGUMENT = 90,
  FIREMED_E_INTERNAL = 99
} firemed_status;

typedef struct firemed_config firemed_config;
typedef struct firemed_world firemed_world;
typedef struct firemed_server firemed_server;

/* Unset fields leave the config untouched. */
typedef struct firemed_overrides {
  int has_seed;
  uint64_t seed;
  const char* backend; /* "mock" or "http", NULL keeps the config's */
  int agents;          /* 0 keeps the config's */
  int64_t total_steps; /* 0 keeps the config's */
} firemed_overrides;

FIREMED_API const char* firemed_version(void);
FIREMED_API const char* firemed_last_error(void);
FIREMED_API const char* firemed_status_name(firemed_status status);
/* Frees strings returned through char** out-parameters. */
FIREMED_API void firemed_string_free(char* s);
/* "trace", "debug", "info", "warn", "error" or "off". */
FIREMED_API firemed_status firemed_set_log_level(const char* level);

/* Configuration */
FIREMED_API firemed_status firemed_config_load(const char* path, firemed_config** out);
FIREMED_API firemed_status firemed_config_parse(const char* yaml, firemed_config** out);
FIREMED_API firemed_status firemed_config_apply(firemed_config* config, const firemed_overrides* o);
FIREMED_API firemed_status firemed_config_validate(const firemed_config* config);
FIREMED_API firemed_status firemed_config_emit(const firemed_config* config, char** yaml_out);
FIREMED_API void firemed_config_free(firemed_config* config);

/* Single environment without the mediator. Observations are n_agents rows of
 * 8 features; actions are given for every live agent in id order. */
FIREMED_API firemed_status firemed_world_create(const firemed_config* config, uint64_t seed,
                                                firemed_world** out);
FIREMED_API firemed_status firemed_world_restore(const char* snapshot_json, firemed_world** out);
FIREMED_API firemed_status firemed_world_agent_count(const firemed_world* world, size_t* out);
FIREMED_API firemed_status firemed_world_observe(const firemed_world* world, double* out,
                                                 size_t capacity, size_t* written);
/* events_json (optional) receives the step's events and per-agent rewards. */
FIREMED_API firemed_status firemed_world_step(firemed_world* world, const double* steer,
                                              const int* drop, size_t n, int* terminal,
                                              char** events_json);
FIREMED_API firemed_status firemed_world_snapshot(const firemed_world* world, char** json_out);
FIREMED_API firemed_status firemed_world_hash(const firemed_world* world, char** hash_out);
FIREMED_API void firemed_world_destroy(firemed_world* world);

/* Runs. Summaries and reports are JSON strings. */
FIREMED_API firemed_status firemed_train(const firemed_config* config, const char* runs_root,
                                         char** summary_json);
FIREMED_API firemed_status firemed_train_resume(const char* run_dir, char** summary_json);
FIREMED_API firemed_status firemed_eval(const char* checkpoint_path, const firemed_overrides* o,
                                        int episodes, char** records_json);
FIREMED_API firemed_status firemed_replay(const char* run_dir, char** report_json);
FIREMED_API firemed_status firemed_bench_rewards(int fixtures, uint64_t seed, char** report_json);

/* Ops server. With live = 0, `source` is a run directory whose config and
 * newest checkpoint drive an evaluation loop; with live = 1 it is a config
 * file and the server watches a training run under runs_root. step_ms paces
 * the loop (0 = as fast as possible). */
typedef struct firemed_serve_options {
  const char* source;
  int live;
  const char* runs_root;
  const char* bind;
  unsigned short port;
  double stream_hz;
  double step_ms;
  const firemed_overrides* overrides;
} firemed_serve_options;

FIREMED_API firemed_status firemed_serve_start(const firemed_serve_options* options,
                                               firemed_server** out);
FIREMED_API firemed_status firemed_server_port(const firemed_server* server, unsigned short* port);
/* 1 once the rollout loop has ended (finished or failed). */
FIREMED_API firemed_status firemed_server_finished(const firemed_server* server, int* finished);
/* Stops the loop and the listener, then frees the handle. */
FIREMED_API void firemed_server_stop(firemed_server* server);

#ifdef __cplusplus
}
#endif

#endif
