#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>

#include "mediation/mediation.hpp"
#include "ppo/ppo.hpp"
#include "reward/reward.hpp"
#include "sim/world.hpp"

namespace firemed::runtime {

enum class InterventionType { None, Auto, Llm };
enum class BackendKind { Mock, Http };

const char* to_string(InterventionType t);
const char* to_string(BackendKind b);
InterventionType intervention_type_from(std::string_view s);  // ConfigError
BackendKind backend_from(std::string_view s);                  // ConfigError

struct EnvParameters {
  std::int64_t training = 1;
  std::int64_t human_intervention = 0;
  std::int64_t task = 0;
  double ext_fire_reward = 1000;
  double prep_tree_reward = 0.1;
  double water_pickup_reward = 0.1;
  double fire_out_reward = 0;
  double crash_reward = -100;
  double fire_close_to_village_reward = 0;
  bool operator==(const EnvParameters&) const = default;
};

// Knobs that are not part of the published config files. Only keys that were
// present (or set through overrides) are written back out.
struct Extensions {
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> n_agents;
  std::optional<std::int64_t> tree_count;
  std::optional<std::int64_t> episode_length;
  std::optional<std::int64_t> total_steps;
  std::optional<std::int64_t> cooldown;
  std::optional<double> arrival_radius;
  std::optional<std::string> backend;
  std::optional<std::string> mock_policy;
  std::optional<std::string> optimizer;
  std::optional<double> value_coef;
  std::optional<double> entropy_coef;
  std::optional<double> initial_log_std;
  std::optional<bool> mask_overridden;
  std::optional<std::int64_t> checkpoint_every;
  std::optional<double> spread_base_prob;
  std::optional<double> spread_radius;
  std::optional<double> humidity;
  std::optional<double> wind_x;
  std::optional<double> wind_y;
  std::optional<std::int64_t> burn_duration;
  std::optional<std::int64_t> wet_immunity;
  std::optional<std::string> prompt_dir;
  std::optional<std::int64_t> reply_wait_ms;
  std::optional<std::int64_t> llm_timeout_ms;
  std::optional<std::int64_t> llm_retries;
  std::optional<bool> record_events;
  bool operator==(const Extensions&) const = default;
};

struct RunConfig {
  std::string name = "RUN";
  EnvParameters env_parameters;
  bool no_graphics = true;
  InterventionType intervention_type = InterventionType::None;
  std::optional<std::string> model;
  std::optional<std::string> shot;
  double lr = 0.005;
  double lambda_ = 0.95;
  double gamma = 0.99;
  std::int64_t sgd_minibatch_size = 900;
  std::int64_t train_batch_size = 9000;
  std::int64_t num_sgd_iter = 3;
  double clip_param = 0.2;
  Extensions extensions;

  // Scalar keys whose value was written in quotes; preserved on output.
  std::set<std::string> quoted{"name", "intervention_type", "model", "shot"};

  // Throws ConfigError naming the offending key.
  void validate() const;

  sim::WorldConfig world_config() const;
  reward::RewardShaping shaping() const;
  ppo::TrainHyper train_hyper() const;
  mediation::MediationConfig mediation_config() const;
  std::uint64_t seed() const { return extensions.seed.value_or(42); }
  BackendKind backend() const;
  bool few_shot() const { return shot.value_or("few") == "few"; }

  bool operator==(const RunConfig&) const = default;
};

RunConfig parse_config(std::string_view yaml_text);
RunConfig load_config(const std::filesystem::path& path);
// Canonical rendering: key order of the published files, quote style kept,
// numbers in shortest round-trip form, booleans as True/False.
std::string emit_config(const RunConfig& config);

// Command-line overrides, applied before validation.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<BackendKind> backend;
  std::optional<int> agents;
  std::optional<std::int64_t> total_steps;
};
void apply_overrides(RunConfig& config, const Overrides& o);

}  // namespace firemed::runtime
