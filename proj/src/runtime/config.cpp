#include "runtime/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <tuple>

#include <yaml-cpp/yaml.h>

#include "core/error.hpp"

namespace firemed::runtime {

namespace {

template <class T>
struct Field {
  const char* key;
  std::optional<T> Extensions::*member;
};

const auto kExtensionFields = std::make_tuple(
    Field<std::uint64_t>{"seed", &Extensions::seed},
    Field<std::int64_t>{"n_agents", &Extensions::n_agents},
    Field<std::int64_t>{"tree_count", &Extensions::tree_count},
    Field<std::int64_t>{"episode_length", &Extensions::episode_length},
    Field<std::int64_t>{"total_steps", &Extensions::total_steps},
    Field<std::int64_t>{"cooldown", &Extensions::cooldown},
    Field<double>{"arrival_radius", &Extensions::arrival_radius},
    Field<std::string>{"backend", &Extensions::backend},
    Field<std::string>{"mock_policy", &Extensions::mock_policy},
    Field<std::string>{"optimizer", &Extensions::optimizer},
    Field<double>{"value_coef", &Extensions::value_coef},
    Field<double>{"entropy_coef", &Extensions::entropy_coef},
    Field<double>{"initial_log_std", &Extensions::initial_log_std},
    Field<bool>{"mask_overridden", &Extensions::mask_overridden},
    Field<std::int64_t>{"checkpoint_every", &Extensions::checkpoint_every},
    Field<double>{"spread_base_prob", &Extensions::spread_base_prob},
    Field<double>{"spread_radius", &Extensions::spread_radius},
    Field<double>{"humidity", &Extensions::humidity},
    Field<double>{"wind_x", &Extensions::wind_x},
    Field<double>{"wind_y", &Extensions::wind_y},
    Field<std::int64_t>{"burn_duration", &Extensions::burn_duration},
    Field<std::int64_t>{"wet_immunity", &Extensions::wet_immunity},
    Field<std::string>{"prompt_dir", &Extensions::prompt_dir},
    Field<std::int64_t>{"reply_wait_ms", &Extensions::reply_wait_ms},
    Field<std::int64_t>{"llm_timeout_ms", &Extensions::llm_timeout_ms},
    Field<std::int64_t>{"llm_retries", &Extensions::llm_retries},
    Field<bool>{"record_events", &Extensions::record_events});

const std::string& scalar(const YAML::Node& n, const std::string& path) {
  if (!n.IsScalar()) throw ConfigError(path + ": expected a scalar");
  return n.Scalar();
}

double read_double(const YAML::Node& n, const std::string& path) {
  std::string s = scalar(n, path);
  if (!s.empty() && s.front() == '+') s.erase(0, 1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
    throw ConfigError(path + ": expected a number, got '" + n.Scalar() + "'");
  return v;
}

template <class Int>
Int read_int(const YAML::Node& n, const std::string& path) {
  std::string s = scalar(n, path);
  if (!s.empty() && s.front() == '+') s.erase(0, 1);
  Int v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw ConfigError(path + ": expected an integer, got '" + n.Scalar() + "'");
  return v;
}

bool read_bool(const YAML::Node& n, const std::string& path) {
  const auto& s = scalar(n, path);
  if (s == "True" || s == "true" || s == "TRUE") return true;
  if (s == "False" || s == "false" || s == "FALSE") return false;
  throw ConfigError(path + ": expected True or False, got '" + s + "'");
}

bool is_quoted(const YAML::Node& n) { return n.Tag() == "!"; }

template <class T>
T read_as(const YAML::Node& n, const std::string& path) {
  if constexpr (std::is_same_v<T, double>) return read_double(n, path);
  else if constexpr (std::is_same_v<T, bool>) return read_bool(n, path);
  else if constexpr (std::is_same_v<T, std::string>) return scalar(n, path);
  else return read_int<T>(n, path);
}

std::string number(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  return out + "\"";
}

template <class T>
std::string render(const T& v) {
  if constexpr (std::is_same_v<T, double>) return number(v);
  else if constexpr (std::is_same_v<T, bool>) return v ? "True" : "False";
  else if constexpr (std::is_same_v<T, std::string>) return quote(v);
  else return std::to_string(v);
}

template <class F>
void for_each_extension(F&& f) {
  std::apply([&](const auto&... field) { (f(field), ...); }, kExtensionFields);
}

}  // namespace

const char* to_string(InterventionType t) {
  switch (t) {
    case InterventionType::None: return "none";
    case InterventionType::Auto: return "auto";
    case InterventionType::Llm: return "llm";
  }
  return "?";
}

const char* to_string(BackendKind b) { return b == BackendKind::Mock ? "mock" : "http"; }

InterventionType intervention_type_from(std::string_view s) {
  if (s == "none") return InterventionType::None;
  if (s == "auto") return InterventionType::Auto;
  if (s == "llm") return InterventionType::Llm;
  throw ConfigError("intervention_type: expected none, auto or llm, got '" + std::string(s) + "'");
}

BackendKind backend_from(std::string_view s) {
  if (s == "mock") return BackendKind::Mock;
  if (s == "http") return BackendKind::Http;
  throw ConfigError("extensions.backend: expected mock or http, got '" + std::string(s) + "'");
}

BackendKind RunConfig::backend() const {
  return backend_from(extensions.backend.value_or("mock"));
}

RunConfig parse_config(std::string_view yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(yaml_text));
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("malformed YAML: ") + e.what());
  }
  if (!root.IsMap()) throw ConfigError("config root must be a mapping");

  RunConfig c;
  auto keep_quote = [&](const std::string& key, const YAML::Node& n) {
    if (is_quoted(n)) c.quoted.insert(key);
    else c.quoted.erase(key);
  };

  for (const auto& kv : root) {
    const std::string key = kv.first.as<std::string>();
    const YAML::Node& v = kv.second;
    if (key == "name") {
      c.name = scalar(v, key);
      keep_quote(key, v);
    } else if (key == "env_parameters") {
      if (!v.IsMap()) throw ConfigError("env_parameters: expected a mapping");
      auto& e = c.env_parameters;
      for (const auto& ekv : v) {
        const std::string ek = ekv.first.as<std::string>();
        const std::string path = "env_parameters." + ek;
        const YAML::Node& ev = ekv.second;
        if (ek == "training") e.training = read_int<std::int64_t>(ev, path);
        else if (ek == "human_intervention") e.human_intervention = read_int<std::int64_t>(ev, path);
        else if (ek == "task") e.task = read_int<std::int64_t>(ev, path);
        else if (ek == "ext_fire_reward") e.ext_fire_reward = read_double(ev, path);
        else if (ek == "prep_tree_reward") e.prep_tree_reward = read_double(ev, path);
        else if (ek == "water_pickup_reward") e.water_pickup_reward = read_double(ev, path);
        else if (ek == "fire_out_reward") e.fire_out_reward = read_double(ev, path);
        else if (ek == "crash_reward") e.crash_reward = read_double(ev, path);
        else if (ek == "fire_close_to_village_reward") e.fire_close_to_village_reward = read_double(ev, path);
        else throw ConfigError(path + ": unknown key");
      }
    } else if (key == "no_graphics") {
      c.no_graphics = read_bool(v, key);
    } else if (key == "intervention_type") {
      c.intervention_type = intervention_type_from(scalar(v, key));
      keep_quote(key, v);
    } else if (key == "model") {
      c.model = scalar(v, key);
      keep_quote(key, v);
    } else if (key == "shot") {
      c.shot = scalar(v, key);
      keep_quote(key, v);
    } else if (key == "lr") {
      c.lr = read_double(v, key);
    } else if (key == "lambda_") {
      c.lambda_ = read_double(v, key);
    } else if (key == "gamma") {
      c.gamma = read_double(v, key);
    } else if (key == "sgd_minibatch_size") {
      c.sgd_minibatch_size = read_int<std::int64_t>(v, key);
    } else if (key == "train_batch_size") {
      c.train_batch_size = read_int<std::int64_t>(v, key);
    } else if (key == "num_sgd_iter") {
      c.num_sgd_iter = read_int<std::int64_t>(v, key);
    } else if (key == "clip_param") {
      c.clip_param = read_double(v, key);
    } else if (key == "extensions") {
      if (!v.IsMap()) throw ConfigError("extensions: expected a mapping");
      for (const auto& xkv : v) {
        const std::string xk = xkv.first.as<std::string>();
        bool known = false;
        for_each_extension([&](const auto& field) {
          if (known || xk != field.key) return;
          using T = typename std::decay_t<decltype(c.extensions.*(field.member))>::value_type;
          known = true;
          c.extensions.*(field.member) = read_as<T>(xkv.second, "extensions." + xk);
        });
        if (!known) throw ConfigError("extensions." + xk + ": unknown key");
      }
    } else {
      throw ConfigError(key + ": unknown key");
    }
  }
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& given) {
  // `configs/no_intervention` names configs/no_intervention.yaml.
  auto path = given;
  if (!std::filesystem::exists(path) && path.extension() != ".yaml") path += ".yaml";
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string emit_config(const RunConfig& c) {
  std::ostringstream os;
  auto str = [&](const char* key, const std::string& v) {
    os << key << ": " << (c.quoted.count(key) ? quote(v) : v) << '\n';
  };
  str("name", c.name);
  const auto& e = c.env_parameters;
  os << "env_parameters:\n"
     << "  training: " << e.training << '\n'
     << "  human_intervention: " << e.human_intervention << '\n'
     << "  task: " << e.task << '\n'
     << "  ext_fire_reward: " << number(e.ext_fire_reward) << '\n'
     << "  prep_tree_reward: " << number(e.prep_tree_reward) << '\n'
     << "  water_pickup_reward: " << number(e.water_pickup_reward) << '\n'
     << "  fire_out_reward: " << number(e.fire_out_reward) << '\n'
     << "  crash_reward: " << number(e.crash_reward) << '\n'
     << "  fire_close_to_village_reward: " << number(e.fire_close_to_village_reward) << '\n';
  os << "no_graphics: " << (c.no_graphics ? "True" : "False") << '\n';
  str("intervention_type", to_string(c.intervention_type));
  if (c.model) str("model", *c.model);
  if (c.shot) str("shot", *c.shot);
  os << "lr: " << number(c.lr) << '\n'
     << "lambda_: " << number(c.lambda_) << '\n'
     << "gamma: " << number(c.gamma) << '\n'
     << "sgd_minibatch_size: " << c.sgd_minibatch_size << '\n'
     << "train_batch_size: " << c.train_batch_size << '\n'
     << "num_sgd_iter: " << c.num_sgd_iter << '\n'
     << "clip_param: " << number(c.clip_param) << '\n';
  std::ostringstream ext;
  for_each_extension([&](const auto& field) {
    const auto& v = c.extensions.*(field.member);
    if (v) ext << "  " << field.key << ": " << render(*v) << '\n';
  });
  if (!ext.str().empty()) os << "extensions:\n" << ext.str();
  return os.str();
}

void RunConfig::validate() const {
  if (name.empty()) throw ConfigError("name: must not be empty");
  const auto& e = env_parameters;
  if (e.training != 0 && e.training != 1) throw ConfigError("env_parameters.training: expected 0 or 1");
  if (e.human_intervention != 0 && e.human_intervention != 1)
    throw ConfigError("env_parameters.human_intervention: expected 0 or 1");
  if (e.task != 0) throw ConfigError("env_parameters.task: only the default task 0 is available");
  if (extensions.backend) backend_from(*extensions.backend);
  if (intervention_type == InterventionType::Llm && !model)
    throw ConfigError("model: required when intervention_type is \"llm\"");
  if (intervention_type != InterventionType::None && backend() == BackendKind::Http && !model)
    throw ConfigError("model: required for the http backend");
  if (shot && *shot != "few" && *shot != "zero")
    throw ConfigError("shot: expected few or zero, got '" + *shot + "'");
  if (extensions.mock_policy && *extensions.mock_policy != "nearest_fire" &&
      *extensions.mock_policy != "silent" && *extensions.mock_policy != "garbage")
    throw ConfigError("extensions.mock_policy: expected nearest_fire, silent or garbage");
  if (extensions.optimizer && *extensions.optimizer != "adam" && *extensions.optimizer != "sgd")
    throw ConfigError("extensions.optimizer: expected adam or sgd");
  if (extensions.n_agents && (*extensions.n_agents < 3 || *extensions.n_agents > 6))
    throw ConfigError("extensions.n_agents: expected 3 to 6, got " + std::to_string(*extensions.n_agents));
  if (extensions.checkpoint_every && *extensions.checkpoint_every < 1)
    throw ConfigError("extensions.checkpoint_every: must be >= 1");
  if (extensions.reply_wait_ms && *extensions.reply_wait_ms < 0)
    throw ConfigError("extensions.reply_wait_ms: must be >= 0");
  if (extensions.llm_timeout_ms && *extensions.llm_timeout_ms < 1)
    throw ConfigError("extensions.llm_timeout_ms: must be >= 1");
  if (extensions.llm_retries && *extensions.llm_retries < 0)
    throw ConfigError("extensions.llm_retries: must be >= 0");

  try {
    reward::RewardShaping s = shaping();
    s.validate();
    train_hyper().validate();
    world_config().validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& err) {
    throw ConfigError(err.what());
  }
  if (sgd_minibatch_size > train_batch_size)
    throw ConfigError("sgd_minibatch_size: must not exceed train_batch_size");
  const auto n = world_config().n_agents;
  if (train_batch_size % n != 0)
    throw ConfigError("train_batch_size: must be a multiple of the agent count (" +
                      std::to_string(n) + ")");
  const auto m = mediation_config();
  if (m.cooldown < 1) throw ConfigError("extensions.cooldown: must be >= 1");
  if (!(m.arrival_radius >= 0.0)) throw ConfigError("extensions.arrival_radius: must be >= 0");
}

sim::WorldConfig RunConfig::world_config() const {
  sim::WorldConfig w;
  const auto& x = extensions;
  w.seed = seed();
  if (x.n_agents) w.n_agents = static_cast<int>(*x.n_agents);
  if (x.tree_count) w.tree_count = static_cast<int>(*x.tree_count);
  if (x.episode_length) w.episode_length = *x.episode_length;
  if (x.spread_base_prob) w.spread_base_prob = *x.spread_base_prob;
  if (x.spread_radius) w.spread_radius = *x.spread_radius;
  if (x.humidity) w.humidity = *x.humidity;
  if (x.wind_x) w.wind.x = *x.wind_x;
  if (x.wind_y) w.wind.y = *x.wind_y;
  if (x.burn_duration) w.burn_duration = *x.burn_duration;
  if (x.wet_immunity) w.wet_immunity = *x.wet_immunity;
  return w;
}

reward::RewardShaping RunConfig::shaping() const {
  reward::RewardShaping s;
  const auto& e = env_parameters;
  s.ext_fire_reward = e.ext_fire_reward;
  s.prep_tree_reward = e.prep_tree_reward;
  s.water_pickup_reward = e.water_pickup_reward;
  s.fire_out_reward = e.fire_out_reward;
  s.crash_reward = e.crash_reward;
  s.fire_close_to_village_reward = e.fire_close_to_village_reward;
  return s;
}

ppo::TrainHyper RunConfig::train_hyper() const {
  ppo::TrainHyper h;
  h.lr = lr;
  h.gamma = gamma;
  h.gae_lambda = lambda_;
  h.clip = clip_param;
  h.minibatch = static_cast<int>(sgd_minibatch_size);
  h.batch = static_cast<int>(train_batch_size);
  h.epochs = static_cast<int>(num_sgd_iter);
  const auto& x = extensions;
  if (x.value_coef) h.value_coef = *x.value_coef;
  if (x.entropy_coef) h.entropy_coef = *x.entropy_coef;
  if (x.total_steps) h.total_steps = *x.total_steps;
  if (x.optimizer) h.adam = *x.optimizer == "adam";
  if (x.mask_overridden) h.mask_overridden = *x.mask_overridden;
  if (x.initial_log_std) h.initial_log_std = *x.initial_log_std;
  return h;
}

mediation::MediationConfig RunConfig::mediation_config() const {
  mediation::MediationConfig m;
  if (extensions.cooldown) m.cooldown = static_cast<int>(*extensions.cooldown);
  if (extensions.arrival_radius) m.arrival_radius = *extensions.arrival_radius;
  return m;
}

void apply_overrides(RunConfig& config, const Overrides& o) {
  if (o.seed) config.extensions.seed = *o.seed;
  if (o.backend) config.extensions.backend = to_string(*o.backend);
  if (o.agents) config.extensions.n_agents = *o.agents;
  if (o.total_steps) config.extensions.total_steps = *o.total_steps;
  config.validate();
}

}  // namespace firemed::runtime
