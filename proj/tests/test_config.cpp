#include <doctest.h>

#include <fstream>
#include <sstream>

#include "core/error.hpp"
#include "runtime/config.hpp"
#include "support.hpp"

using namespace firemed;
using namespace firemed::runtime;

namespace {

const std::filesystem::path kConfigs = std::filesystem::path(FIREMED_SOURCE_DIR) / "configs";

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

const std::string kBase = R"(name: "X"
env_parameters:
  training: 1
  human_intervention: 0
  task: 0
  ext_fire_reward: 1000
  prep_tree_reward: 0.1
  water_pickup_reward: 0.1
  fire_out_reward: 0
  crash_reward: -100
  fire_close_to_village_reward: 0
no_graphics: True
intervention_type: "none"
lr: 0.005
lambda_: 0.95
gamma: 0.99
sgd_minibatch_size: 900
train_batch_size: 9000
num_sgd_iter: 3
clip_param: 0.2
)";

std::string replace(std::string s, const std::string& from, const std::string& to) {
  const auto at = s.find(from);
  REQUIRE(at != std::string::npos);
  return s.replace(at, from.size(), to);
}

}  // namespace

TEST_SUITE("config") {

TEST_CASE("published presets load, validate and round-trip byte for byte") {
  const std::vector<std::string> files{"no_intervention.yaml", "rb_llama_3.1.yaml", "rb_pharia_1.yaml",
                                       "nl_llama_3.1.yaml", "nl_pharia_1.yaml"};
  for (const auto& f : files) {
    CAPTURE(f);
    const auto text = slurp(kConfigs / f);
    const auto c = load_config(kConfigs / f);
    CHECK_NOTHROW(c.validate());
    CHECK(emit_config(c) == text);
    CHECK(parse_config(emit_config(c)) == c);
    // Shared PPO and reward settings.
    CHECK(c.lr == 0.005);
    CHECK(c.lambda_ == 0.95);
    CHECK(c.gamma == 0.99);
    CHECK(c.sgd_minibatch_size == 900);
    CHECK(c.train_batch_size == 9000);
    CHECK(c.num_sgd_iter == 3);
    CHECK(c.clip_param == 0.2);
    CHECK(c.env_parameters.ext_fire_reward == 1000);
    CHECK(c.env_parameters.prep_tree_reward == 0.1);
    CHECK(c.env_parameters.water_pickup_reward == 0.1);
    CHECK(c.env_parameters.fire_out_reward == 0);
    CHECK(c.env_parameters.crash_reward == -100);
    CHECK(c.env_parameters.fire_close_to_village_reward == 0);
    CHECK(c.no_graphics);
  }
  const auto none = load_config(kConfigs / "no_intervention.yaml");
  CHECK(none.name == "NO_INTERVENTION");
  CHECK(none.intervention_type == InterventionType::None);
  CHECK_FALSE(none.model.has_value());

  const auto rb = load_config(kConfigs / "rb_pharia_1.yaml");
  CHECK(rb.intervention_type == InterventionType::Auto);
  CHECK(*rb.model == "Pharia-1-LLM-7B-control-aligned");
  CHECK(rb.few_shot());

  // The NL presets write `shot` without quotes; that is preserved.
  const auto nl = load_config(kConfigs / "nl_llama_3.1.yaml");
  CHECK(nl.intervention_type == InterventionType::Llm);
  CHECK(*nl.model == "llama-3.1-8b-instruct");
  CHECK(nl.quoted.count("shot") == 0);
  CHECK(emit_config(nl).find("shot: few\n") != std::string::npos);
}

TEST_CASE("desk configs load and validate") {
  for (const auto& f : {"desk/none.yaml", "desk/rb.yaml", "desk/nl.yaml"}) {
    CAPTURE(f);
    const auto c = load_config(kConfigs / f);
    CHECK_NOTHROW(c.validate());
    CHECK(emit_config(c) == slurp(kConfigs / f));
    CHECK(c.backend() == BackendKind::Mock);
    CHECK(c.world_config().tree_count == 300);
  }
}

TEST_CASE("derived module settings") {
  const auto c = parse_config(kBase);
  CHECK(c.seed() == 42);
  const auto s = c.shaping();
  CHECK(s.ext_fire_reward == 1000);
  CHECK(s.prep_tree_reward == 0.1);
  CHECK(s.crash_reward == -100);
  CHECK(s.time_step_burning == -0.01);
  const auto h = c.train_hyper();
  CHECK(h.lr == 0.005);
  CHECK(h.gae_lambda == 0.95);
  CHECK(h.minibatch == 900);
  CHECK(h.batch == 9000);
  CHECK(h.epochs == 3);
  CHECK(h.value_coef == 0.5);
  CHECK(h.entropy_coef == 0.01);
  CHECK(h.total_steps == 300000);
  CHECK(h.adam);
  CHECK(c.mediation_config().cooldown == 200);
  CHECK(c.world_config().n_agents == 3);
}

TEST_CASE("invalid configs name the offending key") {
  auto expect_error = [](const std::string& text, const std::string& key) {
    CAPTURE(text);
    try {
      parse_config(text).validate();
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find(key) != std::string::npos);
    }
  };
  expect_error(replace(kBase, "\"none\"", "\"llm\""), "model");
  expect_error(kBase + "bogus: 1\n", "bogus");
  expect_error(replace(kBase, "  task: 0\n", "  task: 0\n  wat: 3\n"), "wat");
  expect_error(replace(kBase, "\"none\"", "\"sometimes\""), "intervention_type");
  expect_error(replace(kBase, "sgd_minibatch_size: 900", "sgd_minibatch_size: 700"), "sgd_minibatch_size");
  expect_error(replace(kBase, "lr: 0.005", "lr: fast"), "lr");
  expect_error(replace(kBase, "lr: 0.005", "lr: -1"), "lr");
  expect_error(replace(kBase, "no_graphics: True", "no_graphics: maybe"), "no_graphics");
  expect_error(kBase + "extensions:\n  n_agents: 9\n", "n_agents");
  expect_error(kBase + "extensions:\n  backend: \"carrier-pigeon\"\n", "backend");
  expect_error(kBase + "extensions:\n  unknown_knob: 1\n", "unknown_knob");
  expect_error("name: [\n", "YAML");
  CHECK_THROWS_AS(load_config(kConfigs / "missing.yaml"), ConfigError);
  CHECK(load_config(kConfigs / "no_intervention") == load_config(kConfigs / "no_intervention.yaml"));
}

TEST_CASE("extensions round-trip and only present keys are written") {
  auto c = parse_config(kBase);
  CHECK(emit_config(c) == kBase);
  Overrides o;
  o.seed = 7;
  o.agents = 4;
  o.total_steps = 1200;
  o.backend = BackendKind::Mock;
  apply_overrides(c, o);
  CHECK_NOTHROW(c.validate());
  CHECK(c.seed() == 7);
  CHECK(c.world_config().n_agents == 4);
  const auto text = emit_config(c);
  CHECK(text.find("extensions:\n") != std::string::npos);
  CHECK(text.find("  n_agents: 4\n") != std::string::npos);
  const auto back = parse_config(text);
  CHECK(back == c);
  CHECK(emit_config(back) == text);
}

}  // TEST_SUITE
