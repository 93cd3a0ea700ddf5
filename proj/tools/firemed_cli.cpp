#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "firemed/firemed.h"

namespace {

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted = true; }

int report(firemed_status s) {
  std::cerr << "error (" << firemed_status_name(s) << "): " << firemed_last_error() << "\n";
  return s == FIREMED_E_REPLAY_MISMATCH ? 3 : 1;
}

// Takes ownership of a C string from the library.
std::string take(char* s) {
  std::string out = s ? s : "";
  firemed_string_free(s);
  return out;
}

void print_json(const std::string& s) { std::cout << nlohmann::json::parse(s).dump(2) << "\n"; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mediated multi-agent wildfire training"};
  app.require_subcommand(1);
  app.fallthrough();

  std::optional<std::uint64_t> seed;
  std::optional<std::string> backend;
  std::optional<int> agents;
  std::optional<std::int64_t> total_steps;
  std::string log_level = "info";
  app.add_option("--seed", seed, "Run seed");
  app.add_option("--backend", backend, "LLM backend")->check(CLI::IsMember({"mock", "http"}));
  app.add_option("--agents", agents, "Number of agents")->check(CLI::Range(3, 6));
  app.add_option("--total-steps", total_steps, "Environment steps to train")->check(CLI::PositiveNumber);
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off");

  auto* train = app.add_subcommand("train", "Train a shared policy from a config file");
  std::string train_config, runs_root = "runs", resume_dir;
  train->add_option("config", train_config, "Config file");
  train->add_option("--runs-root", runs_root, "Where run directories are created");
  train->add_option("--resume", resume_dir, "Continue the run in this directory");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string checkpoint;
  int episodes = 5;
  eval->add_option("checkpoint", checkpoint, "Checkpoint file")->required();
  eval->add_option("--episodes", episodes, "Episodes to run")->check(CLI::PositiveNumber);

  auto* replay = app.add_subcommand("replay", "Re-simulate a run and recount its metrics");
  std::string replay_dir;
  replay->add_option("run_dir", replay_dir, "Run directory")->required();

  auto* serve = app.add_subcommand("serve", "Serve live state over HTTP and WebSocket");
  std::string serve_dir, live_config, bind = "127.0.0.1";
  unsigned short port = 8080;
  double hz = 10.0, step_ms = 20.0;
  serve->add_option("run_dir", serve_dir, "Run directory to serve its newest checkpoint");
  serve->add_option("--live", live_config, "Train from this config while serving");
  serve->add_option("--bind", bind, "Listen address");
  serve->add_option("--port", port, "Listen port (0 picks one)");
  serve->add_option("--hz", hz, "Stream rate, at most 10")->check(CLI::Range(0.1, 10.0));
  serve->add_option("--step-ms", step_ms, "Delay per environment step")->check(CLI::NonNegativeNumber);
  serve->add_option("--runs-root", runs_root, "Where a live run directory is created");

  auto* bench = app.add_subcommand("bench-rewards", "Check the reward engine against a recount from states");
  int fixtures = 10000;
  std::uint64_t bench_seed = 7;
  bench->add_option("--fixtures", fixtures, "Random step fixtures")->check(CLI::PositiveNumber);
  bench->add_option("--fixture-seed", bench_seed, "Seed for fixture generation");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return 2;
  }

  if (const auto s = firemed_set_log_level(log_level.c_str()); s != FIREMED_OK) return report(s);

  firemed_overrides ov{};
  if (seed) {
    ov.has_seed = 1;
    ov.seed = *seed;
  }
  if (backend) ov.backend = backend->c_str();
  if (agents) ov.agents = *agents;
  if (total_steps) ov.total_steps = *total_steps;

  if (train->parsed()) {
    char* out = nullptr;
    if (!resume_dir.empty()) {
      if (const auto s = firemed_train_resume(resume_dir.c_str(), &out); s != FIREMED_OK) return report(s);
      print_json(take(out));
      return 0;
    }
    if (train_config.empty()) {
      std::cerr << "train needs a config file or --resume\n\n" << train->help();
      return 2;
    }
    firemed_config* cfg = nullptr;
    if (const auto s = firemed_config_load(train_config.c_str(), &cfg); s != FIREMED_OK) return report(s);
    auto s = firemed_config_apply(cfg, &ov);
    if (s == FIREMED_OK) s = firemed_train(cfg, runs_root.c_str(), &out);
    firemed_config_free(cfg);
    if (s != FIREMED_OK) return report(s);
    auto summary = nlohmann::json::parse(take(out));
    summary.erase("buffer_census");
    std::cout << summary.dump(2) << "\n";
    return 0;
  }

  if (eval->parsed()) {
    char* out = nullptr;
    if (const auto s = firemed_eval(checkpoint.c_str(), &ov, episodes, &out); s != FIREMED_OK) return report(s);
    print_json(take(out));
    return 0;
  }

  if (replay->parsed()) {
    char* out = nullptr;
    if (const auto s = firemed_replay(replay_dir.c_str(), &out); s != FIREMED_OK) return report(s);
    print_json(take(out));
    return 0;
  }

  if (serve->parsed()) {
    const bool live = !live_config.empty();
    if (live == !serve_dir.empty()) {
      std::cerr << "serve takes either a run directory or --live <config>\n\n" << serve->help();
      return 2;
    }
    firemed_serve_options so{};
    so.source = live ? live_config.c_str() : serve_dir.c_str();
    so.live = live ? 1 : 0;
    so.runs_root = runs_root.c_str();
    so.bind = bind.c_str();
    so.port = port;
    so.stream_hz = hz;
    so.step_ms = step_ms;
    so.overrides = &ov;
    firemed_server* server = nullptr;
    if (const auto s = firemed_serve_start(&so, &server); s != FIREMED_OK) return report(s);
    unsigned short bound = 0;
    firemed_server_port(server, &bound);
    std::cout << "serving on http://" << bind << ":" << bound << "  (Ctrl-C to stop)" << std::endl;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    int finished = 0;
    while (!g_interrupted) {
      std::this_thread::sleep_for(std::chrono::milliseconds(100));
      firemed_server_finished(server, &finished);
      if (finished && live) break;
    }
    firemed_server_stop(server);
    return 0;
  }

  if (bench->parsed()) {
    char* out = nullptr;
    if (const auto s = firemed_bench_rewards(fixtures, bench_seed, &out); s != FIREMED_OK) return report(s);
    const auto r = nlohmann::json::parse(take(out));
    std::cout << r.dump(2) << "\n";
    return r.at("mismatches").get<int>() == 0 ? 0 : 1;
  }
  return 2;
}
