#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "controllers/prompts.hpp"
#include "sim/world.hpp"

namespace firemed::llm {

struct Message {
  std::string role;  // "system", "user" or "assistant"
  std::string content;
  bool operator==(const Message&) const = default;
};

enum class Purpose { Strategy, Mediator };

struct CompletionRequest {
  std::string model;
  std::vector<Message> messages;
  int max_tokens = 256;
  double temperature = 0.0;
  std::chrono::milliseconds timeout{20000};
  int retries = 2;
  Purpose purpose = Purpose::Mediator;
  // World the prompt was built from. Only the mock backend reads it; real
  // models see the rendered text.
  std::shared_ptr<const sim::WorldState> context;

  void validate() const;
};

// system, then each shot as a user/assistant pair, then the user text.
std::vector<Message> to_messages(const controllers::PromptBundle& bundle);

inline constexpr double kMediatorTemperature = 0.0;
inline constexpr double kStrategyTemperature = 0.7;

class Backend {
 public:
  virtual ~Backend() = default;
  // One attempt. Throws UnavailableError on timeout or connection failure and
  // BackendError on a non-2xx reply.
  virtual std::string complete(const CompletionRequest& req) = 0;
  virtual std::string name() const = 0;
};

enum class MockPolicy { NearestFire, Silent, Garbage };

// Deterministic stand-in: mediator requests get one task line per live agent,
// strategy requests get a short plan naming a fire per agent.
class MockBackend final : public Backend {
 public:
  explicit MockBackend(MockPolicy policy = MockPolicy::NearestFire) : policy_(policy) {}
  std::string complete(const CompletionRequest& req) override;
  std::string name() const override { return "mock"; }

 private:
  MockPolicy policy_;
};

struct HttpConfig {
  // e.g. http://127.0.0.1:8000/v1/chat/completions
  std::string endpoint;
  std::string api_key;  // sent as a bearer token when non-empty

  // FIREMED_LLM_ENDPOINT and FIREMED_LLM_API_KEY. Throws ConfigError when no
  // endpoint is set.
  static HttpConfig from_env();
};

// Chat-completions JSON over HTTP(S).
class HttpBackend final : public Backend {
 public:
  explicit HttpBackend(HttpConfig config);
  std::string complete(const CompletionRequest& req) override;
  std::string name() const override { return "http"; }

 private:
  HttpConfig config_;
  std::string origin_;
  std::string path_;
};

nlohmann::json request_body(const CompletionRequest& req);
// Reads choices[0].message.content, or choices[0].text. Throws BackendError.
std::string completion_text(const nlohmann::json& response);

// One task line per live agent toward the centroid of its nearest fire
// cluster; empty when there is no fire.
std::string mock_mediate(const sim::WorldState& world);

// Deterministic strategy text in the shape a commander would write.
std::string mock_strategy(const sim::WorldState& world);

struct GatewayStats {
  std::int64_t requests = 0;
  std::int64_t attempts = 0;
  std::int64_t failures = 0;
};

// Retries, counters and the audit trail around one backend.
class Gateway {
 public:
  explicit Gateway(std::unique_ptr<Backend> backend,
                   std::filesystem::path audit_path = {});

  // Retries timeouts up to req.retries times, then rethrows UnavailableError.
  // BackendError is not retried.
  std::string complete(const CompletionRequest& req);

  GatewayStats stats() const;
  const Backend& backend() const { return *backend_; }

 private:
  void audit(const CompletionRequest& req, int attempt, const std::string* reply,
             const char* error);

  std::unique_ptr<Backend> backend_;
  std::filesystem::path audit_path_;
  mutable std::mutex mu_;
  std::ofstream audit_;
  GatewayStats stats_;
};

}  // namespace firemed::llm
