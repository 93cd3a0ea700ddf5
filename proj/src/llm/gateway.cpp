#include "llm/gateway.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <map>
#include <optional>
#include <regex>
#include <sstream>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "controllers/digest.hpp"
#include "controllers/tasks.hpp"
#include "core/error.hpp"

namespace firemed::llm {

namespace {

const char* purpose_name(Purpose p) { return p == Purpose::Strategy ? "strategy" : "mediator"; }

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

// Strategy section of a mediator prompt, or empty.
std::string embedded_strategy(const CompletionRequest& req) {
  for (auto it = req.messages.rbegin(); it != req.messages.rend(); ++it) {
    if (it->role != "user") continue;
    static const std::string kHead = "Strategy from the commander:";
    const auto b = it->content.find(kHead);
    if (b == std::string::npos) return {};
    auto e = it->content.find("\n\n", b);
    if (e == std::string::npos) e = it->content.size();
    return it->content.substr(b + kHead.size(), e - b - kHead.size());
  }
  return {};
}

// Follows explicit per-agent coordinates in a strategy: a sentence naming
// agents and one (x, y) sends those agents there; "everyone"/"all agents"
// sends the rest. Everyone left over goes to the nearest fire.
std::map<int, Vec2> strategy_targets(const std::string& strategy, int n_agents) {
  static const std::regex coord(R"(\(\s*(-?\d+(?:\.\d+)?)\s*,\s*(-?\d+(?:\.\d+)?)\s*\))");
  static const std::regex agent_ref(R"(\bagent\s+(\d+))", std::regex::icase);
  static const std::regex everyone(R"(\b(everyone|all agents|every agent|all planes)\b)",
                                   std::regex::icase);
  std::map<int, Vec2> out;
  std::size_t start = 0;
  while (start < strategy.size()) {
    auto end = strategy.find_first_of(".!?\n", start);
    // keep decimals inside coordinates together
    while (end != std::string::npos && strategy[end] == '.' && end + 1 < strategy.size() &&
           std::isdigit(static_cast<unsigned char>(strategy[end + 1])))
      end = strategy.find_first_of(".!?\n", end + 1);
    if (end == std::string::npos) end = strategy.size();
    const std::string sentence = strategy.substr(start, end - start);
    start = end + 1;
    std::smatch m;
    if (!std::regex_search(sentence, m, coord)) continue;
    const Vec2 target{std::stod(m[1].str()), std::stod(m[2].str())};
    bool named = false;
    for (auto it = std::sregex_iterator(sentence.begin(), sentence.end(), agent_ref);
         it != std::sregex_iterator(); ++it) {
      const int id = std::stoi((*it)[1].str());
      named = true;
      if (id >= 0 && id < n_agents) out.emplace(id, target);
    }
    if (!named && std::regex_search(sentence, everyone)) {
      for (int id = 0; id < n_agents; ++id) out.emplace(id, target);
    }
  }
  return out;
}

long long rounded(double v) { return std::llround(v); }

}  // namespace

void CompletionRequest::validate() const {
  if (messages.empty()) throw InputError("completion request has no messages");
  if (timeout.count() <= 0) throw InputError("completion timeout must be positive");
  if (retries < 0) throw InputError("retries must be >= 0");
  if (max_tokens < 1) throw InputError("max_tokens must be >= 1");
  if (!std::isfinite(temperature) || temperature < 0.0)
    throw InputError("temperature must be finite and >= 0");
}

std::vector<Message> to_messages(const controllers::PromptBundle& bundle) {
  std::vector<Message> out;
  if (!bundle.system_text.empty()) out.push_back({"system", bundle.system_text});
  for (const auto& shot : bundle.few_shot_examples) {
    out.push_back({"user", shot.input});
    out.push_back({"assistant", shot.output});
  }
  out.push_back({"user", bundle.user_text});
  return out;
}

std::string mock_mediate(const sim::WorldState& world) {
  const auto clusters = controllers::fire_clusters(world, world.config.spread_radius);
  if (clusters.empty()) return {};
  std::vector<mediation::TaskDirective> tasks;
  for (const auto& a : world.agents) {
    if (a.crashed) continue;
    tasks.push_back({a.id, clusters[controllers::nearest_cluster(clusters, a.position)].centroid});
  }
  return controllers::render_tasks(tasks);
}

std::string mock_strategy(const sim::WorldState& world) {
  const auto clusters = controllers::fire_clusters(world, world.config.spread_radius);
  if (clusters.empty()) return "There is nothing to do while no fire is burning.";
  std::ostringstream os;
  bool first = true;
  for (const auto& a : world.agents) {
    if (a.crashed) continue;
    const auto& c = clusters[controllers::nearest_cluster(clusters, a.position)];
    if (!first) os << ' ';
    first = false;
    os << "Agent " << a.id << " should " << (a.holding_water ? "fly straight" : "collect water and fly")
       << " to the fire at (" << rounded(c.centroid.x) << ", " << rounded(c.centroid.y) << ").";
  }
  return os.str();
}

std::string MockBackend::complete(const CompletionRequest& req) {
  req.validate();
  if (policy_ == MockPolicy::Silent) return {};
  if (policy_ == MockPolicy::Garbage) return "I am not able to produce a task list right now.";
  if (!req.context) throw InputError("mock backend needs the world the prompt was built from");
  const auto& world = *req.context;
  if (req.purpose == Purpose::Strategy) return mock_strategy(world);

  const std::string strategy = embedded_strategy(req);
  if (strategy.empty()) return mock_mediate(world);
  const auto chosen = strategy_targets(strategy, static_cast<int>(world.agents.size()));
  const auto clusters = controllers::fire_clusters(world, world.config.spread_radius);
  std::vector<mediation::TaskDirective> tasks;
  for (const auto& a : world.agents) {
    if (a.crashed) continue;
    if (auto it = chosen.find(a.id); it != chosen.end()) {
      tasks.push_back({a.id, it->second});
    } else if (!clusters.empty()) {
      tasks.push_back({a.id, clusters[controllers::nearest_cluster(clusters, a.position)].centroid});
    }
  }
  return controllers::render_tasks(tasks);
}

HttpConfig HttpConfig::from_env() {
  HttpConfig c;
  if (const char* e = std::getenv("FIREMED_LLM_ENDPOINT")) c.endpoint = e;
  if (const char* k = std::getenv("FIREMED_LLM_API_KEY")) c.api_key = k;
  if (c.endpoint.empty()) throw ConfigError("FIREMED_LLM_ENDPOINT is not set");
  return c;
}

HttpBackend::HttpBackend(HttpConfig config) : config_(std::move(config)) {
  static const std::regex url(R"(^(https?://[^/]+)(/.*)?$)", std::regex::icase);
  std::smatch m;
  if (!std::regex_match(config_.endpoint, m, url))
    throw ConfigError("malformed LLM endpoint: " + config_.endpoint);
  origin_ = m[1].str();
  path_ = m[2].matched ? m[2].str() : std::string("/v1/chat/completions");
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
  if (lower(origin_).rfind("https", 0) == 0)
    throw ConfigError("this build has no TLS support for " + origin_);
#endif
}

nlohmann::json request_body(const CompletionRequest& req) {
  nlohmann::json msgs = nlohmann::json::array();
  for (const auto& m : req.messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
  return {{"model", req.model},
          {"messages", std::move(msgs)},
          {"max_tokens", req.max_tokens},
          {"temperature", req.temperature}};
}

std::string completion_text(const nlohmann::json& response) {
  if (!response.is_object() || !response.contains("choices") || !response["choices"].is_array() ||
      response["choices"].empty())
    throw BackendError(200, "completion response has no choices");
  const auto& c = response["choices"][0];
  if (c.contains("message") && c["message"].contains("content") &&
      c["message"]["content"].is_string())
    return c["message"]["content"].get<std::string>();
  if (c.contains("text") && c["text"].is_string()) return c["text"].get<std::string>();
  throw BackendError(200, "completion choice has no text");
}

std::string HttpBackend::complete(const CompletionRequest& req) {
  req.validate();
  httplib::Client cli(origin_);
  const auto secs = std::chrono::duration_cast<std::chrono::microseconds>(req.timeout);
  cli.set_connection_timeout(secs);
  cli.set_read_timeout(secs);
  cli.set_write_timeout(secs);
  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);
  auto res = cli.Post(path_, headers, request_body(req).dump(), "application/json");
  if (!res) throw UnavailableError("LLM request failed: " + httplib::to_string(res.error()));
  if (res->status < 200 || res->status >= 300)
    throw BackendError(res->status, "LLM backend returned HTTP " + std::to_string(res->status));
  nlohmann::json body;
  try {
    body = nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception&) {
    throw BackendError(res->status, "LLM backend returned malformed JSON");
  }
  return completion_text(body);
}

Gateway::Gateway(std::unique_ptr<Backend> backend, std::filesystem::path audit_path)
    : backend_(std::move(backend)), audit_path_(std::move(audit_path)) {
  if (!backend_) throw ConfigError("gateway needs a backend");
  if (!audit_path_.empty()) {
    if (audit_path_.has_parent_path()) std::filesystem::create_directories(audit_path_.parent_path());
    audit_.open(audit_path_, std::ios::app);
    if (!audit_) throw IoError("cannot open audit log " + audit_path_.string());
  }
}

void Gateway::audit(const CompletionRequest& req, int attempt, const std::string* reply,
                    const char* error) {
  if (!audit_.is_open()) return;
  // The API key lives only in the backend and never reaches this record.
  nlohmann::json rec = {{"backend", backend_->name()},
                        {"purpose", purpose_name(req.purpose)},
                        {"attempt", attempt},
                        {"request", request_body(req)}};
  if (req.context) rec["step"] = req.context->step;
  if (reply) rec["reply"] = *reply;
  if (error) rec["error"] = error;
  audit_ << rec.dump() << '\n';
  audit_.flush();
}

std::string Gateway::complete(const CompletionRequest& req) {
  req.validate();
  {
    std::lock_guard lock(mu_);
    ++stats_.requests;
  }
  for (int attempt = 0;; ++attempt) {
    {
      std::lock_guard lock(mu_);
      ++stats_.attempts;
    }
    try {
      std::string reply = backend_->complete(req);
      std::lock_guard lock(mu_);
      audit(req, attempt, &reply, nullptr);
      return reply;
    } catch (const UnavailableError& e) {
      std::lock_guard lock(mu_);
      audit(req, attempt, nullptr, e.what());
      if (attempt >= req.retries) {
        ++stats_.failures;
        throw;
      }
      spdlog::warn("LLM attempt {} failed ({}); retrying", attempt + 1, e.what());
    } catch (const BackendError& e) {
      std::lock_guard lock(mu_);
      audit(req, attempt, nullptr, e.what());
      ++stats_.failures;
      throw;
    }
  }
}

GatewayStats Gateway::stats() const {
  std::lock_guard lock(mu_);
  return stats_;
}

}  // namespace firemed::llm
