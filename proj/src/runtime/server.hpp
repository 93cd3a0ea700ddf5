#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <list>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include <json.hpp>

#include "runtime/config.hpp"
#include "runtime/rollout.hpp"
#include "runtime/telemetry.hpp"

namespace firemed::runtime {

inline constexpr int kFrameSchema = 1;

// What the server hands out. Built on the rollout thread, then shared
// read-only with every connection.
struct FeedState {
  std::uint64_t seq = 0;
  std::int64_t episode = 0;
  std::int64_t step = 0;
  std::string state_json;  // GET /state
  std::string frame_json;  // one /stream frame
};

struct SubmitResult {
  int http_status = 202;
  std::string status;  // "accepted", "deferred" or "rejected"
  std::string message;
};

// Single writer (the rollout loop), many readers (connections).
class LiveFeed {
 public:
  LiveFeed(InterventionType type, std::shared_ptr<HumanQueue> human,
           std::chrono::milliseconds min_rebuild = std::chrono::milliseconds(20));

  // Call after every env step. Cheap fields update every time; the JSON
  // documents are rebuilt at most once per min_rebuild unless forced.
  void publish(const Session& session, bool force = false);
  void add_episode(const EpisodeRecord& record);

  std::shared_ptr<const FeedState> latest() const;
  // Blocks until a state newer than `seq` exists or the timeout passes.
  std::shared_ptr<const FeedState> wait_newer(std::uint64_t seq,
                                              std::chrono::milliseconds timeout) const;
  nlohmann::json metrics(std::size_t since = 0) const;
  SubmitResult submit(const std::string& text);
  void close();  // wakes waiters for shutdown

  InterventionType intervention_type() const { return type_; }

 private:
  InterventionType type_;
  std::shared_ptr<HumanQueue> human_;
  std::chrono::milliseconds min_rebuild_;
  std::chrono::steady_clock::time_point last_build_{};

  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  std::shared_ptr<const FeedState> state_;
  std::deque<EpisodeRecord> episodes_;
  std::size_t episodes_dropped_ = 0;
  std::int64_t episode_ = 0;
  std::int64_t step_ = 0;
  std::int64_t task_count_ = 0;
  std::int64_t total_task_count_ = 0;
  bool armed_ = false;
  bool closed_ = false;
  std::uint64_t seq_ = 0;
};

nlohmann::json frame_json(const Session& session, std::uint64_t seq);
nlohmann::json state_json(const Session& session);

struct ServerOptions {
  std::string bind = "127.0.0.1";
  unsigned short port = 0;  // 0 picks a free port
  double stream_hz = 10.0;  // capped at 10
};

// HTTP + WebSocket front end over a LiveFeed:
//   GET  /state          latest snapshot
//   GET  /metrics        episode records and task counters (?since=N)
//   POST /intervention   {"text": "..."} queued as a human strategy
//   WS   /stream         frames at up to stream_hz (?hz=N lowers it)
class OpsServer {
 public:
  OpsServer(std::shared_ptr<LiveFeed> feed, ServerOptions options = {});
  ~OpsServer();
  OpsServer(const OpsServer&) = delete;
  OpsServer& operator=(const OpsServer&) = delete;

  void start();
  void stop();
  unsigned short port() const { return port_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  unsigned short port_ = 0;
};

}  // namespace firemed::runtime
