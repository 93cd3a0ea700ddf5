#include <doctest.h>

#include <atomic>
#include <chrono>
#include <thread>

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <json.hpp>

#include "runtime/config.hpp"
#include "runtime/rollout.hpp"
#include "runtime/server.hpp"
#include "runtime/training.hpp"
#include "sim/snapshot.hpp"

// After Eigen: the resolver header pulled in here defines _res.
#include <httplib.h>

using namespace firemed;
using namespace firemed::runtime;
namespace fs = std::filesystem;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = boost::asio::ip::tcp;

namespace {

const fs::path kConfigs = fs::path(FIREMED_SOURCE_DIR) / "configs";

RunConfig desk(const std::string& preset) {
  auto c = load_config(kConfigs / "desk" / preset);
  c.extensions.tree_count = 150;
  c.extensions.seed = 3;
  return c;
}

// A session plus the feed and server wired the way `serve --live` does it.
struct Harness {
  RunConfig config;
  std::shared_ptr<HumanQueue> human = std::make_shared<HumanQueue>(4);
  std::unique_ptr<Session> session;
  std::shared_ptr<LiveFeed> feed;
  std::unique_ptr<OpsServer> server;
  ppo::PolicyParams params = ppo::PolicyParams::init(1);
  Rng rng{9};

  explicit Harness(RunConfig c) : config(std::move(c)) {
    SessionServices s;
    s.gateway = make_gateway(config);
    s.human = human;
    session = std::make_unique<Session>(config, s);
    feed = std::make_shared<LiveFeed>(config.intervention_type, human, std::chrono::milliseconds(0));
    server = std::make_unique<OpsServer>(feed);
    server->start();
  }
  ~Harness() {
    feed->close();
    server->stop();
  }

  StepOutcome step() {
    auto out = session->step(params, rng);
    feed->publish(*session);
    if (out.finished) feed->add_episode(*out.finished);
    return out;
  }

  httplib::Client client() const {
    httplib::Client c("127.0.0.1", server->port());
    c.set_read_timeout(5, 0);
    return c;
  }
};

httplib::Result post_text(httplib::Client& c, const std::string& text) {
  return c.Post("/intervention", nlohmann::json{{"text", text}}.dump(), "application/json");
}

}  // namespace

TEST_SUITE("server") {

TEST_CASE("state and metrics endpoints") {
  Harness h(desk("nl.yaml"));
  auto c = h.client();
  auto r = c.Get("/state");
  REQUIRE(r);
  CHECK(r->status == 503);

  h.feed->publish(*h.session, true);
  r = c.Get("/state");
  REQUIRE(r);
  CHECK(r->status == 200);
  CHECK(r->get_header_value("Content-Type").find("application/json") != std::string::npos);
  const auto j = nlohmann::json::parse(r->body);
  CHECK(j["schema"] == kFrameSchema);
  CHECK(j["intervention_type"] == "llm");
  const auto snap = sim::snapshot_from_json(j["snapshot"]);
  CHECK(sim::world_hash(snap) == sim::world_hash(h.session->world()));

  r = c.Get("/metrics");
  REQUIRE(r);
  CHECK(r->status == 200);
  auto m = nlohmann::json::parse(r->body);
  CHECK(m["episodes"].empty());
  CHECK(m["task_count"] == 0);

  EpisodeRecord rec;
  rec.config_name = "X";
  rec.episode_count = 1;
  h.feed->add_episode(rec);
  rec.episode_count = 2;
  h.feed->add_episode(rec);
  m = nlohmann::json::parse(c.Get("/metrics")->body);
  CHECK(m["episodes"].size() == 2);
  CHECK(m["episodes_total"] == 2);
  m = nlohmann::json::parse(c.Get("/metrics?since=1")->body);
  REQUIRE(m["episodes"].size() == 1);
  CHECK(record_from_json(m["episodes"][0]) == rec);

  CHECK(c.Get("/nowhere")->status == 404);
  CHECK(c.Get("/intervention")->status == 405);
  CHECK(c.Post("/state", "", "text/plain")->status == 405);
  CHECK(c.Get("/stream")->status == 426);
}

TEST_CASE("interventions are refused when nothing reads them") {
  Harness h(desk("none.yaml"));
  auto c = h.client();
  const auto r = post_text(c, "send everyone to the north fire");
  REQUIRE(r);
  CHECK(r->status == 409);
  CHECK(nlohmann::json::parse(r->body)["status"] == "rejected");
  CHECK(h.human->size() == 0);
}

TEST_CASE("malformed intervention bodies") {
  Harness h(desk("nl.yaml"));
  auto c = h.client();
  CHECK(c.Post("/intervention", "{not json", "application/json")->status == 400);
  CHECK(c.Post("/intervention", R"({"txt":"a"})", "application/json")->status == 400);
  CHECK(c.Post("/intervention", R"({"text":5})", "application/json")->status == 400);
  CHECK(c.Post("/intervention", R"(["text"])", "application/json")->status == 400);
  CHECK(post_text(c, "   ")->status == 400);
  CHECK(h.human->size() == 0);
}

TEST_CASE("human text drives the next scheduling point, later posts wait for the cooldown") {
  Harness h(desk("nl.yaml"));
  const int f = h.config.mediation_config().cooldown;
  h.feed->publish(*h.session, true);
  auto c = h.client();

  auto r = post_text(c, "Agent 0 go to (100, 100). Everyone else hold the village line at (-250, -100).");
  REQUIRE(r);
  CHECK(r->status == 202);
  CHECK(nlohmann::json::parse(r->body)["status"] == "accepted");
  CHECK(nlohmann::json::parse(c.Get("/metrics")->body)["pending"] == 1);

  // One scheduling point later the human plan is in force.
  const auto out = h.step();
  CHECK(out.interventions.source == "human");
  REQUIRE(out.interventions.issued.size() == 3);
  const auto* t0 = h.session->mediation().active_task(0);
  REQUIRE(t0 != nullptr);
  CHECK(t0->target == Vec2{100, 100});
  CHECK(h.session->mediation().active_task(1)->target == Vec2{-250, -100});
  auto m = nlohmann::json::parse(c.Get("/metrics")->body);
  CHECK(m["task_count"] == 3);
  CHECK(m["pending"] == 0);
  const auto st = nlohmann::json::parse(c.Get("/state")->body);
  CHECK(st["tasks"].size() == 3);

  // Agents are cooling down now.
  r = post_text(c, "Agent 2 go to (0, 300).");
  CHECK(r->status == 202);
  CHECK(nlohmann::json::parse(r->body)["status"] == "deferred");
  for (int i = 0; i < 3; ++i) CHECK(post_text(c, "more")->status == 202);
  r = post_text(c, "one too many");
  CHECK(r->status == 429);
  CHECK(nlohmann::json::parse(r->body)["status"] == "rejected");

  // The queued text is consumed no earlier than f steps after the first request.
  const auto first_request = h.session->audit().requests.front().step;
  std::int64_t second = -1;
  for (int i = 0; i < 3 * f && second < 0; ++i) {
    const auto o = h.step();
    if (o.interventions.source == "human") second = h.session->world().step - 1;
  }
  REQUIRE(second >= 0);
  CHECK(second - first_request >= f);
  CHECK(h.human->size() == 3);
}

TEST_CASE("websocket stream pushes frames at a bounded rate") {
  Harness h(desk("rb.yaml"));
  h.feed->publish(*h.session, true);
  std::atomic<bool> stop{false};
  std::thread loop([&] {
    while (!stop) {
      h.step();
      std::this_thread::sleep_for(std::chrono::milliseconds(2));
    }
  });

  boost::asio::io_context ioc;
  tcp::resolver resolver(ioc);
  websocket::stream<tcp::socket> ws(ioc);
  boost::asio::connect(ws.next_layer(), resolver.resolve("127.0.0.1", std::to_string(h.server->port())));
  ws.handshake("127.0.0.1", "/stream?hz=10");
  std::vector<nlohmann::json> frames;
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < 5; ++i) {
    beast::flat_buffer buf;
    ws.read(buf);
    frames.push_back(nlohmann::json::parse(beast::buffers_to_string(buf.data())));
  }
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  ws.close(websocket::close_code::normal);
  stop = true;
  loop.join();

  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto& fr = frames[i];
    CHECK(fr["schema"] == kFrameSchema);
    CHECK(fr["type"] == "frame");
    CHECK(fr["agents"].size() == 3);
    CHECK(fr["agents"][0].contains("holding_water"));
    CHECK(fr["trees"].get<std::string>().size() == 150);
    if (i > 0) CHECK(fr["seq"].get<std::uint64_t>() > frames[i - 1]["seq"].get<std::uint64_t>());
  }
  // Four gaps at no more than 10 Hz, with a little scheduling slack.
  CHECK(elapsed >= 0.35);
}

TEST_CASE("watching a run does not change it") {
  auto c = desk("rb.yaml");
  c.train_batch_size = 900;
  c.sgd_minibatch_size = 300;
  c.extensions.total_steps = 900;
  c.extensions.episode_length = 300;
  TrainOptions plain;
  plain.write_files = false;
  const auto a = run_training(c, plain);

  auto feed = std::make_shared<LiveFeed>(c.intervention_type, nullptr, std::chrono::milliseconds(0));
  OpsServer server(feed);
  server.start();
  std::atomic<bool> done{false};
  std::atomic<int> frames{0};
  std::thread watcher([&] {
    boost::asio::io_context ioc;
    tcp::resolver resolver(ioc);
    websocket::stream<tcp::socket> ws(ioc);
    boost::asio::connect(ws.next_layer(), resolver.resolve("127.0.0.1", std::to_string(server.port())));
    ws.handshake("127.0.0.1", "/stream");
    while (!done) {
      beast::flat_buffer buf;
      beast::error_code ec;
      ws.read(buf, ec);
      if (ec) break;
      ++frames;
    }
  });
  TrainOptions watched;
  watched.write_files = false;
  watched.on_step = [&](const Session& s, const StepOutcome& out) {
    feed->publish(s);
    if (out.finished) feed->add_episode(*out.finished);
    std::this_thread::sleep_for(std::chrono::microseconds(200));
  };
  const auto b = run_training(c, watched);
  done = true;
  feed->close();
  server.stop();
  watcher.join();
  CHECK(frames > 0);
  CHECK(a.metrics_hash == b.metrics_hash);
  CHECK(a.params == b.params);
}

}  // TEST_SUITE
