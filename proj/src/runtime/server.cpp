#include "runtime/server.hpp"

#include <algorithm>
#include <charconv>

#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <spdlog/spdlog.h>

#include "core/error.hpp"
#include "sim/snapshot.hpp"

namespace firemed::runtime {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

namespace {

constexpr std::size_t kKeptEpisodes = 1000;
constexpr std::size_t kBodyLimit = 64 * 1024;

nlohmann::json tasks_json(const mediation::MediationState& med) {
  auto out = nlohmann::json::array();
  for (int id = 0; id < med.agent_count(); ++id) {
    if (const auto* t = med.active_task(id))
      out.push_back({{"agent", t->agent_id},
                     {"x", t->target.x},
                     {"y", t->target.y},
                     {"issued_step", t->issued_step},
                     {"deadline", t->deadline}});
  }
  return out;
}

}  // namespace

nlohmann::json frame_json(const Session& session, std::uint64_t seq) {
  const auto& w = session.world();
  auto agents = nlohmann::json::array();
  for (const auto& a : w.agents)
    agents.push_back({{"id", a.id},
                      {"x", a.position.x},
                      {"y", a.position.y},
                      {"dx", a.direction.x},
                      {"dy", a.direction.y},
                      {"holding_water", a.holding_water},
                      {"crashed", a.crashed}});
  std::string raster(w.trees.size(), '?');
  for (std::size_t i = 0; i < w.trees.size(); ++i) raster[i] = sim::tree_state_code(w.trees[i].state);
  return {{"schema", kFrameSchema},
          {"type", "frame"},
          {"seq", seq},
          {"episode", session.episode_index()},
          {"step", w.step},
          {"terminal", w.terminal},
          {"agents", std::move(agents)},
          {"trees", std::move(raster)},
          {"counts",
           {{"alive", w.count(sim::TreeState::Alive)},
            {"wet", w.count(sim::TreeState::Wet)},
            {"burning", w.count(sim::TreeState::Burning)},
            {"extinguished", w.count(sim::TreeState::Extinguished)},
            {"burned_out", w.count(sim::TreeState::BurnedOut)}}},
          {"tasks", tasks_json(session.mediation())},
          {"task_count", session.current_task_count()},
          {"total_task_count", session.total_tasks() + session.current_task_count()}};
}

nlohmann::json state_json(const Session& session) {
  return {{"schema", kFrameSchema},
          {"episode", session.episode_index()},
          {"intervention_type", to_string(session.config().intervention_type)},
          {"tasks", tasks_json(session.mediation())},
          {"snapshot", sim::snapshot_to_json(session.world())}};
}

LiveFeed::LiveFeed(InterventionType type, std::shared_ptr<HumanQueue> human,
                   std::chrono::milliseconds min_rebuild)
    : type_(type), human_(std::move(human)), min_rebuild_(min_rebuild) {}

void LiveFeed::publish(const Session& session, bool force) {
  const auto& med = session.mediation();
  const bool armed = !med.requesting_agents(session.world().step).empty() && !med.request_outstanding();
  const auto now = std::chrono::steady_clock::now();
  std::shared_ptr<FeedState> built;
  if (force || !state_ || now - last_build_ >= min_rebuild_ || session.world().terminal) {
    last_build_ = now;
    built = std::make_shared<FeedState>();
    built->seq = seq_ + 1;
    built->episode = session.episode_index();
    built->step = session.world().step;
    built->state_json = state_json(session).dump();
    built->frame_json = frame_json(session, built->seq).dump();
  }
  {
    std::lock_guard lock(mu_);
    episode_ = session.episode_index();
    step_ = session.world().step;
    task_count_ = session.current_task_count();
    total_task_count_ = session.total_tasks() + session.current_task_count();
    armed_ = armed;
    if (built) {
      seq_ = built->seq;
      state_ = std::move(built);
    }
  }
  cv_.notify_all();
}

void LiveFeed::add_episode(const EpisodeRecord& record) {
  std::lock_guard lock(mu_);
  episodes_.push_back(record);
  while (episodes_.size() > kKeptEpisodes) {
    episodes_.pop_front();
    ++episodes_dropped_;
  }
}

std::shared_ptr<const FeedState> LiveFeed::latest() const {
  std::lock_guard lock(mu_);
  return state_;
}

std::shared_ptr<const FeedState> LiveFeed::wait_newer(std::uint64_t seq,
                                                      std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mu_);
  cv_.wait_for(lock, timeout, [&] { return closed_ || (state_ && state_->seq > seq); });
  return state_;
}

nlohmann::json LiveFeed::metrics(std::size_t since) const {
  std::lock_guard lock(mu_);
  auto eps = nlohmann::json::array();
  const std::size_t first = std::max(since, episodes_dropped_);
  for (std::size_t i = first; i < episodes_dropped_ + episodes_.size(); ++i)
    eps.push_back(to_json(episodes_[i - episodes_dropped_]));
  return {{"schema", kMetricsSchema},
          {"episodes", std::move(eps)},
          {"episodes_total", episodes_dropped_ + episodes_.size()},
          {"episode", episode_},
          {"step", step_},
          {"task_count", task_count_},
          {"total_task_count", total_task_count_},
          {"pending", human_ ? human_->size() : 0},
          {"intervention_type", to_string(type_)}};
}

SubmitResult LiveFeed::submit(const std::string& text) {
  if (type_ == InterventionType::None || !human_)
    return {409, "rejected", "this run has intervention_type \"none\"; nothing reads human input"};
  bool ready;
  {
    std::lock_guard lock(mu_);
    ready = armed_;
  }
  ready = ready && human_->size() == 0;
  if (!human_->push(text)) return {429, "rejected", "intervention queue is full"};
  if (ready) return {202, "accepted", "queued for the next scheduling point"};
  return {202, "deferred", "agents are cooling down; queued until the next scheduling point"};
}

void LiveFeed::close() {
  {
    std::lock_guard lock(mu_);
    closed_ = true;
  }
  cv_.notify_all();
}

struct OpsServer::Impl {
  std::shared_ptr<LiveFeed> feed;
  ServerOptions options;
  asio::io_context ioc;
  std::optional<tcp::acceptor> acceptor;
  std::thread accept_thread;
  std::atomic<bool> stopping{false};

  struct Conn {
    std::shared_ptr<tcp::socket> socket;
    std::thread thread;
    std::shared_ptr<std::atomic<bool>> done;
  };
  std::mutex conns_mu;
  std::list<Conn> conns;

  void do_accept() {
    acceptor->async_accept([this](beast::error_code ec, tcp::socket sock) {
      if (ec || stopping) return;
      auto s = std::make_shared<tcp::socket>(std::move(sock));
      auto done = std::make_shared<std::atomic<bool>>(false);
      {
        std::lock_guard lock(conns_mu);
        for (auto it = conns.begin(); it != conns.end();) {
          if (*it->done) {
            it->thread.join();
            it = conns.erase(it);
          } else {
            ++it;
          }
        }
        conns.push_back({s, std::thread([this, s, done] {
                           serve_connection(*s);
                           *done = true;
                         }),
                         done});
      }
      do_accept();
    });
  }

  using Response = http::response<http::string_body>;

  static Response json_response(unsigned version, bool keep_alive, http::status status,
                                const std::string& body) {
    Response res{status, version};
    res.set(http::field::content_type, "application/json");
    res.set(http::field::access_control_allow_origin, "*");
    res.keep_alive(keep_alive);
    res.body() = body;
    res.prepare_payload();
    return res;
  }

  static std::string error_body(const std::string& status, const std::string& message) {
    return nlohmann::json{{"status", status}, {"error", message}}.dump();
  }

  static std::pair<std::string, std::string> split_target(std::string_view target) {
    const auto q = target.find('?');
    if (q == std::string_view::npos) return {std::string(target), {}};
    return {std::string(target.substr(0, q)), std::string(target.substr(q + 1))};
  }

  static std::optional<double> query_number(const std::string& query, const std::string& key) {
    std::size_t pos = 0;
    while (pos < query.size()) {
      auto amp = query.find('&', pos);
      if (amp == std::string::npos) amp = query.size();
      const auto part = std::string_view(query).substr(pos, amp - pos);
      if (part.substr(0, key.size() + 1) == key + "=") {
        double v = 0;
        const auto num = part.substr(key.size() + 1);
        const auto r = std::from_chars(num.data(), num.data() + num.size(), v);
        if (r.ec == std::errc() && r.ptr == num.data() + num.size()) return v;
        return std::nullopt;
      }
      pos = amp + 1;
    }
    return std::nullopt;
  }

  Response route(const http::request<http::string_body>& req) {
    const auto [path, query] = split_target(std::string_view(req.target().data(), req.target().size()));
    const auto v = req.version();
    const bool ka = req.keep_alive();
    if (req.method() == http::verb::options) {
      Response res{http::status::no_content, v};
      res.set(http::field::access_control_allow_origin, "*");
      res.set(http::field::access_control_allow_methods, "GET, POST, OPTIONS");
      res.set(http::field::access_control_allow_headers, "Content-Type");
      res.keep_alive(ka);
      res.prepare_payload();
      return res;
    }
    if (path == "/state") {
      if (req.method() != http::verb::get)
        return json_response(v, ka, http::status::method_not_allowed, error_body("error", "use GET"));
      const auto s = feed->latest();
      if (!s)
        return json_response(v, ka, http::status::service_unavailable,
                             error_body("error", "no state published yet"));
      return json_response(v, ka, http::status::ok, s->state_json);
    }
    if (path == "/metrics") {
      if (req.method() != http::verb::get)
        return json_response(v, ka, http::status::method_not_allowed, error_body("error", "use GET"));
      const auto since = query_number(query, "since").value_or(0.0);
      return json_response(v, ka, http::status::ok,
                           feed->metrics(static_cast<std::size_t>(std::max(0.0, since))).dump());
    }
    if (path == "/intervention") {
      if (req.method() != http::verb::post)
        return json_response(v, ka, http::status::method_not_allowed, error_body("error", "use POST"));
      if (feed->intervention_type() == InterventionType::None)
        return json_response(v, ka, http::status::conflict,
                             error_body("rejected", feed->submit("").message));
      std::string text;
      try {
        const auto j = nlohmann::json::parse(req.body());
        if (!j.is_object() || !j.contains("text") || !j.at("text").is_string())
          return json_response(v, ka, http::status::bad_request,
                               error_body("rejected", "body must be {\"text\": string}"));
        text = j.at("text").get<std::string>();
      } catch (const nlohmann::json::exception&) {
        return json_response(v, ka, http::status::bad_request,
                             error_body("rejected", "body is not valid JSON"));
      }
      if (text.find_first_not_of(" \t\r\n") == std::string::npos)
        return json_response(v, ka, http::status::bad_request,
                             error_body("rejected", "text is empty"));
      const auto r = feed->submit(text);
      nlohmann::json body{{"status", r.status}, {"message", r.message}};
      if (r.http_status >= 400) body["error"] = r.message;
      return json_response(v, ka, static_cast<http::status>(r.http_status), body.dump());
    }
    if (path == "/stream")
      return json_response(v, ka, http::status::upgrade_required,
                           error_body("error", "/stream is a WebSocket endpoint"));
    return json_response(v, ka, http::status::not_found, error_body("error", "no such endpoint"));
  }

  void stream(tcp::socket& sock, const http::request<http::string_body>& req) {
    const auto [path, query] = split_target(std::string_view(req.target().data(), req.target().size()));
    double hz = std::min(10.0, options.stream_hz);
    if (const auto q = query_number(query, "hz"); q && *q > 0) hz = std::min(hz, *q);
    const auto period = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
        std::chrono::duration<double>(1.0 / hz));

    websocket::stream<tcp::socket&> ws(sock);
    beast::error_code ec;
    ws.accept(req, ec);
    if (ec) return;
    ws.text(true);
    std::uint64_t sent = 0;
    auto next = std::chrono::steady_clock::now();
    while (!stopping) {
      // Client messages are read and dropped; reading also answers pings and
      // completes a close handshake.
      if (sock.available(ec) > 0 && !ec) {
        beast::flat_buffer in;
        ws.read(in, ec);
        if (ec) return;
      }
      if (ec) return;
      const auto s = feed->wait_newer(sent, std::chrono::milliseconds(100));
      if (stopping) break;
      if (!s || s->seq <= sent) continue;
      const auto now = std::chrono::steady_clock::now();
      if (now < next) {
        std::this_thread::sleep_for(next - now);
        continue;  // pick up whatever is newest after the pause
      }
      ws.write(asio::buffer(s->frame_json), ec);
      if (ec) return;
      sent = s->seq;
      next = std::chrono::steady_clock::now() + period;
    }
    ws.close(websocket::close_code::going_away, ec);
  }

  void serve_connection(tcp::socket& sock) {
    beast::flat_buffer buffer;
    beast::error_code ec;
    while (!stopping) {
      http::request_parser<http::string_body> parser;
      parser.body_limit(kBodyLimit);
      http::read(sock, buffer, parser, ec);
      if (ec == http::error::body_limit) {
        auto res = json_response(11, false, http::status::payload_too_large,
                                 error_body("rejected", "body too large"));
        http::write(sock, res, ec);
        break;
      }
      if (ec) break;
      auto req = parser.release();
      const auto path = split_target(std::string_view(req.target().data(), req.target().size())).first;
      if (websocket::is_upgrade(req) && path == "/stream") {
        stream(sock, req);
        break;
      }
      Response res;
      try {
        res = route(req);
      } catch (const std::exception& e) {
        res = json_response(req.version(), false, http::status::internal_server_error,
                            error_body("error", e.what()));
      }
      http::write(sock, res, ec);
      if (ec || !res.keep_alive()) break;
    }
    sock.shutdown(tcp::socket::shutdown_both, ec);
  }
};

OpsServer::OpsServer(std::shared_ptr<LiveFeed> feed, ServerOptions options)
    : impl_(std::make_unique<Impl>()) {
  if (!feed) throw InputError("server needs a feed");
  impl_->feed = std::move(feed);
  impl_->options = std::move(options);
}

OpsServer::~OpsServer() { stop(); }

void OpsServer::start() {
  auto& im = *impl_;
  if (im.acceptor) throw StateError("server already started");
  beast::error_code ec;
  const auto addr = asio::ip::make_address(im.options.bind, ec);
  if (ec) throw ConfigError("bad bind address '" + im.options.bind + "'");
  im.acceptor.emplace(im.ioc);
  const tcp::endpoint ep(addr, im.options.port);
  im.acceptor->open(ep.protocol(), ec);
  if (!ec) im.acceptor->set_option(asio::socket_base::reuse_address(true), ec);
  if (!ec) im.acceptor->bind(ep, ec);
  if (!ec) im.acceptor->listen(asio::socket_base::max_listen_connections, ec);
  if (ec) {
    im.acceptor.reset();
    throw IoError("cannot listen on " + im.options.bind + ":" + std::to_string(im.options.port) +
                  ": " + ec.message());
  }
  port_ = im.acceptor->local_endpoint().port();
  im.do_accept();
  im.accept_thread = std::thread([&im] { im.ioc.run(); });
  spdlog::info("ops server listening on {}:{}", im.options.bind, port_);
}

void OpsServer::stop() {
  auto& im = *impl_;
  if (!im.acceptor || im.stopping.exchange(true)) return;
  asio::post(im.ioc, [&im] {
    beast::error_code ec;
    im.acceptor->close(ec);
  });
  im.ioc.stop();
  if (im.accept_thread.joinable()) im.accept_thread.join();
  std::list<Impl::Conn> conns;
  {
    std::lock_guard lock(im.conns_mu);
    conns.swap(im.conns);
  }
  for (auto& c : conns) {
    beast::error_code ec;
    c.socket->shutdown(tcp::socket::shutdown_both, ec);
  }
  for (auto& c : conns)
    if (c.thread.joinable()) c.thread.join();
}

}  // namespace firemed::runtime
