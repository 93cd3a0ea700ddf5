#include "controllers/tasks.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <optional>
#include <regex>
#include <set>

#include <spdlog/spdlog.h>

#include "core/error.hpp"

namespace firemed::controllers {

namespace {

const std::regex& line_grammar() {
  static const std::regex re(
      R"(agent\s*(\d+)\s*:\s*go\s+to\s*\(\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*,\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*\))",
      std::regex::icase | std::regex::ECMAScript | std::regex::optimize);
  return re;
}

std::string shortest(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::optional<double> number(std::string s) {
  if (!s.empty() && s.front() == '+') s.erase(0, 1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace

std::vector<mediation::TaskDirective> parse_tasks(std::string_view reply,
                                                  const sim::WorldState& world) {
  const double eh = world.config.env_half_extent;
  const auto n_agents = static_cast<int>(world.agents.size());
  std::vector<mediation::TaskDirective> out;
  std::set<int> seen;

  std::size_t pos = 0;
  while (pos <= reply.size()) {
    auto nl = reply.find('\n', pos);
    if (nl == std::string_view::npos) nl = reply.size();
    const std::string line(reply.substr(pos, nl - pos));
    pos = nl + 1;

    std::smatch m;
    if (!std::regex_search(line, m, line_grammar())) continue;
    const auto raw_id = number(m[1].str());
    const int id = raw_id && *raw_id < n_agents ? static_cast<int>(*raw_id) : -1;
    if (id < 0 || id >= n_agents || world.agents[static_cast<std::size_t>(id)].crashed) {
      spdlog::warn("reply names unknown agent {}; line ignored", m[1].str());
      continue;
    }
    if (!seen.insert(id).second) continue;
    const auto x = number(m[2].str());
    const auto y = number(m[3].str());
    if (!x || !y) {
      seen.erase(id);
      continue;
    }
    out.push_back({id, {std::clamp(*x, -eh, eh), std::clamp(*y, -eh, eh)}});
  }
  if (out.empty()) throw ParseError("no task lines found in mediator reply");
  return out;
}

std::string render_tasks(const std::vector<mediation::TaskDirective>& tasks) {
  std::string out;
  for (const auto& t : tasks) {
    out += "Agent " + std::to_string(t.agent_id) + ": go to (" + shortest(t.target.x) + ", " +
           shortest(t.target.y) + ")\n";
  }
  return out;
}

nlohmann::json tasks_to_json(const std::vector<mediation::TaskDirective>& tasks) {
  auto arr = nlohmann::json::array();
  for (const auto& t : tasks) arr.push_back({{"agent", t.agent_id}, {"x", t.target.x}, {"y", t.target.y}});
  return arr;
}

std::vector<mediation::TaskDirective> tasks_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw ParseError("task list must be a JSON array");
  std::vector<mediation::TaskDirective> out;
  for (const auto& e : j) {
    if (!e.is_object() || !e.contains("agent") || !e.contains("x") || !e.contains("y") ||
        !e["agent"].is_number_integer() || !e["x"].is_number() || !e["y"].is_number())
      throw ParseError("task entries need integer 'agent' and numeric 'x', 'y'");
    out.push_back({e["agent"].get<int>(), {e["x"].get<double>(), e["y"].get<double>()}});
  }
  return out;
}

}  // namespace firemed::controllers
