#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "mediation/mediation.hpp"
#include "sim/world.hpp"

namespace firemed::controllers {

// Reply grammar, one directive per line (case-insensitive, flexible spacing):
//   Agent <id>: go to (<x>, <y>)
// Other lines are ignored. Unknown agent ids are dropped, targets are clamped
// to the environment square and the first line for an agent wins. Throws
// ParseError when nothing usable remains.
std::vector<mediation::TaskDirective> parse_tasks(std::string_view reply,
                                                  const sim::WorldState& world);

std::string render_tasks(const std::vector<mediation::TaskDirective>& tasks);

// Wire form shared with the ops server: [{"agent": 0, "x": 1.0, "y": 2.0}, ...]
nlohmann::json tasks_to_json(const std::vector<mediation::TaskDirective>& tasks);
std::vector<mediation::TaskDirective> tasks_from_json(const nlohmann::json& j);

}  // namespace firemed::controllers
