#pragma once

#include <span>
#include <vector>

namespace firemed::ppo {

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;  // advantages + values
};

// dones[t] marks that the episode ended with step t, so nothing is
// bootstrapped across it. `last_value` is V(s_T) for a sequence cut short.
GaeResult gae(std::span<const double> rewards, std::span<const double> values,
              std::span<const bool> dones, double last_value, double gamma, double lambda);

}  // namespace firemed::ppo
