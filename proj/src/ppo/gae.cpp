#include "ppo/gae.hpp"

#include <string>

#include "core/error.hpp"

namespace firemed::ppo {

GaeResult gae(std::span<const double> rewards, std::span<const double> values,
              std::span<const bool> dones, double last_value, double gamma, double lambda) {
  const auto n = rewards.size();
  if (values.size() != n || dones.size() != n)
    throw InputError("gae: rewards, values and dones differ in length (" + std::to_string(n) +
                     ", " + std::to_string(values.size()) + ", " + std::to_string(dones.size()) + ")");
  GaeResult r;
  r.advantages.assign(n, 0.0);
  r.returns.assign(n, 0.0);
  double running = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    const double next_value = k + 1 < n ? values[k + 1] : last_value;
    const double keep = dones[k] ? 0.0 : 1.0;
    const double delta = rewards[k] + gamma * next_value * keep - values[k];
    running = delta + gamma * lambda * keep * running;
    r.advantages[k] = running;
    r.returns[k] = running + values[k];
  }
  return r;
}

}  // namespace firemed::ppo
