#include "recurrdrive/ppo/gae.hpp"

#include <stdexcept>

namespace rdn::ppo {

GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values,
                      std::span<const std::uint8_t> dones, std::span<const double> bootstrap, int n_envs, int steps,
                      double gamma, double lambda) {
  const auto n = static_cast<std::size_t>(n_envs) * static_cast<std::size_t>(steps);
  if (rewards.size() != n || values.size() != n || dones.size() != n ||
      bootstrap.size() != static_cast<std::size_t>(n_envs)) {
    throw std::invalid_argument("compute_gae: arrays must be n_envs x steps");
  }
  GaeResult out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  for (int b = 0; b < n_envs; ++b) {
    const std::size_t base = static_cast<std::size_t>(b) * steps;
    double next_value = bootstrap[static_cast<std::size_t>(b)];
    double next_adv = 0.0;
    for (int t = steps - 1; t >= 0; --t) {
      const std::size_t i = base + static_cast<std::size_t>(t);
      const double live = dones[i] ? 0.0 : 1.0;
      const double delta = rewards[i] + gamma * next_value * live - values[i];
      next_adv = delta + gamma * lambda * live * next_adv;
      out.advantages[i] = next_adv;
      out.returns[i] = next_adv + values[i];
      next_value = values[i];
    }
  }
  return out;
}

}  // namespace rdn::ppo
