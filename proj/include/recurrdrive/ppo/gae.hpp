#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace rdn::ppo {

// Arrays are env-major: element (b, t) at b * steps + t. `bootstrap` holds V(s_T) per env.
//   delta_t = r_t + gamma * V_{t+1} * (1 - done_t) - V_t
//   A_t     = delta_t + gamma * lambda * (1 - done_t) * A_{t+1}
//   R_t     = A_t + V_t
struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values,
                      std::span<const std::uint8_t> dones, std::span<const double> bootstrap, int n_envs, int steps,
                      double gamma, double lambda);

}  // namespace rdn::ppo
