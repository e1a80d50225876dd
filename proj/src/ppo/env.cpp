#include "recurrdrive/ppo/env.hpp"

#include <stdexcept>

namespace rdn::ppo {

DrivingEnv::DrivingEnv(EnvConfig config, std::shared_ptr<const sim::TownMap> map, std::uint64_t seed)
    : config_(std::move(config)), map_(std::move(map)), rng_(seed) {
  if (!map_) throw std::invalid_argument("DrivingEnv needs a map");
  reset();
}

void DrivingEnv::reset() {
  world_ = sim::make_world(map_, config_.scenario, rng_());
  episode_ticks_ = 0;
  observe();
}

void DrivingEnv::respawn() {
  sim::respawn_ego(world_);
  episode_ticks_ = 0;
  observe();
}

EnvStep DrivingEnv::step(double action) {
  sim::StepResult result = sim::step(world_, action);
  world_ = std::move(result.state);
  ++episode_ticks_;
  EnvStep out;
  out.reward = result.events.reward;
  out.terminated = result.events.terminated || result.events.route_complete;
  out.truncated = !out.terminated && config_.max_episode_ticks > 0 && episode_ticks_ >= config_.max_episode_ticks;
  out.events = std::move(result.events);
  observe();
  return out;
}

void DrivingEnv::observe() {
  observation_ = bev::rasterize(world_, config_.mode, config_.render);
  measurement_ = sim::ego_measurements(world_);
}

}  // namespace rdn::ppo
