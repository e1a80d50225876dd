#pragma once

#include <cstdint>
#include <memory>
#include <random>

#include "recurrdrive/bev/render.hpp"
#include "recurrdrive/sim/world.hpp"

namespace rdn::ppo {

struct EnvConfig {
  sim::ScenarioConfig scenario;
  bev::BevMode mode = bev::BevMode::kMulti;
  bev::RenderConfig render;
  int max_episode_ticks = 1000;  // 0: no time limit
};

struct EnvStep {
  double reward = 0.0;
  bool terminated = false;  // collision or a consumed dead-end route
  bool truncated = false;   // time limit
  sim::StepEvents events;

  bool done() const { return terminated || truncated; }
};

// One simulator instance with its current observation. Episodes are seeded from the env's own stream.
class DrivingEnv {
 public:
  DrivingEnv(EnvConfig config, std::shared_ptr<const sim::TownMap> map, std::uint64_t seed);

  // Starts a new episode in a freshly populated world.
  void reset();
  // Moves the ego to a new start in the current world; other actors keep going.
  void respawn();
  // Does not reset on episode end.
  EnvStep step(double action);

  const sim::WorldState& world() const { return world_; }
  const bev::BevObservation& observation() const { return observation_; }
  const sim::EgoMeasurement& measurement() const { return measurement_; }
  int episode_ticks() const { return episode_ticks_; }
  const EnvConfig& config() const { return config_; }

 private:
  void observe();

  EnvConfig config_;
  std::shared_ptr<const sim::TownMap> map_;
  std::mt19937_64 rng_;
  sim::WorldState world_;
  bev::BevObservation observation_;
  sim::EgoMeasurement measurement_;
  int episode_ticks_ = 0;
};

}  // namespace rdn::ppo
