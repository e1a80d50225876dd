#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "recurrdrive/agent/actor_critic.hpp"
#include "recurrdrive/config.hpp"
#include "recurrdrive/nn/adam.hpp"
#include "recurrdrive/nn/checkpoint.hpp"
#include "recurrdrive/ppo/env.hpp"
#include "recurrdrive/ppo/normalize.hpp"

namespace rdn::ppo {

inline constexpr const char* kTrainLogHeader = "steps,mean_return,policy_loss,value_loss,clip_frac,approx_kl";

struct LogRow {
  std::int64_t steps = 0;
  double mean_return = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double clip_frac = 0.0;
  double approx_kl = 0.0;
};

std::string format_log_row(const LogRow& row);
std::vector<LogRow> read_train_log(const std::filesystem::path& path);

struct TrainOptions {
  std::filesystem::path out_dir;
  std::uint64_t seed = 0;
  int threads = 0;      // 0: sequential reference mode
  bool resume = false;  // continue from the newest checkpoint in out_dir/checkpoints
  std::function<void(const LogRow&)> on_log;
};

struct TrainResult {
  std::int64_t steps = 0;
  std::vector<LogRow> rows;  // rows written by this invocation
  std::vector<std::filesystem::path> checkpoints;
  std::filesystem::path log_path;
};

agent::NetworkSpec network_spec(const AgentConfig& config);
EnvConfig env_config(const TrainConfig& config);

TrainResult train(const TrainConfig& config, const TrainOptions& options);

std::filesystem::path checkpoint_path(const std::filesystem::path& out_dir, std::int64_t steps);
// Newest checkpoint by step count; empty path when none exists.
std::filesystem::path latest_checkpoint(const std::filesystem::path& out_dir);

// A trained policy with the measurement statistics it was trained with.
struct LoadedAgent {
  TrainConfig config;
  std::unique_ptr<agent::ActorCritic<float>> net;
  RunningNorm measurement_norm{sim::EgoMeasurement::kSize};
  std::int64_t steps = 0;
  nlohmann::json metadata;
};

LoadedAgent load_agent(const std::filesystem::path& checkpoint);

// Parameter tensors under their layer names, plus optional optimizer moments.
nn::Checkpoint export_checkpoint(const agent::ActorCritic<float>& net, nn::Adam<float>* optimizer,
                                 nlohmann::json metadata);
void import_parameters(agent::ActorCritic<float>& net, const nn::Checkpoint& checkpoint);

}  // namespace rdn::ppo
