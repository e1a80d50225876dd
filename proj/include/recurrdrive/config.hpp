#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <nlohmann/json.hpp>
#include <stdexcept>
#include <string>
#include <variant>

#include "recurrdrive/agent/actor_critic.hpp"
#include "recurrdrive/bev/render.hpp"
#include "recurrdrive/sim/world.hpp"

namespace rdn {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Flat key/value table from a TOML subset: [section] headers, `key = value` lines with
// integers, floats, booleans and double-quoted strings, `#` comments. Keys are stored as
// "section.key" (or "key" before the first header).
using TomlValue = std::variant<std::int64_t, double, bool, std::string>;
using TomlTable = std::map<std::string, TomlValue>;

TomlTable parse_toml(const std::string& text);
TomlTable parse_toml_file(const std::filesystem::path& path);

struct PpoConfig {
  double gamma = 0.999;
  double clip_eps = 0.1;
  int rollout_len = 128;
  int n_envs = 4;
  std::int64_t total_steps = 1'000'000;
  double lambda = 0.95;
  int epochs = 4;
  double lr = 3e-4;
  double value_coef = 0.5;
  double entropy_coef = 0.0;
  double max_grad_norm = 0.5;
  bool normalize_advantages = true;
  std::int64_t checkpoint_interval = 50'000;
  int max_episode_ticks = 1000;

  void validate() const;
};

struct AgentConfig {
  agent::Variant variant = agent::Variant::kLstm;
  bev::BevMode bev_mode = bev::BevMode::kMulti;
  int image_size = 128;
  int frame_stack = 5;  // history length for the fs variant; the lstm variant always sees one frame

  int stack_length() const { return variant == agent::Variant::kFrameStack ? frame_stack : 1; }
  int input_channels() const { return bev::channel_count(bev_mode) * stack_length(); }
  void validate() const;
};

struct TrainConfig {
  sim::ScenarioConfig scenario;
  PpoConfig ppo;
  AgentConfig agent;
};

// Scenario keys may sit at the top level or under [sim].
sim::ScenarioConfig scenario_from_table(const TomlTable& table);
TrainConfig train_config_from_table(const TomlTable& table);
sim::ScenarioConfig load_scenario(const std::filesystem::path& path);
TrainConfig load_train_config(const std::filesystem::path& path);

const char* to_string(sim::Layout layout);
sim::Layout parse_layout(const std::string& name);

nlohmann::json to_json(const sim::ScenarioConfig& config);
nlohmann::json to_json(const PpoConfig& config);
nlohmann::json to_json(const AgentConfig& config);
nlohmann::json to_json(const TrainConfig& config);
sim::ScenarioConfig scenario_from_json(const nlohmann::json& j);
TrainConfig train_config_from_json(const nlohmann::json& j);

}  // namespace rdn
