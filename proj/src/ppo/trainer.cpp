#include "recurrdrive/ppo/trainer.hpp"

#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "recurrdrive/ppo/ppo.hpp"

namespace rdn::ppo {

namespace fs = std::filesystem;

std::string format_log_row(const LogRow& row) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%lld,%.9g,%.9g,%.9g,%.9g,%.9g", static_cast<long long>(row.steps),
                row.mean_return, row.policy_loss, row.value_loss, row.clip_frac, row.approx_kl);
  return buf;
}

std::vector<LogRow> read_train_log(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read training log " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kTrainLogHeader) {
    throw std::runtime_error(path.string() + ": not a training log (unexpected header)");
  }
  std::vector<LogRow> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    LogRow r;
    long long steps = 0;
    if (std::sscanf(line.c_str(), "%lld,%lf,%lf,%lf,%lf,%lf", &steps, &r.mean_return, &r.policy_loss, &r.value_loss,
                    &r.clip_frac, &r.approx_kl) != 6) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": malformed row");
    }
    r.steps = steps;
    rows.push_back(r);
  }
  return rows;
}

agent::NetworkSpec network_spec(const AgentConfig& config) {
  agent::NetworkSpec spec;
  spec.variant = config.variant;
  spec.in_channels = config.input_channels();
  spec.image_size = config.image_size;
  return spec;
}

EnvConfig env_config(const TrainConfig& config) {
  EnvConfig env;
  env.scenario = config.scenario;
  env.mode = config.agent.bev_mode;
  env.render = bev::default_render_config(config.agent.image_size);
  env.max_episode_ticks = config.ppo.max_episode_ticks;
  return env;
}

fs::path checkpoint_path(const fs::path& out_dir, std::int64_t steps) {
  char name[64];
  std::snprintf(name, sizeof(name), "step_%010lld.ckpt", static_cast<long long>(steps));
  return out_dir / "checkpoints" / name;
}

fs::path latest_checkpoint(const fs::path& out_dir) {
  const fs::path dir = out_dir / "checkpoints";
  if (!fs::is_directory(dir)) return {};
  fs::path best;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("step_", 0) != 0 || entry.path().extension() != ".ckpt") continue;
    if (best.empty() || name > best.filename().string()) best = entry.path();
  }
  return best;
}

nn::Checkpoint export_checkpoint(const agent::ActorCritic<float>& net, nn::Adam<float>* optimizer,
                                 nlohmann::json metadata) {
  nn::Checkpoint ckpt;
  ckpt.metadata = std::move(metadata);
  const auto params = net.parameters();
  for (const auto* p : params) ckpt.tensors.push_back({p->name, p->shape, p->value});
  if (optimizer) {
    for (std::size_t k = 0; k < params.size(); ++k) {
      ckpt.tensors.push_back({"adam.m/" + params[k]->name, params[k]->shape, optimizer->first_moments()[k]});
      ckpt.tensors.push_back({"adam.v/" + params[k]->name, params[k]->shape, optimizer->second_moments()[k]});
    }
    ckpt.metadata["adam_steps"] = optimizer->steps_taken();
  }
  return ckpt;
}

void import_parameters(agent::ActorCritic<float>& net, const nn::Checkpoint& checkpoint) {
  for (auto* p : net.parameters()) {
    const nn::NamedTensor& t = checkpoint.find(p->name);
    if (t.shape != p->shape) throw nn::CheckpointError("tensor '" + p->name + "' has the wrong shape");
    p->value = t.data;
  }
}

namespace {

void import_optimizer(nn::Adam<float>& optimizer, const agent::ActorCritic<float>& net, const nn::Checkpoint& ckpt) {
  const auto params = net.parameters();
  for (std::size_t k = 0; k < params.size(); ++k) {
    optimizer.first_moments()[k] = ckpt.find("adam.m/" + params[k]->name).data;
    optimizer.second_moments()[k] = ckpt.find("adam.v/" + params[k]->name).data;
  }
  optimizer.set_steps_taken(ckpt.metadata.at("adam_steps").get<std::int64_t>());
}

std::vector<DrivingEnv> make_envs(const TrainConfig& config, std::shared_ptr<const sim::TownMap> map,
                                  std::mt19937_64& seeds) {
  std::vector<DrivingEnv> envs;
  const EnvConfig env = env_config(config);
  for (int b = 0; b < config.ppo.n_envs; ++b) envs.emplace_back(env, map, seeds());
  return envs;
}

}  // namespace

TrainResult train(const TrainConfig& config, const TrainOptions& options) {
  config.ppo.validate();
  config.agent.validate();
  const PpoConfig& ppo = config.ppo;
  fs::create_directories(options.out_dir / "checkpoints");

  std::mt19937_64 master(options.seed);
  const std::uint64_t net_seed = master();
  const std::uint64_t collector_seed = master();
  const auto map = sim::make_map(config.scenario);

  const agent::NetworkSpec spec = network_spec(config.agent);
  agent::ActorCritic<float> net(spec, net_seed);
  nn::AdamConfig adam_config;
  adam_config.lr = ppo.lr;
  adam_config.max_grad_norm = ppo.max_grad_norm;
  nn::Adam<float> optimizer(net.parameters(), adam_config);

  std::int64_t steps = 0;
  TrainResult result;
  result.log_path = options.out_dir / "train_log.csv";
  std::vector<LogRow> previous_rows;
  nlohmann::json collector_state;

  const fs::path resume_from = options.resume ? latest_checkpoint(options.out_dir) : fs::path();
  if (!resume_from.empty()) {
    const nn::Checkpoint ckpt = nn::load_checkpoint(resume_from);
    if (ckpt.metadata.value("variant", "") != agent::to_string(config.agent.variant) ||
        ckpt.metadata.value("bev_mode", "") != bev::to_string(config.agent.bev_mode)) {
      throw TrainingError("checkpoint " + resume_from.string() + " was trained with a different agent configuration");
    }
    import_parameters(net, ckpt);
    import_optimizer(optimizer, net, ckpt);
    steps = ckpt.metadata.at("steps").get<std::int64_t>();
    collector_state = ckpt.metadata.at("collector");
    if (fs::exists(result.log_path)) {
      for (const LogRow& r : read_train_log(result.log_path)) {
        if (r.steps <= steps) previous_rows.push_back(r);
      }
    }
    // Worlds cannot be restored from a checkpoint; resumed runs start fresh episodes.
    master.seed(options.seed ^ (0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(steps)));
  }

  Collector collector(make_envs(config, map, master), config.agent.stack_length(), spec.hidden_size, ppo.gamma,
                      collector_seed);
  collector.set_threads(options.threads);
  if (!collector_state.is_null()) collector.load_state_json(collector_state);

  {
    std::ofstream log(result.log_path, std::ios::trunc);
    if (!log) throw std::runtime_error("cannot write " + result.log_path.string());
    log << kTrainLogHeader << '\n';
    for (const LogRow& r : previous_rows) log << format_log_row(r) << '\n';
  }
  std::ofstream log(result.log_path, std::ios::app);

  auto save = [&](std::int64_t at_steps) {
    nlohmann::json meta = {{"kind", "recurrdrive-agent"},
                           {"variant", agent::to_string(config.agent.variant)},
                           {"bev_mode", bev::to_string(config.agent.bev_mode)},
                           {"image_size", config.agent.image_size},
                           {"frame_stack", config.agent.stack_length()},
                           {"steps", at_steps},
                           {"seed", options.seed},
                           {"config", to_json(config)},
                           {"collector", collector.state_json()}};
    const fs::path path = checkpoint_path(options.out_dir, at_steps);
    nn::save_checkpoint(path, export_checkpoint(net, &optimizer, std::move(meta)));
    result.checkpoints.push_back(path);
  };

  const std::int64_t segment = static_cast<std::int64_t>(ppo.n_envs) * ppo.rollout_len;
  std::int64_t next_checkpoint = (steps / ppo.checkpoint_interval + 1) * ppo.checkpoint_interval;
  RolloutBuffer buffer;
  while (steps < ppo.total_steps) {
    collector.collect(net, ppo.rollout_len, buffer);
    steps += segment;
    buffer.compute_advantages(ppo.gamma, ppo.lambda);
    const UpdateStats stats = ppo_update(net, optimizer, buffer, ppo);
    const LogRow row{steps, collector.mean_episode_return(), stats.policy_loss, stats.value_loss, stats.clip_frac,
                     stats.approx_kl};
    log << format_log_row(row) << '\n';
    log.flush();
    result.rows.push_back(row);
    if (options.on_log) options.on_log(row);
    if (steps >= next_checkpoint || steps >= ppo.total_steps) {
      save(steps);
      next_checkpoint = (steps / ppo.checkpoint_interval + 1) * ppo.checkpoint_interval;
    }
  }
  result.steps = steps;
  return result;
}

LoadedAgent load_agent(const fs::path& checkpoint) {
  if (!fs::exists(checkpoint)) throw nn::CheckpointError("checkpoint not found: " + checkpoint.string());
  const nn::Checkpoint ckpt = nn::load_checkpoint(checkpoint);
  LoadedAgent loaded;
  try {
    if (ckpt.metadata.value("kind", "") != "recurrdrive-agent") {
      throw nn::CheckpointError(checkpoint.string() + " is not an agent checkpoint");
    }
    loaded.config = train_config_from_json(ckpt.metadata.at("config"));
    loaded.steps = ckpt.metadata.at("steps").get<std::int64_t>();
    loaded.measurement_norm = RunningNorm::from_json(ckpt.metadata.at("collector").at("measurement_norm"));
  } catch (const nlohmann::json::exception& e) {
    throw nn::CheckpointError(checkpoint.string() + ": incomplete metadata (" + e.what() + ")");
  }
  loaded.metadata = ckpt.metadata;
  loaded.net = std::make_unique<agent::ActorCritic<float>>(network_spec(loaded.config.agent), 0);
  import_parameters(*loaded.net, ckpt);
  return loaded;
}

}  // namespace rdn::ppo
