#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "recurrdrive/bev/render.hpp"
#include "recurrdrive/config.hpp"
#include "recurrdrive/eval/eval.hpp"
#include "recurrdrive/ppo/env.hpp"
#include "recurrdrive/ppo/trainer.hpp"

#ifndef RDN_VERSION
#define RDN_VERSION "0.1.0"
#endif

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

int threads_from_env() {
  const char* v = std::getenv("RECURRDRIVE_THREADS");
  if (!v || !*v) return 0;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n < 0) throw UsageError("RECURRDRIVE_THREADS must be a non-negative integer");
  return static_cast<int>(n);
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

// Checkpoints train() will write for a fresh run.
std::vector<std::int64_t> planned_checkpoints(const rdn::PpoConfig& ppo, std::int64_t start) {
  const std::int64_t segment = static_cast<std::int64_t>(ppo.n_envs) * ppo.rollout_len;
  std::vector<std::int64_t> out;
  std::int64_t next = (start / ppo.checkpoint_interval + 1) * ppo.checkpoint_interval;
  for (std::int64_t s = start + segment;; s += segment) {
    if (s >= next || s >= ppo.total_steps) {
      out.push_back(s);
      next = (s / ppo.checkpoint_interval + 1) * ppo.checkpoint_interval;
    }
    if (s >= ppo.total_steps) break;
  }
  return out;
}

struct TrainArgs {
  std::string config;
  std::uint64_t seed = 0;
  std::string out;
  std::int64_t steps = 0;
  std::string variant;
  std::string bev_mode;
  int image_size = 0;
  bool resume = false;
  bool quiet = false;
};

int run_train(const TrainArgs& a) {
  rdn::TrainConfig config = a.config.empty() ? rdn::TrainConfig{} : rdn::load_train_config(a.config);
  if (a.steps > 0) config.ppo.total_steps = a.steps;
  if (!a.variant.empty()) config.agent.variant = rdn::agent::parse_variant(a.variant);
  if (!a.bev_mode.empty()) config.agent.bev_mode = rdn::bev::parse_mode(a.bev_mode);
  if (a.image_size > 0) config.agent.image_size = a.image_size;
  config.ppo.validate();
  config.agent.validate();

  const fs::path out(a.out);
  fs::create_directories(out);
  std::int64_t start = 0;
  if (a.resume) {
    const fs::path latest = rdn::ppo::latest_checkpoint(out);
    if (!latest.empty()) start = rdn::nn::load_checkpoint(latest).metadata.at("steps").get<std::int64_t>();
  }
  std::vector<std::string> checkpoints;
  if (start < config.ppo.total_steps) {
    for (std::int64_t s : planned_checkpoints(config.ppo, start)) {
      checkpoints.push_back(fs::relative(rdn::ppo::checkpoint_path(out, s), out).string());
    }
  }
  const json manifest = {{"version", RDN_VERSION},
                         {"seed", a.seed},
                         {"start_time", utc_now()},
                         {"threads", threads_from_env()},
                         {"resumed_from_steps", start},
                         {"config", rdn::to_json(config)},
                         {"artifacts", {{"log", "train_log.csv"}, {"checkpoints", checkpoints}}}};
  write_json(out / "manifest.json", manifest);

  rdn::ppo::TrainOptions options;
  options.out_dir = out;
  options.seed = a.seed;
  options.threads = threads_from_env();
  options.resume = a.resume;
  if (!a.quiet) {
    options.on_log = [](const rdn::ppo::LogRow& row) { std::cerr << rdn::ppo::format_log_row(row) << '\n'; };
  }
  rdn::ppo::train(config, options);

  for (const std::string& rel : checkpoints) {
    if (!fs::exists(out / rel)) throw std::runtime_error("expected checkpoint missing: " + (out / rel).string());
  }
  if (!fs::exists(out / "train_log.csv")) throw std::runtime_error("training log missing");
  return 0;
}

struct EvalArgs {
  std::string checkpoint;
  std::int64_t steps = 320000;
  std::uint64_t seed = 0;
  std::string out;
};

int run_evaluate(const EvalArgs& a) {
  const rdn::ppo::LoadedAgent agent = rdn::ppo::load_agent(a.checkpoint);
  rdn::eval::EvalTrace trace;
  const rdn::eval::EvalMetrics m = rdn::eval::evaluate_checkpoint(agent, a.steps, a.seed, &trace);
  const fs::path out(a.out);
  fs::create_directories(out);
  rdn::eval::write_metrics_csv({m}, out / "metrics.csv");
  rdn::eval::write_event_log(trace, out / "events.csv");
  write_json(out / "metrics.json", {{"version", RDN_VERSION},
                                    {"checkpoint", a.checkpoint},
                                    {"checkpoint_steps", agent.steps},
                                    {"seed", a.seed},
                                    {"steps", a.steps},
                                    {"action_selection", "mode"},
                                    {"v_move_defined", m.v_move_defined},
                                    {"zero_distance", m.zero_distance},
                                    {"scenario", rdn::to_json(agent.config.scenario)}});
  std::cout << rdn::eval::kMetricsHeader << '\n' << rdn::eval::format_metrics_row(m) << '\n';
  return 0;
}

struct RenderArgs {
  std::string scenario;
  int ticks = 10;
  std::string mode = "multi";
  std::string out;
  std::uint64_t seed = 0;
  int size = 128;
};

void write_frame(const fs::path& dir, const rdn::bev::BevObservation& obs, std::int64_t index, std::int64_t tick) {
  char stem[32];
  std::snprintf(stem, sizeof(stem), "frame_%06lld", static_cast<long long>(index));
  if (obs.mode == rdn::bev::BevMode::kRgb) {
    std::ofstream f(dir / (std::string(stem) + ".ppm"), std::ios::binary | std::ios::trunc);
    f << "P6\n" << obs.size << ' ' << obs.size << "\n255\n";
    const std::size_t plane = static_cast<std::size_t>(obs.size) * obs.size;
    std::vector<unsigned char> pixels(plane * 3);
    for (std::size_t p = 0; p < plane; ++p) {
      for (std::size_t c = 0; c < 3; ++c) {
        pixels[p * 3 + c] = static_cast<unsigned char>(std::lround(obs.data[c * plane + p] * 255.0f));
      }
    }
    f.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
    if (!f) throw std::runtime_error("cannot write frame " + std::string(stem));
    return;
  }
  {
    std::ofstream f(dir / (std::string(stem) + ".f32"), std::ios::binary | std::ios::trunc);
    f.write(reinterpret_cast<const char*>(obs.data.data()), static_cast<std::streamsize>(obs.data.size() * sizeof(float)));
    if (!f) throw std::runtime_error("cannot write frame " + std::string(stem));
  }
  std::ofstream sidecar(dir / (std::string(stem) + ".json"), std::ios::trunc);
  sidecar << json{{"mode", rdn::bev::to_string(obs.mode)}, {"C", obs.channels}, {"K", obs.size}, {"tick", tick}}.dump()
          << '\n';
}

int run_render(const RenderArgs& a) {
  if (a.ticks < 1) throw UsageError("--ticks must be >= 1");
  rdn::ppo::EnvConfig env;
  env.scenario = a.scenario.empty() ? rdn::sim::ScenarioConfig{} : rdn::load_scenario(a.scenario);
  env.mode = rdn::bev::parse_mode(a.mode);
  env.render = rdn::bev::default_render_config(a.size);
  env.max_episode_ticks = 0;
  const fs::path out(a.out);
  fs::create_directories(out);
  const auto map = rdn::sim::make_map(env.scenario);
  rdn::ppo::DrivingEnv sim(env, map, a.seed);
  rdn::eval::CruiseDriver driver;
  for (int i = 0; i < a.ticks; ++i) {
    write_frame(out, sim.observation(), i, sim.world().tick);
    const rdn::ppo::EnvStep r = sim.step(driver.act(sim));
    if (r.events.terminated) sim.respawn();
    if (r.events.route_complete) sim.reset();
  }
  return 0;
}

int run_plot(const std::string& logs_dir, const std::string& out, std::int64_t bucket) {
  std::vector<fs::path> logs;
  if (!fs::is_directory(logs_dir)) throw std::runtime_error("not a directory: " + logs_dir);
  for (const auto& e : fs::recursive_directory_iterator(logs_dir)) {
    if (e.is_regular_file() && e.path().filename() == "train_log.csv") logs.push_back(e.path());
  }
  std::sort(logs.begin(), logs.end());
  if (logs.empty()) throw std::runtime_error("no train_log.csv under " + logs_dir);
  rdn::eval::export_return_curve(logs, out, bucket);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RecurrDriveNet: BEV driving micro-simulator and recurrent PPO trainer"};
  app.set_version_flag("--version", std::string(RDN_VERSION));
  app.require_subcommand(1);

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "train an agent");
  train_cmd->add_option("--config", train.config, "training config (TOML)")->check(CLI::ExistingFile);
  train_cmd->add_option("--seed", train.seed, "run seed");
  train_cmd->add_option("--out", train.out, "output directory")->required();
  train_cmd->add_option("--steps", train.steps, "override [ppo] total_steps");
  train_cmd->add_option("--variant", train.variant, "override [agent] variant (lstm|fs)");
  train_cmd->add_option("--bev-mode", train.bev_mode, "override [agent] bev_mode (rgb|gray|multi)");
  train_cmd->add_option("--image-size", train.image_size, "override [agent] image_size");
  train_cmd->add_flag("--resume", train.resume, "continue from the newest checkpoint in --out");
  train_cmd->add_flag("--quiet", train.quiet, "do not echo log rows");

  EvalArgs evaluate;
  auto* eval_cmd = app.add_subcommand("evaluate", "evaluate a checkpoint");
  eval_cmd->add_option("--checkpoint", evaluate.checkpoint, "checkpoint file")->required();
  eval_cmd->add_option("--steps", evaluate.steps, "simulation steps")->check(CLI::PositiveNumber);
  eval_cmd->add_option("--seed", evaluate.seed, "evaluation seed");
  eval_cmd->add_option("--out", evaluate.out, "output directory")->required();

  RenderArgs render;
  auto* render_cmd = app.add_subcommand("render", "dump BEV frames of a scripted drive");
  render_cmd->add_option("--scenario", render.scenario, "scenario config (TOML)")->check(CLI::ExistingFile);
  render_cmd->add_option("--ticks", render.ticks, "number of frames");
  render_cmd->add_option("--mode", render.mode, "rgb|gray|multi")->check(CLI::IsMember({"rgb", "gray", "multi"}));
  render_cmd->add_option("--out", render.out, "output directory")->required();
  render_cmd->add_option("--seed", render.seed, "world seed");
  render_cmd->add_option("--size", render.size, "image size K")->check(CLI::Range(36, 1024));

  std::string logs_dir, plot_out;
  std::int64_t bucket = 0;
  auto* plot_cmd = app.add_subcommand("plot", "aggregate training logs into a return curve CSV");
  plot_cmd->add_option("--logs", logs_dir, "directory searched for train_log.csv files")->required();
  plot_cmd->add_option("--out", plot_out, "output CSV")->required();
  plot_cmd->add_option("--bucket", bucket, "bucket width in steps (default: logging interval)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::CallForVersion&) {
    std::cout << RDN_VERSION << '\n';
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (*train_cmd) return run_train(train);
    if (*eval_cmd) return run_evaluate(evaluate);
    if (*render_cmd) return run_render(render);
    if (*plot_cmd) return run_plot(logs_dir, plot_out, bucket);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const rdn::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
