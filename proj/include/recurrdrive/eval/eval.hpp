#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "recurrdrive/bev/render.hpp"
#include "recurrdrive/ppo/env.hpp"
#include "recurrdrive/ppo/trainer.hpp"
#include "recurrdrive/sim/world.hpp"

namespace rdn::eval {

class EvalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EvalEvent {
  std::int64_t tick = 0;
  sim::InfractionType type = sim::InfractionType::kVehicleCollision;
  double x = 0.0;
  double y = 0.0;
};

// Everything the metrics depend on: one (speed, limit) pair per evaluated step and the infractions.
struct EvalTrace {
  std::vector<double> speeds;
  std::vector<double> speed_limits;
  std::vector<EvalEvent> events;
};

struct EvalMetrics {
  std::string variant;
  std::string bev_mode;
  std::uint64_t seed = 0;
  std::int64_t steps = 0;
  double km = 0.0;
  double i_veh = 0.0;
  double i_ped = 0.0;
  double i_red = 0.0;
  double i_sum = 0.0;
  double v_lim_dev_pct = 0.0;
  double v_move = 0.0;
  bool v_move_defined = true;  // false when no step moved faster than the threshold
  bool zero_distance = false;  // nothing driven and nothing happened: rates reported as 0
};

inline constexpr double kMovingThreshold = 0.2;

// Pure function of the trace. Throws EvalError when infractions occurred over zero distance.
EvalMetrics compute_metrics(const EvalTrace& trace);

// Longitudinal controller driven through an environment.
class Driver {
 public:
  virtual ~Driver() = default;
  // Called at the start of every episode and after every respawn.
  virtual void reset() = 0;
  virtual double act(const ppo::DrivingEnv& env) = 0;
};

// Trained agent acting with the distribution mode tanh(mean). Normalization statistics are frozen.
class AgentDriver : public Driver {
 public:
  explicit AgentDriver(const ppo::LoadedAgent& agent);
  void reset() override;
  double act(const ppo::DrivingEnv& env) override;

 private:
  const ppo::LoadedAgent& agent_;
  bev::FrameStack frames_;
  agent::RecurrentState<float> state_;
};

// Always applies the same action.
class ConstantDriver : public Driver {
 public:
  explicit ConstantDriver(double action) : action_(action) {}
  void reset() override {}
  double act(const ppo::DrivingEnv&) override { return action_; }

 private:
  double action_;
};

// Scripted cruise control: tracks a fraction of the speed limit and brakes for red and yellow lights.
class CruiseDriver : public Driver {
 public:
  explicit CruiseDriver(double speed_fraction = 0.8) : fraction_(speed_fraction) {}
  void reset() override {}
  double act(const ppo::DrivingEnv& env) override;

 private:
  double fraction_;
};

// Continuous driving for `steps` ticks. A collision respawns the ego in the same world, a consumed
// dead-end route starts a new world; counters never reset.
EvalTrace run_evaluation(Driver& driver, ppo::EnvConfig env, const std::shared_ptr<const sim::TownMap>& map,
                         std::int64_t steps, std::uint64_t seed);

// Evaluates a checkpoint in the scenario it was trained on.
EvalMetrics evaluate_checkpoint(const ppo::LoadedAgent& agent, std::int64_t steps, std::uint64_t seed,
                                EvalTrace* trace_out = nullptr);

struct EpisodeOutcome {
  int infractions = 0;
  double distance = 0.0;
  int ticks = 0;
  bool route_complete = false;
};

// Independent episodes, each ending on collision, route completion or the env's time limit.
std::vector<EpisodeOutcome> run_episodes(Driver& driver, ppo::EnvConfig env,
                                         const std::shared_ptr<const sim::TownMap>& map, int episodes,
                                         std::uint64_t seed);

inline constexpr const char* kMetricsHeader = "variant,bev_mode,seed,steps,km,i_veh,i_ped,i_red,i_sum,v_lim_dev_pct,v_move";
inline constexpr const char* kEventLogHeader = "tick,event_type,x,y";

std::string format_metrics_row(const EvalMetrics& m);
void write_metrics_csv(const std::vector<EvalMetrics>& metrics, const std::filesystem::path& path);
void write_event_log(const EvalTrace& trace, const std::filesystem::path& path);
std::vector<EvalEvent> read_event_log(const std::filesystem::path& path);

struct CurveRow {
  std::int64_t bucket_start = 0;
  std::int64_t bucket_end = 0;
  double mean = 0.0;
  double std = 0.0;
  int runs = 0;
};

// Mean and population std across runs of each run's mean return per step bucket (start, end].
// Buckets tile [0, max steps] without gaps; bucket <= 0 picks the logging interval.
std::vector<CurveRow> return_curve(const std::vector<std::vector<ppo::LogRow>>& runs, std::int64_t bucket);
void export_return_curve(const std::vector<std::filesystem::path>& logs, const std::filesystem::path& out,
                         std::int64_t bucket);

}  // namespace rdn::eval
