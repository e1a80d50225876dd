#include "recurrdrive/eval/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "recurrdrive/nn/distributions.hpp"
#include "recurrdrive/ppo/ppo.hpp"

namespace rdn::eval {

namespace fs = std::filesystem;

EvalMetrics compute_metrics(const EvalTrace& trace) {
  if (trace.speeds.size() != trace.speed_limits.size()) throw EvalError("trace speeds and limits differ in length");
  EvalMetrics m;
  m.steps = static_cast<std::int64_t>(trace.speeds.size());
  double meters = 0.0;
  double dev = 0.0;
  double moving_sum = 0.0;
  std::int64_t moving = 0;
  for (std::size_t i = 0; i < trace.speeds.size(); ++i) {
    const double v = trace.speeds[i];
    const double lim = trace.speed_limits[i];
    meters += v * sim::kTickSeconds;
    if (lim > 0.0) dev += 100.0 * std::max(0.0, v - lim) / lim;
    if (v > kMovingThreshold) {
      moving_sum += v;
      ++moving;
    }
  }
  m.km = meters / 1000.0;
  m.v_lim_dev_pct = m.steps > 0 ? dev / static_cast<double>(m.steps) : 0.0;
  m.v_move_defined = moving > 0;
  m.v_move = moving > 0 ? moving_sum / static_cast<double>(moving) : 0.0;

  std::int64_t veh = 0, ped = 0, red = 0;
  for (const EvalEvent& e : trace.events) {
    switch (e.type) {
      case sim::InfractionType::kVehicleCollision: ++veh; break;
      case sim::InfractionType::kPedestrianCollision: ++ped; break;
      case sim::InfractionType::kRedLight: ++red; break;
    }
  }
  if (!(m.km > 0.0)) {
    if (!trace.events.empty()) throw EvalError("infractions recorded over zero driven distance");
    m.zero_distance = true;
    return m;
  }
  m.i_veh = static_cast<double>(veh) / m.km;
  m.i_ped = static_cast<double>(ped) / m.km;
  m.i_red = static_cast<double>(red) / m.km;
  m.i_sum = m.i_veh + m.i_ped + m.i_red;
  return m;
}

AgentDriver::AgentDriver(const ppo::LoadedAgent& agent)
    : agent_(agent),
      frames_(agent.config.agent.stack_length()),
      state_(agent::RecurrentState<float>::zeros(1, agent.net->spec().hidden_size)) {}

void AgentDriver::reset() {
  frames_.reset();
  state_ = agent::RecurrentState<float>::zeros(1, agent_.net->spec().hidden_size);
}

double AgentDriver::act(const ppo::DrivingEnv& env) {
  frames_.push(env.observation());
  const bev::BevObservation obs = frames_.stacked();
  const auto raw = env.measurement().as_array();
  std::array<double, sim::EgoMeasurement::kSize> normalized{};
  agent_.measurement_norm.normalize(raw, normalized, ppo::kMeasurementClip);
  const std::vector<float> meas(normalized.begin(), normalized.end());
  agent::SequenceBatch<float> batch;
  batch.observations = obs.data;
  batch.measurements = meas;
  const agent::PolicyOutputs<float> out = agent_.net->forward(batch, state_);
  return std::tanh(static_cast<double>(out.mean[0]));
}

double CruiseDriver::act(const ppo::DrivingEnv& env) {
  const sim::EgoMeasurement& m = env.measurement();
  if (m.red_flag > 0.0) return -1.0;
  return std::clamp(0.5 * (fraction_ * m.speed_limit - m.speed), -1.0, 1.0);
}

EvalTrace run_evaluation(Driver& driver, ppo::EnvConfig env_config, const std::shared_ptr<const sim::TownMap>& map,
                         std::int64_t steps, std::uint64_t seed) {
  if (steps < 1) throw EvalError("evaluation needs at least one step");
  env_config.max_episode_ticks = 0;
  ppo::DrivingEnv env(env_config, map, seed);
  driver.reset();
  EvalTrace trace;
  trace.speeds.reserve(static_cast<std::size_t>(steps));
  trace.speed_limits.reserve(static_cast<std::size_t>(steps));
  for (std::int64_t i = 0; i < steps; ++i) {
    const double action = driver.act(env);
    const ppo::EnvStep r = env.step(action);
    trace.speeds.push_back(env.world().ego.speed);
    trace.speed_limits.push_back(env.measurement().speed_limit);
    for (const sim::InfractionEvent& e : r.events.infractions) {
      trace.events.push_back({i, e.type, e.position.x, e.position.y});
    }
    if (r.events.terminated) {
      env.respawn();
      driver.reset();
    } else if (r.events.route_complete) {
      env.reset();
      driver.reset();
    }
  }
  return trace;
}

EvalMetrics evaluate_checkpoint(const ppo::LoadedAgent& agent, std::int64_t steps, std::uint64_t seed,
                                EvalTrace* trace_out) {
  const auto map = sim::make_map(agent.config.scenario);
  AgentDriver driver(agent);
  EvalTrace trace = run_evaluation(driver, ppo::env_config(agent.config), map, steps, seed);
  EvalMetrics m = compute_metrics(trace);
  m.variant = agent::to_string(agent.config.agent.variant);
  m.bev_mode = bev::to_string(agent.config.agent.bev_mode);
  m.seed = seed;
  if (trace_out) *trace_out = std::move(trace);
  return m;
}

std::vector<EpisodeOutcome> run_episodes(Driver& driver, ppo::EnvConfig env_config,
                                         const std::shared_ptr<const sim::TownMap>& map, int episodes,
                                         std::uint64_t seed) {
  if (env_config.max_episode_ticks <= 0) throw EvalError("episodic evaluation needs a time limit");
  ppo::DrivingEnv env(env_config, map, seed);
  std::vector<EpisodeOutcome> out;
  for (int e = 0; e < episodes; ++e) {
    if (e > 0) env.reset();
    driver.reset();
    EpisodeOutcome o;
    while (true) {
      const ppo::EnvStep r = env.step(driver.act(env));
      o.infractions += static_cast<int>(r.events.infractions.size());
      o.distance += r.events.distance;
      ++o.ticks;
      if (r.done()) {
        o.route_complete = r.events.route_complete;
        break;
      }
    }
    out.push_back(o);
  }
  return out;
}

std::string format_metrics_row(const EvalMetrics& m) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), "%s,%s,%llu,%lld,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g", m.variant.c_str(),
                m.bev_mode.c_str(), static_cast<unsigned long long>(m.seed), static_cast<long long>(m.steps), m.km,
                m.i_veh, m.i_ped, m.i_red, m.i_sum, m.v_lim_dev_pct, m.v_move);
  return buf;
}

void write_metrics_csv(const std::vector<EvalMetrics>& metrics, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw EvalError("cannot write " + path.string());
  out << kMetricsHeader << '\n';
  for (const EvalMetrics& m : metrics) out << format_metrics_row(m) << '\n';
  if (!out) throw EvalError("short write to " + path.string());
}

void write_event_log(const EvalTrace& trace, const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw EvalError("cannot write " + path.string());
  out << kEventLogHeader << '\n';
  char buf[128];
  for (const EvalEvent& e : trace.events) {
    std::snprintf(buf, sizeof(buf), "%lld,%s,%.17g,%.17g", static_cast<long long>(e.tick), sim::to_string(e.type),
                  e.x, e.y);
    out << buf << '\n';
  }
  if (!out) throw EvalError("short write to " + path.string());
}

std::vector<EvalEvent> read_event_log(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw EvalError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kEventLogHeader) throw EvalError(path.string() + ": not an event log");
  std::vector<EvalEvent> events;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string tick, type, x, y;
    if (!std::getline(row, tick, ',') || !std::getline(row, type, ',') || !std::getline(row, x, ',') ||
        !std::getline(row, y)) {
      throw EvalError(path.string() + ": malformed row '" + line + "'");
    }
    EvalEvent e;
    e.tick = std::stoll(tick);
    if (type == "collision_vehicle") {
      e.type = sim::InfractionType::kVehicleCollision;
    } else if (type == "collision_pedestrian") {
      e.type = sim::InfractionType::kPedestrianCollision;
    } else if (type == "red_light") {
      e.type = sim::InfractionType::kRedLight;
    } else {
      throw EvalError(path.string() + ": unknown event type '" + type + "'");
    }
    e.x = std::stod(x);
    e.y = std::stod(y);
    events.push_back(e);
  }
  return events;
}

std::vector<CurveRow> return_curve(const std::vector<std::vector<ppo::LogRow>>& runs, std::int64_t bucket) {
  std::int64_t max_steps = 0;
  for (const auto& run : runs) {
    for (const auto& r : run) max_steps = std::max(max_steps, r.steps);
  }
  if (bucket <= 0) {
    for (const auto& run : runs) {
      if (!run.empty()) bucket = std::max(bucket, run.front().steps);
    }
  }
  if (bucket <= 0 || max_steps <= 0) return {};
  // Bucket i covers (i * bucket, (i + 1) * bucket]; a log row at step s lands in bucket (s - 1) / bucket.
  const std::int64_t n_buckets = (max_steps + bucket - 1) / bucket;
  std::vector<std::vector<double>> per_run(runs.size(), std::vector<double>(static_cast<std::size_t>(n_buckets), NAN));
  for (std::size_t k = 0; k < runs.size(); ++k) {
    std::vector<double> sum(static_cast<std::size_t>(n_buckets), 0.0);
    std::vector<int> count(static_cast<std::size_t>(n_buckets), 0);
    for (const auto& r : runs[k]) {
      if (r.steps <= 0) continue;
      const auto i = static_cast<std::size_t>((r.steps - 1) / bucket);
      sum[i] += r.mean_return;
      ++count[i];
    }
    double last = NAN;
    for (std::size_t i = 0; i < sum.size(); ++i) {
      if (count[i] > 0) last = sum[i] / count[i];
      per_run[k][i] = last;  // a run without a row in this bucket holds its previous value
    }
  }
  std::vector<CurveRow> rows;
  for (std::int64_t i = 0; i < n_buckets; ++i) {
    CurveRow row;
    row.bucket_start = i * bucket;
    row.bucket_end = (i + 1) * bucket;
    std::vector<double> vals;
    for (const auto& run : per_run) {
      if (!std::isnan(run[static_cast<std::size_t>(i)])) vals.push_back(run[static_cast<std::size_t>(i)]);
    }
    row.runs = static_cast<int>(vals.size());
    if (!vals.empty()) {
      double mean = 0.0;
      for (double v : vals) mean += v;
      mean /= static_cast<double>(vals.size());
      double var = 0.0;
      for (double v : vals) var += (v - mean) * (v - mean);
      row.mean = mean;
      row.std = std::sqrt(var / static_cast<double>(vals.size()));
    }
    rows.push_back(row);
  }
  return rows;
}

void export_return_curve(const std::vector<fs::path>& logs, const fs::path& out, std::int64_t bucket) {
  if (logs.empty()) throw EvalError("no training logs given");
  std::vector<std::vector<ppo::LogRow>> runs;
  for (const auto& p : logs) runs.push_back(ppo::read_train_log(p));
  const std::vector<CurveRow> rows = return_curve(runs, bucket);
  std::ofstream f(out, std::ios::trunc);
  if (!f) throw EvalError("cannot write " + out.string());
  f << "bucket_start,bucket_end,mean_return,std_return,runs\n";
  char buf[160];
  for (const CurveRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%lld,%lld,%.9g,%.9g,%d", static_cast<long long>(r.bucket_start),
                  static_cast<long long>(r.bucket_end), r.mean, r.std, r.runs);
    f << buf << '\n';
  }
  if (!f) throw EvalError("short write to " + out.string());
}

}  // namespace rdn::eval
