#include "recurrdrive/ppo/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <thread>

#include "recurrdrive/nn/distributions.hpp"
#include "recurrdrive/ppo/gae.hpp"

namespace rdn::ppo {

void RolloutBuffer::reset(int envs, int n_steps, int stack_length, int frame_floats, int hidden_size) {
  n_envs = envs;
  steps = n_steps;
  stack = stack_length;
  frame_size = frame_floats;
  hidden = hidden_size;
  const auto n = static_cast<std::size_t>(envs) * static_cast<std::size_t>(n_steps);
  frames.assign(static_cast<std::size_t>(envs), {});
  for (auto& f : frames) f.reserve(static_cast<std::size_t>(n_steps + stack_length + 1) * frame_floats);
  frame_ids.assign(n * static_cast<std::size_t>(stack_length), 0);
  measurements.assign(n * kMeasurementSize, 0.0f);
  actions.assign(n, 0.0);
  log_probs.assign(n, 0.0);
  means.assign(n, 0.0);
  values.assign(n, 0.0);
  rewards.assign(n, 0.0);
  raw_rewards.assign(n, 0.0);
  dones.assign(n, 0);
  starts.assign(n, 0);
  initial_h.assign(static_cast<std::size_t>(envs) * hidden_size, 0.0f);
  initial_c.assign(initial_h.size(), 0.0f);
  bootstrap.assign(static_cast<std::size_t>(envs), 0.0);
  advantages.clear();
  returns.clear();
}

int RolloutBuffer::append_frame(int env, std::span<const float> frame) {
  if (frame.size() != static_cast<std::size_t>(frame_size)) throw std::invalid_argument("rollout: frame size mismatch");
  auto& store = frames[static_cast<std::size_t>(env)];
  const int id = static_cast<int>(store.size() / static_cast<std::size_t>(frame_size));
  store.insert(store.end(), frame.begin(), frame.end());
  return id;
}

void RolloutBuffer::gather_observations(int env, std::vector<float>& out) const {
  const auto per_step = static_cast<std::size_t>(stack) * frame_size;
  out.resize(static_cast<std::size_t>(steps) * per_step);
  const auto& store = frames[static_cast<std::size_t>(env)];
  for (int t = 0; t < steps; ++t) {
    for (int i = 0; i < stack; ++i) {
      const int id = frame_ids[index(env, t) * stack + static_cast<std::size_t>(i)];
      std::copy_n(store.begin() + static_cast<std::ptrdiff_t>(id) * frame_size, frame_size,
                  out.begin() + static_cast<std::ptrdiff_t>(t * per_step + static_cast<std::size_t>(i) * frame_size));
    }
  }
}

void RolloutBuffer::compute_advantages(double gamma, double lambda) {
  GaeResult gae = compute_gae(rewards, values, dones, bootstrap, n_envs, steps, gamma, lambda);
  advantages = std::move(gae.advantages);
  returns = std::move(gae.returns);
}

Collector::Collector(std::vector<DrivingEnv> envs, int stack, int hidden, double gamma, std::uint64_t seed)
    : envs_(std::move(envs)),
      stack_(stack),
      carry_(agent::RecurrentState<float>::zeros(static_cast<int>(envs_.size()), hidden)),
      measurement_norm_(sim::EgoMeasurement::kSize),
      reward_norm_(static_cast<int>(envs_.size()), gamma),
      history_(envs_.size()),
      current_measurement_(envs_.size()),
      episode_return_(envs_.size(), 0.0),
      rng_(seed) {
  if (envs_.empty()) throw std::invalid_argument("Collector needs at least one environment");
  if (stack < 1) throw std::invalid_argument("Collector: stack length must be >= 1");
  for (int b = 0; b < n_envs(); ++b) {
    reset_history(b);
    refresh_measurement(b);
  }
}

void Collector::reset_history(int env) {
  const auto& frame = envs_[static_cast<std::size_t>(env)].observation().data;
  history_[static_cast<std::size_t>(env)].assign(static_cast<std::size_t>(stack_), frame);
}

void Collector::refresh_measurement(int env) {
  const auto raw = envs_[static_cast<std::size_t>(env)].measurement().as_array();
  measurement_norm_.update(raw);
  std::array<double, sim::EgoMeasurement::kSize> normalized{};
  measurement_norm_.normalize(raw, normalized, kMeasurementClip);
  current_measurement_[static_cast<std::size_t>(env)].assign(normalized.begin(), normalized.end());
}

double Collector::mean_episode_return() const {
  const auto& source = recent_returns_.empty() ? std::deque<double>(episode_return_.begin(), episode_return_.end())
                                               : recent_returns_;
  return std::accumulate(source.begin(), source.end(), 0.0) / static_cast<double>(source.size());
}

void Collector::collect(const agent::ActorCritic<float>& net, int steps, RolloutBuffer& buffer) {
  const int n_env = n_envs();
  const int frame_size = static_cast<int>(envs_.front().observation().data.size());
  const auto stacked_size = static_cast<std::size_t>(stack_) * frame_size;
  if (stacked_size != net.observation_size()) {
    throw std::invalid_argument("collect: network expects " + std::to_string(net.observation_size()) +
                                " observation values, environments give " + std::to_string(stacked_size));
  }
  const int hidden = carry_.hidden;
  buffer.reset(n_env, steps, stack_, frame_size, hidden);
  buffer.behavior_log_std = static_cast<double>(net.log_std());

  std::vector<std::vector<int>> ids(static_cast<std::size_t>(n_env));
  for (int b = 0; b < n_env; ++b) {
    std::copy_n(carry_.h.begin() + static_cast<std::ptrdiff_t>(b) * hidden, hidden,
                buffer.initial_h.begin() + static_cast<std::ptrdiff_t>(b) * hidden);
    std::copy_n(carry_.c.begin() + static_cast<std::ptrdiff_t>(b) * hidden, hidden,
                buffer.initial_c.begin() + static_cast<std::ptrdiff_t>(b) * hidden);
    for (const auto& frame : history_[static_cast<std::size_t>(b)]) ids[static_cast<std::size_t>(b)].push_back(buffer.append_frame(b, frame));
  }

  std::vector<float> obs(static_cast<std::size_t>(n_env) * stacked_size);
  std::vector<float> meas(static_cast<std::size_t>(n_env) * RolloutBuffer::kMeasurementSize);
  auto fill_batch = [&]() {
    for (int b = 0; b < n_env; ++b) {
      const auto& store = buffer.frames[static_cast<std::size_t>(b)];
      for (int i = 0; i < stack_; ++i) {
        const int id = ids[static_cast<std::size_t>(b)][static_cast<std::size_t>(i)];
        std::copy_n(store.begin() + static_cast<std::ptrdiff_t>(id) * frame_size, frame_size,
                    obs.begin() + static_cast<std::ptrdiff_t>(b * stacked_size + static_cast<std::size_t>(i) * frame_size));
      }
      std::copy(current_measurement_[static_cast<std::size_t>(b)].begin(),
                current_measurement_[static_cast<std::size_t>(b)].end(),
                meas.begin() + static_cast<std::ptrdiff_t>(b) * RolloutBuffer::kMeasurementSize);
    }
  };

  std::vector<double> actions(static_cast<std::size_t>(n_env));
  std::vector<EnvStep> results(static_cast<std::size_t>(n_env));
  const int workers = std::min(threads_, n_env);
  auto step_envs = [&]() {
    if (workers <= 1) {
      for (int b = 0; b < n_env; ++b) results[static_cast<std::size_t>(b)] = envs_[static_cast<std::size_t>(b)].step(actions[static_cast<std::size_t>(b)]);
      return;
    }
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w]() {
        for (int b = w; b < n_env; b += workers) {
          results[static_cast<std::size_t>(b)] = envs_[static_cast<std::size_t>(b)].step(actions[static_cast<std::size_t>(b)]);
        }
      });
    }
    for (auto& th : pool) th.join();
  };

  for (int t = 0; t < steps; ++t) {
    fill_batch();
    agent::SequenceBatch<float> batch;
    batch.steps = 1;
    batch.batch = n_env;
    batch.observations = obs;
    batch.measurements = meas;
    const agent::PolicyOutputs<float> out = net.forward(batch, carry_);
    const double log_std = static_cast<double>(out.log_std);
    for (int b = 0; b < n_env; ++b) {
      const std::size_t i = buffer.index(b, t);
      std::copy_n(ids[static_cast<std::size_t>(b)].begin(), stack_, buffer.frame_ids.begin() + static_cast<std::ptrdiff_t>(i) * stack_);
      std::copy_n(meas.begin() + static_cast<std::ptrdiff_t>(b) * RolloutBuffer::kMeasurementSize,
                  RolloutBuffer::kMeasurementSize,
                  buffer.measurements.begin() + static_cast<std::ptrdiff_t>(i) * RolloutBuffer::kMeasurementSize);
      const double mean = static_cast<double>(out.mean[static_cast<std::size_t>(b)]);
      const nn::TanhNormal dist({mean}, {log_std});
      const double a = dist.sample(rng_)[0];
      actions[static_cast<std::size_t>(b)] = a;
      buffer.actions[i] = a;
      buffer.means[i] = mean;
      buffer.log_probs[i] = nn::TanhNormal::log_prob(a, mean, log_std);
      buffer.values[i] = static_cast<double>(out.value[static_cast<std::size_t>(b)]);
    }

    step_envs();

    for (int b = 0; b < n_env; ++b) {
      const std::size_t i = buffer.index(b, t);
      const EnvStep& r = results[static_cast<std::size_t>(b)];
      DrivingEnv& env = envs_[static_cast<std::size_t>(b)];
      if (!std::isfinite(r.reward)) {
        throw TrainingError("environment " + std::to_string(b) + " produced a non-finite reward at tick " +
                            std::to_string(env.world().tick));
      }
      const bool done = r.done();
      episode_return_[static_cast<std::size_t>(b)] += r.reward;
      buffer.raw_rewards[i] = r.reward;
      buffer.rewards[i] = reward_norm_.normalize(b, r.reward, done);
      buffer.dones[i] = done ? 1 : 0;
      if (done) {
        recent_returns_.push_back(episode_return_[static_cast<std::size_t>(b)]);
        if (recent_returns_.size() > 20) recent_returns_.pop_front();
        ++finished_;
        episode_return_[static_cast<std::size_t>(b)] = 0.0;
        env.reset();
        carry_.reset(b);
        if (t + 1 < steps) buffer.starts[buffer.index(b, t + 1)] = 1;
      }
      const int id = buffer.append_frame(b, env.observation().data);
      auto& window = ids[static_cast<std::size_t>(b)];
      if (done) {
        window.assign(static_cast<std::size_t>(stack_), id);
      } else {
        window.erase(window.begin());
        window.push_back(id);
      }
      refresh_measurement(b);
    }
  }

  fill_batch();
  agent::SequenceBatch<float> batch;
  batch.steps = 1;
  batch.batch = n_env;
  batch.observations = obs;
  batch.measurements = meas;
  agent::RecurrentState<float> probe = carry_;
  const agent::PolicyOutputs<float> last = net.forward(batch, probe);
  for (int b = 0; b < n_env; ++b) {
    buffer.bootstrap[static_cast<std::size_t>(b)] = static_cast<double>(last.value[static_cast<std::size_t>(b)]);
    auto& hist = history_[static_cast<std::size_t>(b)];
    const auto& store = buffer.frames[static_cast<std::size_t>(b)];
    for (int i = 0; i < stack_; ++i) {
      const int id = ids[static_cast<std::size_t>(b)][static_cast<std::size_t>(i)];
      hist[static_cast<std::size_t>(i)].assign(store.begin() + static_cast<std::ptrdiff_t>(id) * frame_size,
                                               store.begin() + static_cast<std::ptrdiff_t>(id + 1) * frame_size);
    }
  }
}

nlohmann::json Collector::state_json() const {
  std::ostringstream rng;
  rng << rng_;
  return {{"measurement_norm", measurement_norm_.to_json()},
          {"reward_norm", reward_norm_.to_json()},
          {"recent_returns", std::vector<double>(recent_returns_.begin(), recent_returns_.end())},
          {"finished_episodes", finished_},
          {"action_rng", rng.str()}};
}

void Collector::load_state_json(const nlohmann::json& j) {
  measurement_norm_ = RunningNorm::from_json(j.at("measurement_norm"));
  reward_norm_.load_json(j.at("reward_norm"));
  for (int b = 0; b < n_envs(); ++b) reward_norm_.reset_env(b);
  const auto recent = j.at("recent_returns").get<std::vector<double>>();
  recent_returns_.assign(recent.begin(), recent.end());
  finished_ = j.at("finished_episodes").get<std::int64_t>();
  std::istringstream rng(j.at("action_rng").get<std::string>());
  rng >> rng_;
  if (!rng) throw std::invalid_argument("corrupt action rng state");
  for (int b = 0; b < n_envs(); ++b) {
    std::array<double, sim::EgoMeasurement::kSize> normalized{};
    measurement_norm_.normalize(envs_[static_cast<std::size_t>(b)].measurement().as_array(), normalized,
                                kMeasurementClip);
    current_measurement_[static_cast<std::size_t>(b)].assign(normalized.begin(), normalized.end());
  }
}

double clip_bound(double eps, double advantage) {
  return advantage >= 0.0 ? (1.0 + eps) * advantage : (1.0 - eps) * advantage;
}

SurrogateTerm clipped_surrogate(double ratio, double advantage, double eps) {
  const double unclipped = ratio * advantage;
  const double bound = clip_bound(eps, advantage);
  if (unclipped <= bound) return {unclipped, advantage};
  return {bound, 0.0};
}

std::vector<double> normalized_advantages(std::span<const double> advantages) {
  std::vector<double> out(advantages.begin(), advantages.end());
  if (out.empty()) return out;
  const double n = static_cast<double>(out.size());
  const double mean = std::accumulate(out.begin(), out.end(), 0.0) / n;
  double var = 0.0;
  for (double a : out) var += (a - mean) * (a - mean);
  const double std = std::sqrt(var / n);
  for (double& a : out) a = (a - mean) / std::max(std, 1e-8);
  return out;
}

SequenceLoss sequence_loss(agent::ActorCritic<float>& net, const RolloutBuffer& buffer, int env,
                           std::span<const double> advantages, double clip_eps, const LossWeights& weights,
                           bool accumulate) {
  const int T = buffer.steps;
  const std::size_t base = buffer.index(env, 0);
  if (buffer.returns.size() != buffer.values.size() || advantages.size() != buffer.values.size()) {
    throw std::invalid_argument("sequence_loss: buffer has no advantages/returns");
  }
  std::vector<float> obs;
  buffer.gather_observations(env, obs);
  agent::SequenceBatch<float> batch;
  batch.steps = T;
  batch.batch = 1;
  batch.observations = obs;
  batch.measurements = std::span<const float>(buffer.measurements)
                           .subspan(base * RolloutBuffer::kMeasurementSize,
                                    static_cast<std::size_t>(T) * RolloutBuffer::kMeasurementSize);
  batch.episode_starts = std::span<const std::uint8_t>(buffer.starts).subspan(base, static_cast<std::size_t>(T));
  agent::RecurrentState<float> state;
  state.batch = 1;
  state.hidden = buffer.hidden;
  state.h.assign(buffer.initial_h.begin() + static_cast<std::ptrdiff_t>(env) * buffer.hidden,
                 buffer.initial_h.begin() + static_cast<std::ptrdiff_t>(env + 1) * buffer.hidden);
  state.c.assign(buffer.initial_c.begin() + static_cast<std::ptrdiff_t>(env) * buffer.hidden,
                 buffer.initial_c.begin() + static_cast<std::ptrdiff_t>(env + 1) * buffer.hidden);

  typename agent::ActorCritic<float>::ForwardCache cache;
  const agent::PolicyOutputs<float> out = net.forward(batch, state, accumulate ? &cache : nullptr);
  const double log_std = static_cast<double>(out.log_std);

  SequenceLoss loss;
  loss.ratios.resize(static_cast<std::size_t>(T));
  std::vector<float> d_mean(static_cast<std::size_t>(T)), d_value(static_cast<std::size_t>(T));
  double d_log_std = 0.0;
  const double inv_t = 1.0 / static_cast<double>(T);
  for (int t = 0; t < T; ++t) {
    const std::size_t i = base + static_cast<std::size_t>(t);
    const double mean = static_cast<double>(out.mean[static_cast<std::size_t>(t)]);
    const double logp = nn::TanhNormal::log_prob(buffer.actions[i], mean, log_std);
    const double ratio = std::exp(logp - buffer.log_probs[i]);
    const double adv = advantages[i];
    const SurrogateTerm term = clipped_surrogate(ratio, adv, clip_eps);
    if (term.value > std::max((1.0 + clip_eps) * adv, (1.0 - clip_eps) * adv) + 1e-12 * std::abs(adv)) {
      throw TrainingError("clipped surrogate exceeded its bound");
    }
    loss.ratios[static_cast<std::size_t>(t)] = ratio;
    loss.policy_loss -= term.value * inv_t;
    if (std::abs(ratio - 1.0) > clip_eps) loss.clip_frac += inv_t;
    loss.approx_kl += ((ratio - 1.0) - std::log(ratio)) * inv_t;

    double dm = 0.0, dls = 0.0;
    nn::TanhNormal::log_prob_grad(buffer.actions[i], mean, log_std, dm, dls);
    // The clipped branch is flat; skipping it keeps an overflowed ratio from turning 0 * inf into NaN.
    const double d_logp = term.d_ratio == 0.0 ? 0.0 : -weights.policy * term.d_ratio * ratio * inv_t;
    d_mean[static_cast<std::size_t>(t)] = static_cast<float>(d_logp * dm);
    d_log_std += d_logp * dls;

    const double err = static_cast<double>(out.value[static_cast<std::size_t>(t)]) - buffer.returns[i];
    loss.value_loss += err * err * inv_t;
    d_value[static_cast<std::size_t>(t)] = static_cast<float>(weights.value * 2.0 * err * inv_t);
  }
  // Entropy of the pre-squash Gaussian; the tanh-Normal entropy has no closed form.
  const double entropy = 0.5 * std::log(2.0 * M_PI * M_E) + log_std;
  d_log_std -= weights.entropy;
  loss.total = weights.policy * loss.policy_loss + weights.value * loss.value_loss - weights.entropy * entropy;
  if (!std::isfinite(loss.total)) {
    throw TrainingError("non-finite loss on env " + std::to_string(env) + " (policy " +
                        std::to_string(loss.policy_loss) + ", value " + std::to_string(loss.value_loss) + ")");
  }
  if (accumulate) net.backward(cache, d_mean, d_value, static_cast<float>(d_log_std));
  return loss;
}

UpdateStats ppo_update(agent::ActorCritic<float>& net, nn::Adam<float>& optimizer, const RolloutBuffer& buffer,
                       const PpoConfig& config) {
  if (buffer.advantages.size() != buffer.values.size()) throw std::invalid_argument("ppo_update: advantages missing");
  const std::vector<double> adv = config.normalize_advantages
                                      ? normalized_advantages(buffer.advantages)
                                      : std::vector<double>(buffer.advantages.begin(), buffer.advantages.end());
  const LossWeights weights{1.0, config.value_coef, config.entropy_coef};
  UpdateStats stats;
  int minibatches = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (int b = 0; b < buffer.n_envs; ++b) {
      optimizer.zero_grad();
      const SequenceLoss loss = sequence_loss(net, buffer, b, adv, config.clip_eps, weights, true);
      if (minibatches == 0) {
        for (double r : loss.ratios) stats.first_ratio_deviation = std::max(stats.first_ratio_deviation, std::abs(r - 1.0));
      }
      const double norm = optimizer.step();
      if (!std::isfinite(norm)) throw TrainingError("non-finite gradient norm in PPO update");
      stats.policy_loss += loss.policy_loss;
      stats.value_loss += loss.value_loss;
      stats.clip_frac += loss.clip_frac;
      stats.approx_kl += loss.approx_kl;
      stats.grad_norm += norm;
      ++minibatches;
    }
  }
  const double inv = 1.0 / std::max(1, minibatches);
  stats.policy_loss *= inv;
  stats.value_loss *= inv;
  stats.clip_frac *= inv;
  stats.approx_kl *= inv;
  stats.grad_norm *= inv;
  for (const auto* p : net.parameters()) {
    for (float v : p->value) {
      if (!std::isfinite(v)) throw TrainingError("parameter '" + p->name + "' became non-finite");
    }
  }
  return stats;
}

}  // namespace rdn::ppo
