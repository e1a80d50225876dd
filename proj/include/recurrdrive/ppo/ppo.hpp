#pragma once

#include <cstdint>
#include <deque>
#include <nlohmann/json.hpp>
#include <random>
#include <stdexcept>
#include <vector>

#include "recurrdrive/agent/actor_critic.hpp"
#include "recurrdrive/config.hpp"
#include "recurrdrive/nn/adam.hpp"
#include "recurrdrive/ppo/env.hpp"
#include "recurrdrive/ppo/normalize.hpp"

namespace rdn::ppo {

inline constexpr double kMeasurementClip = 10.0;

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// B x T transitions, env-major (element (b, t) at b * steps + t). Frames are stored once per env and
// referenced by id, so a stacked observation costs `stack` ids rather than `stack` frame copies.
struct RolloutBuffer {
  int n_envs = 0;
  int steps = 0;
  int stack = 1;
  int frame_size = 0;
  int hidden = 0;
  static constexpr int kMeasurementSize = sim::EgoMeasurement::kSize;

  std::vector<std::vector<float>> frames;  // per env, frame_size floats per frame
  std::vector<int> frame_ids;              // (b * steps + t) * stack + i, oldest first
  std::vector<float> measurements;         // normalized m-vectors, 7 per transition
  std::vector<double> actions;
  std::vector<double> log_probs;           // behavior log-probabilities
  std::vector<double> means;               // behavior policy means
  std::vector<double> values;
  std::vector<double> rewards;             // normalized
  std::vector<double> raw_rewards;
  std::vector<std::uint8_t> dones;
  std::vector<std::uint8_t> starts;        // state zeroed before this step (previous step ended an episode)
  std::vector<float> initial_h;            // per env, state entering the segment
  std::vector<float> initial_c;
  std::vector<double> bootstrap;           // V(s_T) per env
  double behavior_log_std = 0.0;
  std::vector<double> advantages;
  std::vector<double> returns;

  void reset(int n_envs, int steps, int stack, int frame_size, int hidden);
  std::size_t index(int env, int t) const { return static_cast<std::size_t>(env) * steps + static_cast<std::size_t>(t); }
  int append_frame(int env, std::span<const float> frame);
  // steps x (stack * frame_size) observations of one env.
  void gather_observations(int env, std::vector<float>& out) const;
  void compute_advantages(double gamma, double lambda);
};

// Owns the B environments and everything that persists between rollout segments: the LSTM state,
// frame histories and running normalizers.
class Collector {
 public:
  Collector(std::vector<DrivingEnv> envs, int stack, int hidden, double gamma, std::uint64_t seed);

  // Collects `steps` transitions per env. The recurrent state carries over between calls and is
  // zeroed only when an episode ends.
  void collect(const agent::ActorCritic<float>& net, int steps, RolloutBuffer& buffer);

  int n_envs() const { return static_cast<int>(envs_.size()); }
  std::vector<DrivingEnv>& envs() { return envs_; }
  void set_threads(int threads) { threads_ = threads; }

  agent::RecurrentState<float>& carry() { return carry_; }
  const RunningNorm& measurement_norm() const { return measurement_norm_; }
  const RewardNormalizer& reward_norm() const { return reward_norm_; }

  // Mean undiscounted return of the last 20 finished episodes; the mean return-so-far of the
  // running episodes while none has finished.
  double mean_episode_return() const;
  std::int64_t finished_episodes() const { return finished_; }

  nlohmann::json state_json() const;
  void load_state_json(const nlohmann::json& j);

 private:
  void refresh_measurement(int env);
  void reset_history(int env);

  std::vector<DrivingEnv> envs_;
  int stack_;
  int threads_ = 0;
  agent::RecurrentState<float> carry_;
  RunningNorm measurement_norm_;
  RewardNormalizer reward_norm_;
  std::vector<std::vector<std::vector<float>>> history_;  // per env, `stack` frames oldest first
  std::vector<std::vector<float>> current_measurement_;
  std::vector<double> episode_return_;
  std::deque<double> recent_returns_;
  std::int64_t finished_ = 0;
  std::mt19937_64 rng_;
};

// g(eps, A): (1 + eps) A for A >= 0, (1 - eps) A otherwise.
double clip_bound(double eps, double advantage);

struct SurrogateTerm {
  double value = 0.0;    // min(ratio * A, g(eps, A))
  double d_ratio = 0.0;  // 0 when the clipped branch is active
};
SurrogateTerm clipped_surrogate(double ratio, double advantage, double eps);

struct LossWeights {
  double policy = 1.0;
  double value = 0.5;
  double entropy = 0.0;
};

struct SequenceLoss {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double total = 0.0;
  double clip_frac = 0.0;
  double approx_kl = 0.0;
  std::vector<double> ratios;
};

// Re-unrolls env `env`'s full segment from its stored initial state and evaluates the PPO loss
// with the given advantages. Accumulates parameter gradients when `accumulate` is set.
SequenceLoss sequence_loss(agent::ActorCritic<float>& net, const RolloutBuffer& buffer, int env,
                           std::span<const double> advantages, double clip_eps, const LossWeights& weights,
                           bool accumulate);

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double clip_frac = 0.0;
  double approx_kl = 0.0;
  double grad_norm = 0.0;
  double first_ratio_deviation = 0.0;  // max |ratio - 1| of the first minibatch, before any step
};

// `epochs` passes, one minibatch per env sequence, one Adam step per minibatch.
UpdateStats ppo_update(agent::ActorCritic<float>& net, nn::Adam<float>& optimizer, const RolloutBuffer& buffer,
                       const PpoConfig& config);

// Advantages rescaled to mean 0 and standard deviation 1.
std::vector<double> normalized_advantages(std::span<const double> advantages);

}  // namespace rdn::ppo
