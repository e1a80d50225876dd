#pragma once

#include <cstdint>
#include <nlohmann/json.hpp>
#include <span>
#include <vector>

namespace rdn::ppo {

inline constexpr double kStdFloor = 1e-6;

// Welford running mean / population variance per dimension.
class RunningNorm {
 public:
  explicit RunningNorm(int dim = 1);

  void update(std::span<const double> x);
  void update(double x) { update(std::span<const double>(&x, 1)); }

  int dim() const { return static_cast<int>(mean_.size()); }
  std::int64_t count() const { return count_; }
  double mean(int i = 0) const { return mean_[static_cast<std::size_t>(i)]; }
  double variance(int i = 0) const;
  double std(int i = 0) const;

  // (x - mean) / max(std, kStdFloor), clipped to [-clip, clip] when clip > 0.
  void normalize(std::span<const double> x, std::span<double> out, double clip = 0.0) const;

  nlohmann::json to_json() const;
  static RunningNorm from_json(const nlohmann::json& j);

 private:
  std::int64_t count_ = 0;
  std::vector<double> mean_;
  std::vector<double> m2_;
};

// Scales rewards by the running std of each environment's discounted return. The mean is not
// subtracted, so the sign of every reward is preserved.
class RewardNormalizer {
 public:
  RewardNormalizer(int n_envs, double gamma, double clip = 10.0);

  // Feeds the raw reward into env `env`'s return accumulator and returns the scaled reward.
  double normalize(int env, double reward, bool done, bool update_stats = true);
  double scale() const;
  void reset_env(int env) { returns_[static_cast<std::size_t>(env)] = 0.0; }

  const RunningNorm& stats() const { return stats_; }
  nlohmann::json to_json() const;
  void load_json(const nlohmann::json& j);

 private:
  RunningNorm stats_;
  std::vector<double> returns_;
  double gamma_;
  double clip_;
};

}  // namespace rdn::ppo
