#include "recurrdrive/ppo/normalize.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rdn::ppo {

RunningNorm::RunningNorm(int dim) : mean_(static_cast<std::size_t>(dim), 0.0), m2_(mean_.size(), 0.0) {
  if (dim < 1) throw std::invalid_argument("RunningNorm: dim must be >= 1");
}

void RunningNorm::update(std::span<const double> x) {
  if (x.size() != mean_.size()) throw std::invalid_argument("RunningNorm: dimension mismatch");
  ++count_;
  const double n = static_cast<double>(count_);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double delta = x[i] - mean_[i];
    mean_[i] += delta / n;
    m2_[i] += delta * (x[i] - mean_[i]);
  }
}

double RunningNorm::variance(int i) const {
  return count_ > 0 ? std::max(0.0, m2_[static_cast<std::size_t>(i)] / static_cast<double>(count_)) : 0.0;
}

double RunningNorm::std(int i) const { return std::sqrt(variance(i)); }

void RunningNorm::normalize(std::span<const double> x, std::span<double> out, double clip) const {
  if (x.size() != mean_.size() || out.size() != x.size()) throw std::invalid_argument("RunningNorm: dimension mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) {
    double v = (x[i] - mean_[i]) / std::max(std(static_cast<int>(i)), kStdFloor);
    if (clip > 0.0) v = std::clamp(v, -clip, clip);
    out[i] = v;
  }
}

nlohmann::json RunningNorm::to_json() const { return {{"count", count_}, {"mean", mean_}, {"m2", m2_}}; }

RunningNorm RunningNorm::from_json(const nlohmann::json& j) {
  const auto mean = j.at("mean").get<std::vector<double>>();
  RunningNorm n(static_cast<int>(mean.size()));
  n.count_ = j.at("count").get<std::int64_t>();
  n.mean_ = mean;
  n.m2_ = j.at("m2").get<std::vector<double>>();
  if (n.m2_.size() != n.mean_.size()) throw std::invalid_argument("RunningNorm: corrupt state");
  return n;
}

RewardNormalizer::RewardNormalizer(int n_envs, double gamma, double clip)
    : stats_(1), returns_(static_cast<std::size_t>(n_envs), 0.0), gamma_(gamma), clip_(clip) {}

double RewardNormalizer::scale() const { return stats_.count() < 2 ? 1.0 : std::max(stats_.std(), kStdFloor); }

double RewardNormalizer::normalize(int env, double reward, bool done, bool update_stats) {
  double& ret = returns_[static_cast<std::size_t>(env)];
  ret = ret * gamma_ + reward;
  if (update_stats) stats_.update(ret);
  if (done) ret = 0.0;
  const double scaled = reward / scale();
  return clip_ > 0.0 ? std::clamp(scaled, -clip_, clip_) : scaled;
}

nlohmann::json RewardNormalizer::to_json() const { return {{"stats", stats_.to_json()}, {"returns", returns_}}; }

void RewardNormalizer::load_json(const nlohmann::json& j) {
  stats_ = RunningNorm::from_json(j.at("stats"));
  const auto r = j.at("returns").get<std::vector<double>>();
  if (r.size() != returns_.size()) throw std::invalid_argument("RewardNormalizer: environment count mismatch");
  returns_ = r;
}

}  // namespace rdn::ppo
