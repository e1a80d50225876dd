#include "recurrdrive/nn/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace rdn::nn {

namespace {

double clamp_action(double a) {
  if (std::isnan(a)) return 0.0;
  return std::clamp(a, -TanhNormal::kActionBound, TanhNormal::kActionBound);
}

}  // namespace

TanhNormal::TanhNormal(std::vector<double> mean, std::vector<double> log_std)
    : mean_(std::move(mean)), log_std_(std::move(log_std)) {
  if (mean_.size() != log_std_.size()) throw std::invalid_argument("tanh_normal: dimension mismatch");
  for (double v : log_std_) {
    if (!std::isfinite(v)) throw std::invalid_argument("tanh_normal: log_std must be finite");
  }
}

std::vector<double> TanhNormal::sample(std::mt19937_64& rng) const {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> out(dim());
  for (std::size_t i = 0; i < dim(); ++i) {
    out[i] = clamp_action(std::tanh(mean_[i] + std::exp(log_std_[i]) * normal(rng)));
  }
  return out;
}

std::vector<double> TanhNormal::mode() const {
  std::vector<double> out(dim());
  for (std::size_t i = 0; i < dim(); ++i) out[i] = std::tanh(mean_[i]);
  return out;
}

double TanhNormal::log_prob(double action, double mean, double log_std) {
  const double a = clamp_action(action);
  const double u = std::atanh(a);
  const double z = (u - mean) * std::exp(-log_std);
  return -0.5 * z * z - log_std - 0.5 * std::log(2.0 * std::numbers::pi) - std::log1p(-a * a);
}

void TanhNormal::log_prob_grad(double action, double mean, double log_std, double& d_mean, double& d_log_std) {
  const double u = std::atanh(clamp_action(action));
  const double inv_std = std::exp(-log_std);
  const double z = (u - mean) * inv_std;
  d_mean = z * inv_std;
  d_log_std = z * z - 1.0;
}

double TanhNormal::log_prob(std::span<const double> action) const {
  if (action.size() != dim()) throw std::invalid_argument("tanh_normal: action dimension mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < dim(); ++i) total += log_prob(action[i], mean_[i], log_std_[i]);
  return total;
}

TanhNormal::Gradient TanhNormal::log_prob_grad(std::span<const double> action) const {
  if (action.size() != dim()) throw std::invalid_argument("tanh_normal: action dimension mismatch");
  Gradient g{std::vector<double>(dim()), std::vector<double>(dim())};
  for (std::size_t i = 0; i < dim(); ++i) log_prob_grad(action[i], mean_[i], log_std_[i], g.mean[i], g.log_std[i]);
  return g;
}

}  // namespace rdn::nn
