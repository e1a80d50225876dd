#pragma once

#include <random>
#include <span>
#include <vector>

namespace rdn::nn {

// Gaussian pushed through tanh, evaluated in double precision regardless of the network scalar.
// log p(a) = log N(atanh(a); mean, exp(log_std)) - sum log(1 - a^2)
class TanhNormal {
 public:
  static constexpr double kActionBound = 1.0 - 1e-6;

  TanhNormal(std::vector<double> mean, std::vector<double> log_std);

  std::size_t dim() const { return mean_.size(); }
  std::vector<double> sample(std::mt19937_64& rng) const;
  std::vector<double> mode() const;
  double log_prob(std::span<const double> action) const;

  // d log_prob / d mean and d log_prob / d log_std.
  struct Gradient {
    std::vector<double> mean;
    std::vector<double> log_std;
  };
  Gradient log_prob_grad(std::span<const double> action) const;

  // Scalar conveniences for the 1-D longitudinal action.
  static double log_prob(double action, double mean, double log_std);
  static void log_prob_grad(double action, double mean, double log_std, double& d_mean, double& d_log_std);

 private:
  std::vector<double> mean_;
  std::vector<double> log_std_;
};

}  // namespace rdn::nn
