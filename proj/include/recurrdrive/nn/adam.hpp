#pragma once

#include <cstdint>
#include <vector>

#include "recurrdrive/nn/layers.hpp"

namespace rdn::nn {

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double max_grad_norm = 0.5;  // <= 0 disables clipping
};

template <typename T>
class Adam {
 public:
  Adam(std::vector<Parameter<T>*> params, AdamConfig config);

  // Clips the global gradient norm, applies one bias-corrected update and returns the pre-clip norm.
  double step();
  void zero_grad();

  std::int64_t steps_taken() const { return t_; }
  void set_steps_taken(std::int64_t t) { t_ = t; }
  const AdamConfig& config() const { return config_; }
  void set_lr(double lr) { config_.lr = lr; }

  std::vector<std::vector<T>>& first_moments() { return m_; }
  std::vector<std::vector<T>>& second_moments() { return v_; }

 private:
  std::vector<Parameter<T>*> params_;
  AdamConfig config_;
  std::vector<std::vector<T>> m_;
  std::vector<std::vector<T>> v_;
  std::int64_t t_ = 0;
};

template <typename T>
double global_grad_norm(const std::vector<Parameter<T>*>& params);

// Scales gradients in place so that their global norm is at most max_norm; returns the original norm.
template <typename T>
double clip_grad_norm(const std::vector<Parameter<T>*>& params, double max_norm);

}  // namespace rdn::nn
