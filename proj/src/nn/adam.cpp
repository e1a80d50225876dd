#include "recurrdrive/nn/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace rdn::nn {

template <typename T>
double global_grad_norm(const std::vector<Parameter<T>*>& params) {
  double sum = 0.0;
  for (const Parameter<T>* p : params) {
    for (T g : p->grad) sum += static_cast<double>(g) * static_cast<double>(g);
  }
  return std::sqrt(sum);
}

template <typename T>
double clip_grad_norm(const std::vector<Parameter<T>*>& params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (Parameter<T>* p : params) {
      for (T& g : p->grad) g = static_cast<T>(g * scale);
    }
  }
  return norm;
}

template <typename T>
Adam<T>::Adam(std::vector<Parameter<T>*> params, AdamConfig config) : params_(std::move(params)), config_(config) {
  for (const Parameter<T>* p : params_) {
    m_.emplace_back(p->size(), T(0));
    v_.emplace_back(p->size(), T(0));
  }
}

template <typename T>
double Adam<T>::step() {
  const double norm = clip_grad_norm(params_, config_.max_grad_norm);
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Parameter<T>& p = *params_[k];
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = p.grad[i];
      const double mi = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
      const double vi = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double update = config_.lr * (mi / bc1) / (std::sqrt(vi / bc2) + config_.eps);
      p.value[i] = static_cast<T>(p.value[i] - update);
    }
  }
  return norm;
}

template <typename T>
void Adam<T>::zero_grad() {
  for (Parameter<T>* p : params_) p->zero_grad();
}

template class Adam<float>;
template class Adam<double>;
template double global_grad_norm<float>(const std::vector<Parameter<float>*>&);
template double global_grad_norm<double>(const std::vector<Parameter<double>*>&);
template double clip_grad_norm<float>(const std::vector<Parameter<float>*>&, double);
template double clip_grad_norm<double>(const std::vector<Parameter<double>*>&, double);

}  // namespace rdn::nn
