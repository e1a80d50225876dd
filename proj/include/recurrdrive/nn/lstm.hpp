#pragma once

#include <span>
#include <string>
#include <vector>

#include "recurrdrive/nn/layers.hpp"

namespace rdn::nn {

// Single LSTM cell, gate order (input, forget, cell, output):
//   i, f, o = sigmoid(.)   g = tanh(.)
//   c' = f * c + i * g     h' = o * tanh(c')
template <typename T>
class LstmCell {
 public:
  LstmCell(std::string name, int input_size, int hidden_size);

  // Activations of one batched step, kept for backpropagation through time.
  struct StepCache {
    int batch = 0;
    std::vector<T> x;
    std::vector<T> h_prev;
    std::vector<T> c_prev;
    std::vector<T> gates;  // batch x 4H, post-activation
    std::vector<T> tanh_c;
  };

  // h and c hold the previous state on entry and the new state on return.
  void step(std::span<const T> x, int batch, std::span<T> h, std::span<T> c, StepCache* cache) const;

  // dh / dc hold dL/dh', dL/dc' on entry and dL/dh, dL/dc of the previous state on return.
  // Parameter gradients accumulate; `dx` may be empty.
  void step_backward(const StepCache& cache, std::span<T> dh, std::span<T> dc, std::span<T> dx);

  int input_size() const { return input_; }
  int hidden_size() const { return hidden_; }

  Parameter<T> w_input;   // 4H x input
  Parameter<T> w_hidden;  // 4H x H
  Parameter<T> bias;      // 4H

 private:
  int input_;
  int hidden_;
};

}  // namespace rdn::nn
