#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "recurrdrive/nn/layers.hpp"
#include "recurrdrive/nn/lstm.hpp"

namespace rdn::agent {

enum class Variant { kLstm, kFrameStack };

Variant parse_variant(const std::string& name);
const char* to_string(Variant variant);

struct NetworkSpec {
  Variant variant = Variant::kLstm;
  int in_channels = 6;
  int image_size = 128;
  int measurement_size = 7;
  int latent_size = 256;
  int hidden_size = 256;
  double init_log_std = -0.5;
};

// Per-environment LSTM state, rows indexed by environment.
template <typename T>
struct RecurrentState {
  int batch = 0;
  int hidden = 0;
  std::vector<T> h;
  std::vector<T> c;

  static RecurrentState zeros(int batch, int hidden);
  void reset(int row);
  RecurrentState row(int index) const;
};

// `steps` consecutive time steps of `batch` parallel sequences, step-major:
// element (t, b) lives at index t * batch + b. The recurrent state of sequence b is zeroed
// before step t whenever episode_starts[t * batch + b] is set.
template <typename T>
struct SequenceBatch {
  int steps = 1;
  int batch = 1;
  std::span<const T> observations;
  std::span<const T> measurements;
  std::span<const std::uint8_t> episode_starts;  // may be empty: no resets
};

template <typename T>
struct PolicyOutputs {
  std::vector<T> mean;   // steps * batch (1-D action)
  std::vector<T> value;  // steps * batch
  T log_std = T(0);
};

template <typename T>
class ActorCritic {
 public:
  ActorCritic(const NetworkSpec& spec, std::uint64_t seed);

  // Activations kept by forward() for backward(). Holds a view of the observations:
  // the caller keeps them alive until backward() returns.
  struct ForwardCache {
    int steps = 0;
    int batch = 0;
    std::span<const T> observations;
    std::vector<T> conv1, conv2, conv3, latent, features;
    std::vector<std::uint8_t> starts;
    std::vector<typename nn::LstmCell<T>::StepCache> lstm_steps;
    std::vector<T> trunk;  // LSTM outputs h_t (recurrent) or unused
    std::vector<T> policy_hidden, value_hidden;  // frame-stack heads
  };

  struct InputGradients {
    std::vector<T> observations;
    std::vector<T> h0;
    std::vector<T> c0;
  };

  const NetworkSpec& spec() const { return spec_; }
  std::vector<nn::Parameter<T>*> parameters();
  std::vector<const nn::Parameter<T>*> parameters() const;
  std::size_t parameter_count() const;
  // Parameters reached only by the value output.
  std::vector<nn::Parameter<T>*> value_parameters();
  std::size_t observation_size() const {
    return static_cast<std::size_t>(spec_.in_channels) * spec_.image_size * spec_.image_size;
  }
  // Spatial sizes after each convolution.
  std::vector<nn::ConvShape> conv_shapes() const;

  // Shared modality encoder: n observations -> n x latent, all entries >= 0.
  void encode(std::span<const T> observations, int n, std::span<T> latent) const;

  PolicyOutputs<T> forward(const SequenceBatch<T>& input, RecurrentState<T>& state, ForwardCache* cache = nullptr) const;

  // Accumulates parameter gradients for the given output gradients.
  void backward(const ForwardCache& cache, std::span<const T> d_mean, std::span<const T> d_value, T d_log_std,
                InputGradients* input_grads = nullptr);

  void zero_grad();
  T log_std() const { return log_std_.value[0]; }

 private:
  void encode_impl(std::span<const T> observations, int n, ForwardCache* cache, std::vector<T>& latent) const;

  NetworkSpec spec_;
  nn::Conv2d<T> conv1_;
  nn::Conv2d<T> conv2_;
  nn::Conv2d<T> conv3_;
  nn::ConvShape s1_, s2_, s3_;
  nn::Linear<T> projection_;
  // Recurrent trunk.
  nn::LstmCell<T> lstm_;
  nn::Linear<T> policy_head_;
  nn::Linear<T> value_head_;
  // Frame-stack heads: two layers each.
  nn::Linear<T> policy_fc1_;
  nn::Linear<T> policy_fc2_;
  nn::Linear<T> value_fc1_;
  nn::Linear<T> value_fc2_;
  nn::Parameter<T> log_std_;
};

}  // namespace rdn::agent
