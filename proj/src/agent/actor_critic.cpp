#include "recurrdrive/agent/actor_critic.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace rdn::agent {

Variant parse_variant(const std::string& name) {
  if (name == "lstm") return Variant::kLstm;
  if (name == "fs") return Variant::kFrameStack;
  throw std::invalid_argument("unknown agent variant '" + name + "' (expected lstm|fs)");
}

const char* to_string(Variant variant) { return variant == Variant::kLstm ? "lstm" : "fs"; }

template <typename T>
RecurrentState<T> RecurrentState<T>::zeros(int batch, int hidden) {
  RecurrentState s;
  s.batch = batch;
  s.hidden = hidden;
  s.h.assign(static_cast<std::size_t>(batch) * hidden, T(0));
  s.c.assign(s.h.size(), T(0));
  return s;
}

template <typename T>
void RecurrentState<T>::reset(int row) {
  const auto begin = static_cast<std::ptrdiff_t>(row) * hidden;
  std::fill(h.begin() + begin, h.begin() + begin + hidden, T(0));
  std::fill(c.begin() + begin, c.begin() + begin + hidden, T(0));
}

template <typename T>
RecurrentState<T> RecurrentState<T>::row(int index) const {
  RecurrentState s;
  s.batch = 1;
  s.hidden = hidden;
  const auto begin = static_cast<std::ptrdiff_t>(index) * hidden;
  s.h.assign(h.begin() + begin, h.begin() + begin + hidden);
  s.c.assign(c.begin() + begin, c.begin() + begin + hidden);
  return s;
}

namespace {

int features_of(const NetworkSpec& spec) { return spec.latent_size + spec.measurement_size; }

}  // namespace

template <typename T>
ActorCritic<T>::ActorCritic(const NetworkSpec& spec, std::uint64_t seed)
    : spec_(spec),
      conv1_("encoder.conv1", spec.in_channels, 32, 8, 4),
      conv2_("encoder.conv2", 32, 64, 4, 2),
      conv3_("encoder.conv3", 64, 64, 3, 2),
      s1_(conv1_.output_shape(spec.image_size, spec.image_size)),
      s2_(conv2_.output_shape(s1_.height, s1_.width)),
      s3_(conv3_.output_shape(s2_.height, s2_.width)),
      projection_("encoder.projection", static_cast<int>(s3_.numel()), spec.latent_size),
      lstm_("trunk.lstm", spec.variant == Variant::kLstm ? features_of(spec) : 1,
            spec.variant == Variant::kLstm ? spec.hidden_size : 1),
      policy_head_("policy.linear", spec.variant == Variant::kLstm ? spec.hidden_size : 1, 1),
      value_head_("value.linear", spec.variant == Variant::kLstm ? spec.hidden_size : 1, 1),
      policy_fc1_("policy.fc1", spec.variant == Variant::kFrameStack ? features_of(spec) : 1,
                  spec.variant == Variant::kFrameStack ? spec.hidden_size : 1),
      policy_fc2_("policy.fc2", spec.variant == Variant::kFrameStack ? spec.hidden_size : 1, 1),
      value_fc1_("value.fc1", spec.variant == Variant::kFrameStack ? features_of(spec) : 1,
                 spec.variant == Variant::kFrameStack ? spec.hidden_size : 1),
      value_fc2_("value.fc2", spec.variant == Variant::kFrameStack ? spec.hidden_size : 1, 1),
      log_std_("policy.log_std", {1}) {
  std::mt19937_64 rng(seed);
  auto fan_in_init = [&rng](auto& layer, double fan_in, double scale = 1.0) {
    const double bound = scale / std::sqrt(fan_in);
    nn::init_uniform(layer.weight, bound, rng);
    nn::init_uniform(layer.bias, bound, rng);
  };
  fan_in_init(conv1_, spec.in_channels * 64.0);
  fan_in_init(conv2_, 32 * 16.0);
  fan_in_init(conv3_, 64 * 9.0);
  fan_in_init(projection_, static_cast<double>(s3_.numel()));
  if (spec.variant == Variant::kLstm) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(spec.hidden_size));
    nn::init_uniform(lstm_.w_input, bound, rng);
    nn::init_uniform(lstm_.w_hidden, bound, rng);
    nn::init_uniform(lstm_.bias, bound, rng);
    for (int j = 0; j < spec.hidden_size; ++j) lstm_.bias.value[static_cast<std::size_t>(spec.hidden_size + j)] += T(1);
    fan_in_init(policy_head_, spec.hidden_size, 0.01);
    fan_in_init(value_head_, spec.hidden_size);
  } else {
    fan_in_init(policy_fc1_, features_of(spec));
    fan_in_init(policy_fc2_, spec.hidden_size, 0.01);
    fan_in_init(value_fc1_, features_of(spec));
    fan_in_init(value_fc2_, spec.hidden_size);
  }
  log_std_.value[0] = static_cast<T>(spec.init_log_std);
}

template <typename T>
std::vector<nn::Parameter<T>*> ActorCritic<T>::parameters() {
  std::vector<nn::Parameter<T>*> out = {&conv1_.weight, &conv1_.bias, &conv2_.weight,      &conv2_.bias,
                                        &conv3_.weight, &conv3_.bias, &projection_.weight, &projection_.bias};
  if (spec_.variant == Variant::kLstm) {
    for (auto* p : {&lstm_.w_input, &lstm_.w_hidden, &lstm_.bias, &policy_head_.weight, &policy_head_.bias,
                    &value_head_.weight, &value_head_.bias}) {
      out.push_back(p);
    }
  } else {
    for (auto* p : {&policy_fc1_.weight, &policy_fc1_.bias, &policy_fc2_.weight, &policy_fc2_.bias,
                    &value_fc1_.weight, &value_fc1_.bias, &value_fc2_.weight, &value_fc2_.bias}) {
      out.push_back(p);
    }
  }
  out.push_back(&log_std_);
  return out;
}

template <typename T>
std::vector<const nn::Parameter<T>*> ActorCritic<T>::parameters() const {
  auto mutable_params = const_cast<ActorCritic*>(this)->parameters();
  return {mutable_params.begin(), mutable_params.end()};
}

template <typename T>
std::vector<nn::Parameter<T>*> ActorCritic<T>::value_parameters() {
  if (spec_.variant == Variant::kLstm) return {&value_head_.weight, &value_head_.bias};
  return {&value_fc1_.weight, &value_fc1_.bias, &value_fc2_.weight, &value_fc2_.bias};
}

template <typename T>
std::size_t ActorCritic<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : parameters()) n += p->size();
  return n;
}

template <typename T>
std::vector<nn::ConvShape> ActorCritic<T>::conv_shapes() const {
  return {s1_, s2_, s3_};
}

template <typename T>
void ActorCritic<T>::encode_impl(std::span<const T> observations, int n, ForwardCache* cache,
                                 std::vector<T>& latent) const {
  if (observations.size() != observation_size() * static_cast<std::size_t>(n)) {
    throw std::invalid_argument("encoder: observation size does not match " + std::to_string(spec_.in_channels) +
                                "x" + std::to_string(spec_.image_size) + "^2");
  }
  std::vector<T> a1, a2, a3;
  std::vector<T>& c1 = cache ? cache->conv1 : a1;
  std::vector<T>& c2 = cache ? cache->conv2 : a2;
  std::vector<T>& c3 = cache ? cache->conv3 : a3;
  const int k = spec_.image_size;
  c1.resize(s1_.numel() * n);
  conv1_.forward(observations, n, k, k, c1);
  nn::relu_inplace<T>(c1);
  c2.resize(s2_.numel() * n);
  conv2_.forward(c1, n, s1_.height, s1_.width, c2);
  nn::relu_inplace<T>(c2);
  c3.resize(s3_.numel() * n);
  conv3_.forward(c2, n, s2_.height, s2_.width, c3);
  nn::relu_inplace<T>(c3);
  latent.resize(static_cast<std::size_t>(spec_.latent_size) * n);
  projection_.forward(c3, n, latent);
  nn::relu_inplace<T>(latent);
}

template <typename T>
void ActorCritic<T>::encode(std::span<const T> observations, int n, std::span<T> latent) const {
  std::vector<T> z;
  encode_impl(observations, n, nullptr, z);
  if (latent.size() != z.size()) throw std::invalid_argument("encoder: latent buffer size mismatch");
  std::copy(z.begin(), z.end(), latent.begin());
}

template <typename T>
PolicyOutputs<T> ActorCritic<T>::forward(const SequenceBatch<T>& input, RecurrentState<T>& state,
                                         ForwardCache* cache) const {
  const int steps = input.steps;
  const int batch = input.batch;
  const int n = steps * batch;
  const int m = spec_.measurement_size;
  const int L = spec_.latent_size;
  const int F = features_of(spec_);
  const int H = spec_.hidden_size;
  if (input.measurements.size() != static_cast<std::size_t>(n) * m) {
    throw std::invalid_argument("forward: measurement size mismatch");
  }
  if (!input.episode_starts.empty() && input.episode_starts.size() != static_cast<std::size_t>(n)) {
    throw std::invalid_argument("forward: episode_starts size mismatch");
  }

  std::vector<T> latent_local, features_local;
  std::vector<T>& latent = cache ? cache->latent : latent_local;
  encode_impl(input.observations, n, cache, latent);
  std::vector<T>& features = cache ? cache->features : features_local;
  features.resize(static_cast<std::size_t>(n) * F);
  for (int i = 0; i < n; ++i) {
    std::copy_n(latent.begin() + static_cast<std::ptrdiff_t>(i) * L, L,
                features.begin() + static_cast<std::ptrdiff_t>(i) * F);
    std::copy_n(input.measurements.begin() + static_cast<std::ptrdiff_t>(i) * m, m,
                features.begin() + static_cast<std::ptrdiff_t>(i) * F + L);
  }
  if (cache) {
    cache->steps = steps;
    cache->batch = batch;
    cache->observations = input.observations;
    cache->starts.assign(input.episode_starts.begin(), input.episode_starts.end());
  }

  PolicyOutputs<T> out;
  out.mean.resize(static_cast<std::size_t>(n));
  out.value.resize(static_cast<std::size_t>(n));
  out.log_std = log_std_.value[0];

  if (spec_.variant == Variant::kLstm) {
    if (state.batch != batch || state.hidden != H) throw std::invalid_argument("forward: recurrent state shape mismatch");
    std::vector<T> trunk_local;
    std::vector<T>& trunk = cache ? cache->trunk : trunk_local;
    trunk.resize(static_cast<std::size_t>(n) * H);
    if (cache) cache->lstm_steps.resize(static_cast<std::size_t>(steps));
    for (int t = 0; t < steps; ++t) {
      for (int b = 0; b < batch && !input.episode_starts.empty(); ++b) {
        if (input.episode_starts[static_cast<std::size_t>(t * batch + b)]) state.reset(b);
      }
      lstm_.step(std::span<const T>(features).subspan(static_cast<std::size_t>(t) * batch * F,
                                                      static_cast<std::size_t>(batch) * F),
                 batch, state.h, state.c, cache ? &cache->lstm_steps[static_cast<std::size_t>(t)] : nullptr);
      std::copy(state.h.begin(), state.h.end(), trunk.begin() + static_cast<std::ptrdiff_t>(t) * batch * H);
    }
    policy_head_.forward(trunk, n, out.mean);
    value_head_.forward(trunk, n, out.value);
  } else {
    std::vector<T> ph_local, vh_local;
    std::vector<T>& ph = cache ? cache->policy_hidden : ph_local;
    std::vector<T>& vh = cache ? cache->value_hidden : vh_local;
    ph.resize(static_cast<std::size_t>(n) * H);
    vh.resize(static_cast<std::size_t>(n) * H);
    policy_fc1_.forward(features, n, ph);
    nn::relu_inplace<T>(ph);
    policy_fc2_.forward(ph, n, out.mean);
    value_fc1_.forward(features, n, vh);
    nn::relu_inplace<T>(vh);
    value_fc2_.forward(vh, n, out.value);
  }
  return out;
}

template <typename T>
void ActorCritic<T>::backward(const ForwardCache& cache, std::span<const T> d_mean, std::span<const T> d_value,
                              T d_log_std, InputGradients* input_grads) {
  const int steps = cache.steps;
  const int batch = cache.batch;
  const int n = steps * batch;
  const int L = spec_.latent_size;
  const int F = features_of(spec_);
  const int H = spec_.hidden_size;
  const int k = spec_.image_size;
  if (d_mean.size() != static_cast<std::size_t>(n) || d_value.size() != static_cast<std::size_t>(n)) {
    throw std::invalid_argument("backward: output gradient size mismatch");
  }

  std::vector<T> d_features(static_cast<std::size_t>(n) * F, T(0));
  if (spec_.variant == Variant::kLstm) {
    std::vector<T> d_trunk(static_cast<std::size_t>(n) * H);
    std::vector<T> d_trunk_v(d_trunk.size());
    policy_head_.backward(cache.trunk, n, d_mean, d_trunk);
    value_head_.backward(cache.trunk, n, d_value, d_trunk_v);
    for (std::size_t i = 0; i < d_trunk.size(); ++i) d_trunk[i] += d_trunk_v[i];

    std::vector<T> dh(static_cast<std::size_t>(batch) * H, T(0));
    std::vector<T> dc(dh.size(), T(0));
    for (int t = steps - 1; t >= 0; --t) {
      for (std::size_t i = 0; i < dh.size(); ++i) dh[i] += d_trunk[static_cast<std::size_t>(t) * batch * H + i];
      lstm_.step_backward(cache.lstm_steps[static_cast<std::size_t>(t)], dh, dc,
                          std::span<T>(d_features).subspan(static_cast<std::size_t>(t) * batch * F,
                                                           static_cast<std::size_t>(batch) * F));
      for (int b = 0; b < batch && !cache.starts.empty(); ++b) {
        if (cache.starts[static_cast<std::size_t>(t * batch + b)]) {
          std::fill_n(dh.begin() + static_cast<std::ptrdiff_t>(b) * H, H, T(0));
          std::fill_n(dc.begin() + static_cast<std::ptrdiff_t>(b) * H, H, T(0));
        }
      }
    }
    if (input_grads) {
      input_grads->h0 = dh;
      input_grads->c0 = dc;
    }
  } else {
    std::vector<T> d_hidden(static_cast<std::size_t>(n) * H);
    std::vector<T> d_feat(d_features.size());
    policy_fc2_.backward(cache.policy_hidden, n, d_mean, d_hidden);
    nn::relu_backward<T>(cache.policy_hidden, d_hidden);
    policy_fc1_.backward(cache.features, n, d_hidden, d_features);
    value_fc2_.backward(cache.value_hidden, n, d_value, d_hidden);
    nn::relu_backward<T>(cache.value_hidden, d_hidden);
    value_fc1_.backward(cache.features, n, d_hidden, d_feat);
    for (std::size_t i = 0; i < d_features.size(); ++i) d_features[i] += d_feat[i];
  }

  std::vector<T> d_latent(static_cast<std::size_t>(n) * L);
  for (int i = 0; i < n; ++i) {
    std::copy_n(d_features.begin() + static_cast<std::ptrdiff_t>(i) * F, L,
                d_latent.begin() + static_cast<std::ptrdiff_t>(i) * L);
  }
  nn::relu_backward<T>(cache.latent, d_latent);
  std::vector<T> d3(cache.conv3.size());
  projection_.backward(cache.conv3, n, d_latent, d3);
  nn::relu_backward<T>(cache.conv3, d3);
  std::vector<T> d2(cache.conv2.size());
  conv3_.backward(cache.conv2, n, s2_.height, s2_.width, d3, d2);
  nn::relu_backward<T>(cache.conv2, d2);
  std::vector<T> d1(cache.conv1.size());
  conv2_.backward(cache.conv1, n, s1_.height, s1_.width, d2, d1);
  nn::relu_backward<T>(cache.conv1, d1);
  if (input_grads) {
    input_grads->observations.assign(cache.observations.size(), T(0));
    conv1_.backward(cache.observations, n, k, k, d1, input_grads->observations);
  } else {
    conv1_.backward(cache.observations, n, k, k, d1, {});
  }
  log_std_.grad[0] += d_log_std;
}

template <typename T>
void ActorCritic<T>::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

template struct RecurrentState<float>;
template struct RecurrentState<double>;
template class ActorCritic<float>;
template class ActorCritic<double>;

}  // namespace rdn::agent
