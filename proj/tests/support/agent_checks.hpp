#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "recurrdrive/agent/actor_critic.hpp"

namespace rdn::testing {

inline agent::NetworkSpec small_spec(agent::Variant variant, int channels = 2, int size = 36) {
  agent::NetworkSpec spec;
  spec.variant = variant;
  spec.in_channels = channels;
  spec.image_size = size;
  spec.latent_size = 16;
  spec.hidden_size = 12;
  return spec;
}

template <typename T>
std::vector<T> random_inputs(std::size_t n, std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<T> v(n);
  for (T& x : v) x = static_cast<T>(u(rng));
  return v;
}

// Runs `steps` x `batch` inputs once unbroken and once split at random cut points with the
// state carried across the cuts. Returns the largest absolute difference over every mean,
// value and the final state.
template <typename T>
double carry_equivalence_error(const agent::ActorCritic<T>& net, int steps, int batch, std::mt19937_64& rng,
                               bool with_resets) {
  const auto& spec = net.spec();
  const std::size_t obs = net.observation_size();
  const auto observations = random_inputs<T>(static_cast<std::size_t>(steps) * batch * obs, rng);
  const auto measurements = random_inputs<T>(static_cast<std::size_t>(steps) * batch * spec.measurement_size, rng, -1, 1);
  std::vector<std::uint8_t> starts(static_cast<std::size_t>(steps) * batch, 0);
  if (with_resets) {
    std::bernoulli_distribution reset(0.05);
    for (auto& s : starts) s = reset(rng) ? 1 : 0;
  }

  auto initial = agent::RecurrentState<T>::zeros(batch, spec.hidden_size);
  auto init_values = random_inputs<T>(initial.h.size() * 2, rng, -0.5, 0.5);
  std::copy(init_values.begin(), init_values.begin() + static_cast<std::ptrdiff_t>(initial.h.size()), initial.h.begin());
  std::copy(init_values.begin() + static_cast<std::ptrdiff_t>(initial.h.size()), init_values.end(), initial.c.begin());

  auto whole_state = initial;
  const agent::SequenceBatch<T> whole{steps, batch, observations, measurements, starts};
  const auto reference = net.forward(whole, whole_state);

  std::vector<int> cuts{0, steps};
  std::uniform_int_distribution<int> cut(1, std::max(1, steps - 1));
  const int n_cuts = std::uniform_int_distribution<int>(1, 6)(rng);
  for (int i = 0; i < n_cuts && steps > 1; ++i) cuts.push_back(cut(rng));
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  double worst = 0.0;
  auto state = initial;
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    const int t0 = cuts[k];
    const int len = cuts[k + 1] - t0;
    const std::size_t first = static_cast<std::size_t>(t0) * batch;
    const std::size_t count = static_cast<std::size_t>(len) * batch;
    const agent::SequenceBatch<T> part{len, batch,
                                       std::span<const T>(observations).subspan(first * obs, count * obs),
                                       std::span<const T>(measurements)
                                           .subspan(first * spec.measurement_size, count * spec.measurement_size),
                                       std::span<const std::uint8_t>(starts).subspan(first, count)};
    const auto out = net.forward(part, state);
    for (std::size_t i = 0; i < count; ++i) {
      worst = std::max(worst, std::abs(static_cast<double>(out.mean[i] - reference.mean[first + i])));
      worst = std::max(worst, std::abs(static_cast<double>(out.value[i] - reference.value[first + i])));
    }
  }
  for (std::size_t i = 0; i < state.h.size(); ++i) {
    worst = std::max(worst, std::abs(static_cast<double>(state.h[i] - whole_state.h[i])));
    worst = std::max(worst, std::abs(static_cast<double>(state.c[i] - whole_state.c[i])));
  }
  return worst;
}

}  // namespace rdn::testing
