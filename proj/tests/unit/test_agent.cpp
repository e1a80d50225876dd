#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "agent_checks.hpp"
#include "gradchecks.hpp"
#include "oracles.hpp"
#include "recurrdrive/agent/actor_critic.hpp"

using namespace rdn;
using namespace rdn::agent;
using rdn::testing::random_inputs;
using rdn::testing::small_spec;

TEST_CASE("encoder shapes for K = 128") {
  NetworkSpec spec;
  const ActorCritic<float> net(spec, 1);
  const auto shapes = net.conv_shapes();
  REQUIRE(shapes.size() == 3);
  CHECK(shapes[0].height == 31);
  CHECK(shapes[1].height == 14);
  CHECK(shapes[2].height == 6);
  CHECK(shapes[2].numel() == 2304);
}

TEST_CASE("encoder output is non-negative and deterministic for every channel count") {
  for (int channels : {1, 3, 6, 5, 15, 30}) {
    NetworkSpec spec = small_spec(Variant::kLstm, channels, 40);
    spec.latent_size = 256;
    const ActorCritic<float> net(spec, 7);
    std::mt19937_64 rng(static_cast<std::uint64_t>(channels));
    const auto obs = random_inputs<float>(net.observation_size() * 2, rng);
    std::vector<float> z(512), again(512);
    net.encode(obs, 2, z);
    net.encode(obs, 2, again);
    CHECK(z == again);
    CHECK(std::all_of(z.begin(), z.end(), [](float v) { return v >= 0.0f; }));
    const std::vector<float> zeros(net.observation_size(), 0.0f);
    std::vector<float> z0(256), z1(256);
    net.encode(zeros, 1, z0);
    net.encode(zeros, 1, z1);
    CHECK(z0 == z1);
  }
}

TEST_CASE("encoder rejects the wrong spatial size") {
  const ActorCritic<float> net(small_spec(Variant::kLstm), 1);
  std::vector<float> obs(net.observation_size() + 5), z(16);
  CHECK_THROWS_AS(net.encode(obs, 1, z), std::invalid_argument);
}

TEST_CASE("forward produces one mean and one value per step") {
  const ActorCritic<float> net(small_spec(Variant::kLstm), 2);
  std::mt19937_64 rng(2);
  const auto obs = random_inputs<float>(net.observation_size() * 6, rng);
  const auto meas = random_inputs<float>(7 * 6, rng);
  auto state = RecurrentState<float>::zeros(2, 12);
  const SequenceBatch<float> input{3, 2, obs, meas, {}};
  const auto a = net.forward(input, state);
  CHECK(a.mean.size() == 6);
  CHECK(a.value.size() == 6);
  CHECK(a.log_std == doctest::Approx(-0.5));
  auto state2 = RecurrentState<float>::zeros(2, 12);
  const auto b = net.forward(input, state2);
  CHECK(a.mean == b.mean);
  CHECK(a.value == b.value);
  CHECK(state.h == state2.h);
}

TEST_CASE("two carried single steps equal one two-step unroll") {
  const ActorCritic<float> net(small_spec(Variant::kLstm), 3);
  std::mt19937_64 rng(3);
  const auto obs = random_inputs<float>(net.observation_size() * 2, rng);
  const auto meas = random_inputs<float>(14, rng);
  auto whole = RecurrentState<float>::zeros(1, 12);
  const auto two = net.forward({2, 1, obs, meas, {}}, whole);
  auto carried = RecurrentState<float>::zeros(1, 12);
  const std::size_t n = net.observation_size();
  const auto first = net.forward({1, 1, std::span<const float>(obs).first(n), std::span<const float>(meas).first(7), {}}, carried);
  const auto second = net.forward({1, 1, std::span<const float>(obs).subspan(n), std::span<const float>(meas).subspan(7), {}}, carried);
  CHECK(std::abs(first.mean[0] - two.mean[0]) <= 1e-6);
  CHECK(std::abs(second.mean[0] - two.mean[1]) <= 1e-6);
  CHECK(std::abs(second.value[0] - two.value[1]) <= 1e-6);
  for (std::size_t i = 0; i < whole.h.size(); ++i) {
    CHECK(std::abs(whole.h[i] - carried.h[i]) <= 1e-6);
    CHECK(std::abs(whole.c[i] - carried.c[i]) <= 1e-6);
  }
}

TEST_CASE("hidden-carry equivalence under arbitrary segmentation") {
  std::mt19937_64 rng(4);
  for (int draw = 0; draw < 3; ++draw) {
    const ActorCritic<float> f32(small_spec(Variant::kLstm), 100 + draw);
    CHECK(rdn::testing::carry_equivalence_error(f32, 24, 2, rng, false) <= 1e-6);
    CHECK(rdn::testing::carry_equivalence_error(f32, 24, 2, rng, true) <= 1e-6);
    const ActorCritic<double> f64(small_spec(Variant::kLstm), 200 + draw);
    CHECK(rdn::testing::carry_equivalence_error(f64, 24, 2, rng, true) <= 1e-12);
  }
}

TEST_CASE("an episode start zeroes the state") {
  const ActorCritic<double> net(small_spec(Variant::kLstm), 5);
  std::mt19937_64 rng(5);
  const auto obs = random_inputs<double>(net.observation_size() * 3, rng);
  const auto meas = random_inputs<double>(21, rng);
  auto state = RecurrentState<double>::zeros(1, 12);
  const std::vector<std::uint8_t> starts{0, 0, 1};
  const auto with_reset = net.forward({3, 1, obs, meas, starts}, state);
  auto fresh = RecurrentState<double>::zeros(1, 12);
  const std::size_t n = net.observation_size();
  const auto alone = net.forward({1, 1, std::span<const double>(obs).subspan(2 * n), std::span<const double>(meas).subspan(14), {}}, fresh);
  CHECK(with_reset.mean[2] == doctest::Approx(alone.mean[0]).epsilon(1e-12));
  CHECK(with_reset.value[2] == doctest::Approx(alone.value[0]).epsilon(1e-12));
}

TEST_CASE("frame-stack variant is stateless") {
  const ActorCritic<float> net(small_spec(Variant::kFrameStack, 10), 6);
  std::mt19937_64 rng(6);
  const std::size_t n = net.observation_size();
  const auto obs = random_inputs<float>(n * 3, rng);
  const auto meas = random_inputs<float>(21, rng);
  auto unused = RecurrentState<float>::zeros(3, 12);
  const auto batched = net.forward({1, 3, obs, meas, {}}, unused);
  for (int i : {2, 0, 1}) {
    auto s = RecurrentState<float>::zeros(1, 12);
    const auto one = net.forward({1, 1, std::span<const float>(obs).subspan(n * i, n),
                                  std::span<const float>(meas).subspan(7 * static_cast<std::size_t>(i), 7), {}},
                                 s);
    CHECK(one.mean[0] == doctest::Approx(batched.mean[static_cast<std::size_t>(i)]).epsilon(1e-6));
    CHECK(one.value[0] == doctest::Approx(batched.value[static_cast<std::size_t>(i)]).epsilon(1e-6));
  }
}

TEST_CASE("parameter counts differ by the trunk sizes") {
  for (int channels : {6, 30}) {
    NetworkSpec lstm_spec;
    lstm_spec.in_channels = channels;
    NetworkSpec fs_spec = lstm_spec;
    fs_spec.variant = Variant::kFrameStack;
    const ActorCritic<float> lstm(lstm_spec, 1);
    const ActorCritic<float> fs(fs_spec, 1);
    const long long in = 263, h = 256;
    const long long lstm_trunk = 4 * h * in + 4 * h * h + 4 * h + 2 * (h + 1);
    const long long fs_heads = 2 * (in * h + h) + 2 * (h + 1);
    CHECK(static_cast<long long>(lstm.parameter_count()) - static_cast<long long>(fs.parameter_count()) ==
          lstm_trunk - fs_heads);
    const long long encoder = (channels * 64LL * 32 + 32) + (32 * 16LL * 64 + 64) + (64 * 9LL * 64 + 64) + (2304LL * 256 + 256);
    CHECK(static_cast<long long>(lstm.parameter_count()) == encoder + lstm_trunk + 1);
  }
}

TEST_CASE("shared encoder feeds both heads") {
  const ActorCritic<double> net(small_spec(Variant::kLstm), 8);
  std::mt19937_64 rng(8);
  const auto obs = random_inputs<double>(net.observation_size() * 2, rng);
  const auto meas = random_inputs<double>(14, rng);
  ActorCritic<double>::ForwardCache cache;
  auto state = RecurrentState<double>::zeros(2, 12);
  net.forward({1, 2, obs, meas, {}}, state, &cache);
  std::vector<double> z(32);
  net.encode(obs, 2, z);
  CHECK(cache.latent == z);
}

TEST_CASE("gradients flow back through time to the first observation") {
  ActorCritic<double> net(small_spec(Variant::kLstm), 9);
  std::mt19937_64 rng(9);
  const auto obs = random_inputs<double>(net.observation_size() * 4, rng);
  const auto meas = random_inputs<double>(28, rng);
  ActorCritic<double>::ForwardCache cache;
  auto state = RecurrentState<double>::zeros(1, 12);
  net.forward({4, 1, obs, meas, {}}, state, &cache);
  const std::vector<double> d_mean(4, 0.0);
  std::vector<double> d_value(4, 0.0);
  d_value[3] = 1.0;
  ActorCritic<double>::InputGradients grads;
  net.backward(cache, d_mean, d_value, 0.0, &grads);
  const std::size_t n = net.observation_size();
  double first_step = 0.0;
  for (std::size_t i = 0; i < n; ++i) first_step += std::abs(grads.observations[i]);
  CHECK(first_step > 0.0);
}

namespace {

// Finite-difference check of the full network on a sample of coordinates.
template <typename Net>
double network_gradcheck(Net& net, int steps, int batch, bool with_starts, std::mt19937_64& rng) {
  const std::size_t n = static_cast<std::size_t>(steps) * batch;
  std::vector<double> obs = random_inputs<double>(net.observation_size() * n, rng);
  const auto meas = random_inputs<double>(7 * n, rng, -1, 1);
  std::vector<std::uint8_t> starts;
  if (with_starts) {
    starts.assign(n, 0);
    starts[static_cast<std::size_t>(batch)] = 1;
  }
  const auto rm = rdn::testing::random_vector(n, rng);
  const auto rv = rdn::testing::random_vector(n, rng);
  const double rl = 0.7;
  const auto h0 = rdn::testing::random_vector(static_cast<std::size_t>(batch) * net.spec().hidden_size, rng, 0.5);
  auto loss = [&] {
    auto s = RecurrentState<double>::zeros(batch, net.spec().hidden_size);
    s.h = h0;
    const auto out = net.forward({steps, batch, obs, meas, starts}, s);
    return rdn::testing::dot(rm, out.mean) + rdn::testing::dot(rv, out.value) + rl * out.log_std;
  };
  typename Net::ForwardCache cache;
  auto s = RecurrentState<double>::zeros(batch, net.spec().hidden_size);
  s.h = h0;
  net.zero_grad();
  net.forward({steps, batch, obs, meas, starts}, s, &cache);
  typename Net::InputGradients grads;
  net.backward(cache, rm, rv, rl, &grads);

  double worst = 0.0;
  std::uniform_int_distribution<std::size_t> pick;
  auto probe = [&](std::vector<double>& values, const std::vector<double>& analytic, int samples) {
    for (int k = 0; k < samples; ++k) {
      const std::size_t i = pick(rng) % values.size();
      const double saved = values[i];
      values[i] = saved + 1e-5;
      const double up = loss();
      values[i] = saved - 1e-5;
      const double down = loss();
      values[i] = saved;
      worst = std::max(worst, rdn::testing::relative_error(analytic[i], (up - down) / 2e-5));
    }
  };
  for (auto* p : net.parameters()) probe(p->value, p->grad, 6);
  probe(obs, grads.observations, 20);
  return worst;
}

}  // namespace

TEST_CASE("full network backward matches finite differences") {
  std::mt19937_64 rng(10);
  ActorCritic<double> lstm(small_spec(Variant::kLstm), 11);
  CHECK(network_gradcheck(lstm, 3, 2, false, rng) < 1e-5);
  CHECK(network_gradcheck(lstm, 3, 2, true, rng) < 1e-5);
  ActorCritic<double> fs(small_spec(Variant::kFrameStack, 4), 12);
  CHECK(network_gradcheck(fs, 2, 2, false, rng) < 1e-5);
}

TEST_CASE("variant names") {
  CHECK(parse_variant("lstm") == Variant::kLstm);
  CHECK(parse_variant("fs") == Variant::kFrameStack);
  CHECK(std::string(to_string(Variant::kFrameStack)) == "fs");
  CHECK_THROWS_AS(parse_variant("gru"), std::invalid_argument);
}
