#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "agent_checks.hpp"
#include "oracles.hpp"
#include "recurrdrive/nn/distributions.hpp"
#include "recurrdrive/ppo/gae.hpp"
#include "recurrdrive/ppo/normalize.hpp"
#include "recurrdrive/ppo/ppo.hpp"
#include "recurrdrive/ppo/trainer.hpp"

using namespace rdn;
using namespace rdn::ppo;
namespace fs = std::filesystem;

namespace {

struct Sequences {
  std::vector<double> rewards, values, bootstrap;
  std::vector<std::uint8_t> dones;
};

Sequences random_sequences(int envs, int steps, std::mt19937_64& rng, double done_prob) {
  Sequences s;
  const auto n = static_cast<std::size_t>(envs) * steps;
  s.rewards = rdn::testing::random_vector(n, rng, 3.0);
  s.values = rdn::testing::random_vector(n, rng, 3.0);
  s.bootstrap = rdn::testing::random_vector(static_cast<std::size_t>(envs), rng, 3.0);
  std::bernoulli_distribution done(done_prob);
  s.dones.resize(n);
  for (auto& d : s.dones) d = done(rng) ? 1 : 0;
  return s;
}

}  // namespace

TEST_CASE("gae single step") {
  const std::vector<double> r{2.0}, v{1.0}, boot{3.0};
  const std::vector<std::uint8_t> d{0};
  const GaeResult g = compute_gae(r, v, d, boot, 1, 1, 0.9, 0.95);
  CHECK(g.advantages[0] == doctest::Approx(2.0 + 0.9 * 3.0 - 1.0));
  CHECK(g.returns[0] == doctest::Approx(2.0 + 0.9 * 3.0));
  const std::vector<std::uint8_t> terminal{1};
  CHECK(compute_gae(r, v, terminal, boot, 1, 1, 0.9, 0.95).advantages[0] == doctest::Approx(1.0));
}

TEST_CASE("gae with lambda 1 and zero values is the discounted return") {
  std::mt19937_64 rng(1);
  for (int k = 0; k < 100; ++k) {
    const int T = 1 + static_cast<int>(rng() % 40);
    const auto r = rdn::testing::random_vector(static_cast<std::size_t>(T), rng, 5.0);
    const std::vector<double> v(r.size(), 0.0), boot{0.0};
    const std::vector<std::uint8_t> d(r.size(), 0);
    const GaeResult g = compute_gae(r, v, d, boot, 1, T, 0.99, 1.0);
    for (int t = 0; t < T; ++t) {
      double sum = 0.0;
      for (int u = T - 1; u >= t; --u) sum = r[static_cast<std::size_t>(u)] + 0.99 * sum;
      CHECK(std::abs(g.advantages[static_cast<std::size_t>(t)] - sum) < 1e-8);
    }
  }
}

TEST_CASE("gae of nothing is nothing") {
  const std::vector<double> zero(32, 0.0), boot(4, 0.0);
  const std::vector<std::uint8_t> d(32, 0);
  const GaeResult g = compute_gae(zero, zero, d, boot, 4, 8, 0.999, 0.95);
  for (double a : g.advantages) CHECK(a == 0.0);
  for (double r : g.returns) CHECK(r == 0.0);
}

TEST_CASE("gae matches the forward-sum definition") {
  std::mt19937_64 rng(2);
  for (double lambda : {0.0, 0.95, 1.0}) {
    for (double gamma : {0.9, 0.999}) {
      for (int k = 0; k < 20; ++k) {
        const Sequences s = random_sequences(4, 16, rng, 0.1);
        const GaeResult g = compute_gae(s.rewards, s.values, s.dones, s.bootstrap, 4, 16, gamma, lambda);
        std::vector<double> adv, ret;
        rdn::testing::brute_force_gae(s.rewards, s.values, s.dones, s.bootstrap, 4, 16, gamma, lambda, adv, ret);
        for (std::size_t i = 0; i < adv.size(); ++i) {
          CHECK(std::abs(g.advantages[i] - adv[i]) < 1e-8);
          CHECK(std::abs(g.returns[i] - ret[i]) < 1e-8);
        }
        if (lambda == 0.0) {
          for (int b = 0; b < 4; ++b) {
            for (int t = 0; t < 16; ++t) {
              const std::size_t i = static_cast<std::size_t>(b) * 16 + t;
              const double next = t + 1 < 16 ? s.values[i + 1] : s.bootstrap[static_cast<std::size_t>(b)];
              CHECK(g.advantages[i] == s.rewards[i] + (s.dones[i] ? 0.0 : gamma * next) - s.values[i]);
            }
          }
        }
      }
    }
  }
}

TEST_CASE("running norm") {
  SUBCASE("constant stream") {
    RunningNorm n(2);
    for (int i = 0; i < 50; ++i) n.update(std::vector<double>{3.0, -1.0});
    std::vector<double> out(2);
    n.normalize(std::vector<double>{3.0, -1.0}, out);
    CHECK(out[0] == 0.0);
    CHECK(out[1] == 0.0);
  }
  SUBCASE("first sample is finite") {
    RunningNorm n(1);
    n.update(1e6);
    std::vector<double> out(1);
    n.normalize(std::vector<double>{1e6 + 1.0}, out);
    CHECK(std::isfinite(out[0]));
    n.normalize(std::vector<double>{1e6 + 1.0}, out, 10.0);
    CHECK(out[0] == 10.0);
  }
  SUBCASE("matches two-pass statistics") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g(5.0, 3.0);
    RunningNorm n(1);
    std::vector<double> xs(1000);
    for (double& x : xs) {
      x = g(rng);
      n.update(x);
    }
    const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / 1000.0;
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= 1000.0;
    CHECK(std::abs(n.mean() - mean) / std::abs(mean) <= 1e-9);
    CHECK(std::abs(n.variance() - var) / var <= 1e-9);
    const RunningNorm back = RunningNorm::from_json(n.to_json());
    CHECK(back.mean() == n.mean());
    CHECK(back.count() == 1000);
  }
}

TEST_CASE("reward normalization preserves sign") {
  RewardNormalizer norm(2, 0.99);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-250.0, 20.0);
  for (int i = 0; i < 2000; ++i) {
    const double r = u(rng);
    const double s = norm.normalize(i % 2, r, i % 97 == 0);
    CHECK(std::signbit(s) == std::signbit(r));
    CHECK(std::abs(s) <= 10.0);
  }
  CHECK(norm.scale() > 1.0);
  CHECK(norm.normalize(0, 0.0, false) == 0.0);
}

TEST_CASE("clipped surrogate branches") {
  const double eps = 0.1;
  SUBCASE("positive advantage, ratio above the band") {
    const SurrogateTerm t = clipped_surrogate(1.3, 2.0, eps);
    CHECK(t.value == doctest::Approx(1.1 * 2.0));
    CHECK(t.d_ratio == 0.0);
  }
  SUBCASE("negative advantage, ratio below the band") {
    const SurrogateTerm t = clipped_surrogate(0.5, -2.0, eps);
    CHECK(t.value == doctest::Approx(0.9 * -2.0));
    CHECK(t.d_ratio == 0.0);
  }
  SUBCASE("unclipped branches") {
    CHECK(clipped_surrogate(1.05, 2.0, eps).value == doctest::Approx(2.1));
    CHECK(clipped_surrogate(1.05, 2.0, eps).d_ratio == 2.0);
    CHECK(clipped_surrogate(0.5, 2.0, eps).d_ratio == 2.0);      // pessimistic side stays active
    CHECK(clipped_surrogate(1.3, -2.0, eps).value == doctest::Approx(-2.6));
  }
  SUBCASE("never exceeds the bound") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> ratio(0.0, 3.0), adv(-5.0, 5.0);
    for (int i = 0; i < 10000; ++i) {
      const double a = adv(rng);
      CHECK(clipped_surrogate(ratio(rng), a, eps).value <= std::max(1.1 * a, 0.9 * a));
    }
  }
  CHECK(clip_bound(0.1, 3.0) == doctest::Approx(3.3));
  CHECK(clip_bound(0.1, -3.0) == doctest::Approx(-2.7));
}

TEST_CASE("advantage normalization") {
  const std::vector<double> a{1.0, 2.0, 3.0, 6.0};
  const auto n = normalized_advantages(a);
  const double mean = std::accumulate(n.begin(), n.end(), 0.0) / 4.0;
  double var = 0.0;
  for (double x : n) var += (x - mean) * (x - mean);
  CHECK(std::abs(mean) < 1e-12);
  CHECK(var / 4.0 == doctest::Approx(1.0));
  const auto flat = normalized_advantages(std::vector<double>(5, 2.0));
  for (double x : flat) CHECK(x == 0.0);
}

namespace {

EnvConfig small_env(int max_ticks = 1000) {
  EnvConfig cfg;
  cfg.scenario.layout = sim::Layout::kStopLine;
  cfg.scenario.n_vehicles = 1;
  cfg.scenario.n_pedestrians = 0;
  cfg.render = bev::default_render_config(36);
  cfg.max_episode_ticks = max_ticks;
  return cfg;
}

Collector make_collector(int envs, int hidden, std::uint64_t seed, int max_ticks = 1000) {
  const EnvConfig cfg = small_env(max_ticks);
  const auto map = sim::make_map(cfg.scenario);
  std::vector<DrivingEnv> list;
  for (int b = 0; b < envs; ++b) list.emplace_back(cfg, map, seed + static_cast<std::uint64_t>(b));
  return Collector(std::move(list), 1, hidden, 0.999, seed);
}

agent::ActorCritic<float> small_net(std::uint64_t seed) {
  return agent::ActorCritic<float>(rdn::testing::small_spec(agent::Variant::kLstm, 6, 36), seed);
}

}  // namespace

TEST_CASE("rollout buffer shapes") {
  auto net = small_net(1);
  Collector c = make_collector(3, 12, 1);
  RolloutBuffer buf;
  c.collect(net, 5, buf);
  const std::size_t n = 15;
  CHECK(buf.actions.size() == n);
  CHECK(buf.log_probs.size() == n);
  CHECK(buf.values.size() == n);
  CHECK(buf.rewards.size() == n);
  CHECK(buf.dones.size() == n);
  CHECK(buf.measurements.size() == n * 7);
  CHECK(buf.frame_ids.size() == n);
  CHECK(buf.initial_h.size() == 36);
  CHECK(buf.bootstrap.size() == 3);
  std::vector<float> obs;
  buf.gather_observations(1, obs);
  CHECK(obs.size() == 5 * net.observation_size());
  for (std::size_t i = 0; i < n; ++i) {
    CHECK(buf.actions[i] > -1.0);
    CHECK(buf.actions[i] < 1.0);
    // Behaviour log-probabilities are reproducible from the stored (mean, log_std, action).
    CHECK(nn::TanhNormal::log_prob(buf.actions[i], buf.means[i], buf.behavior_log_std) == buf.log_probs[i]);
  }
}

TEST_CASE("carried segments equal one long segment") {
  auto net = small_net(2);
  Collector split = make_collector(2, 12, 7);
  Collector whole = make_collector(2, 12, 7);
  RolloutBuffer a, b, full;
  split.collect(net, 4, a);
  split.collect(net, 4, b);
  whole.collect(net, 8, full);
  for (int e = 0; e < 2; ++e) {
    for (int t = 0; t < 8; ++t) {
      const RolloutBuffer& part = t < 4 ? a : b;
      const std::size_t i = part.index(e, t % 4);
      const std::size_t j = full.index(e, t);
      REQUIRE(full.dones[j] == 0);
      CHECK(std::abs(part.values[i] - full.values[j]) <= 1e-5);
      CHECK(std::abs(part.means[i] - full.means[j]) <= 1e-5);
    }
  }
  for (std::size_t i = 0; i < split.carry().h.size(); ++i) CHECK(std::abs(split.carry().h[i] - whole.carry().h[i]) <= 1e-5);
}

TEST_CASE("episode end zeroes the carried state") {
  auto net = small_net(3);
  Collector c = make_collector(2, 12, 3, 3);
  RolloutBuffer buf;
  c.collect(net, 2, buf);
  CHECK(std::any_of(c.carry().h.begin(), c.carry().h.end(), [](float v) { return v != 0.0f; }));
  c.collect(net, 1, buf);  // third tick hits the time limit
  CHECK(buf.dones[buf.index(0, 0)] == 1);
  for (float v : c.carry().h) CHECK(v == 0.0f);
  for (float v : c.carry().c) CHECK(v == 0.0f);
  c.collect(net, 5, buf);
  CHECK(buf.dones[buf.index(1, 2)] == 1);
  CHECK(buf.starts[buf.index(1, 3)] == 1);
  CHECK(buf.starts[buf.index(1, 2)] == 0);
}

TEST_CASE("first-epoch ratios are one") {
  auto net = small_net(4);
  Collector c = make_collector(2, 12, 4, 40);
  RolloutBuffer buf;
  c.collect(net, 64, buf);
  buf.compute_advantages(0.999, 0.95);
  for (int e = 0; e < 2; ++e) {
    const SequenceLoss loss = sequence_loss(net, buf, e, buf.advantages, 0.1, {}, false);
    double mean_adv = 0.0;
    for (int t = 0; t < 64; ++t) mean_adv += buf.advantages[buf.index(e, t)] / 64.0;
    for (double r : loss.ratios) CHECK(std::abs(r - 1.0) <= 1e-6);
    CHECK(loss.policy_loss == doctest::Approx(-mean_adv).epsilon(1e-5));
    CHECK(loss.clip_frac == 0.0);
  }
}

TEST_CASE("value head regression decreases the loss") {
  auto net = small_net(5);
  Collector c = make_collector(2, 12, 5);
  RolloutBuffer buf;
  c.collect(net, 32, buf);
  buf.compute_advantages(0.999, 0.95);
  nn::AdamConfig cfg;
  cfg.lr = 1e-3;
  nn::Adam<float> adam(net.value_parameters(), cfg);
  const LossWeights value_only{0.0, 1.0, 0.0};
  auto value_loss = [&] {
    double total = 0.0;
    for (int e = 0; e < 2; ++e) total += sequence_loss(net, buf, e, buf.advantages, 0.1, value_only, false).value_loss;
    return total;
  };
  double previous = value_loss();
  const double initial = previous;
  for (int k = 0; k < 50; ++k) {
    net.zero_grad();
    for (int e = 0; e < 2; ++e) sequence_loss(net, buf, e, buf.advantages, 0.1, value_only, true);
    adam.step();
    const double now = value_loss();
    CHECK(now < previous);
    previous = now;
  }
  CHECK(previous < initial);
}

TEST_CASE("ppo update keeps parameters finite and reports stats") {
  auto net = small_net(6);
  Collector c = make_collector(2, 12, 6, 50);
  RolloutBuffer buf;
  c.collect(net, 32, buf);
  buf.compute_advantages(0.999, 0.95);
  PpoConfig cfg;
  nn::AdamConfig adam_cfg;
  nn::Adam<float> adam(net.parameters(), adam_cfg);
  const UpdateStats s = ppo_update(net, adam, buf, cfg);
  CHECK(s.first_ratio_deviation <= 1e-6);
  CHECK(std::isfinite(s.policy_loss));
  CHECK(s.value_loss >= 0.0);
  CHECK(s.approx_kl >= 0.0);
  CHECK(adam.steps_taken() == cfg.epochs * 2);
}

TEST_CASE("overflowing ratios on the clipped branch give zero policy gradient") {
  auto net = small_net(6);
  Collector c = make_collector(2, 12, 6, 50);
  RolloutBuffer buf;
  c.collect(net, 32, buf);
  buf.compute_advantages(0.999, 0.95);
  // A stale log-probability far below the current one makes exp(logp - old) overflow to inf.
  for (auto& lp : buf.log_probs) lp = -1e4;
  for (auto& a : buf.advantages) a = 1.0;
  PpoConfig cfg;
  cfg.normalize_advantages = false;
  nn::AdamConfig adam_cfg;
  nn::Adam<float> adam(net.parameters(), adam_cfg);
  UpdateStats s;
  REQUIRE_NOTHROW(s = ppo_update(net, adam, buf, cfg));
  CHECK(std::isfinite(s.grad_norm));
  CHECK(s.clip_frac == doctest::Approx(1.0));
}

namespace {

TrainConfig smoke_config() {
  TrainConfig cfg;
  cfg.scenario.grid_rows = 2;
  cfg.scenario.grid_cols = 2;
  cfg.scenario.n_vehicles = 4;
  cfg.scenario.n_pedestrians = 6;
  cfg.agent.image_size = 36;
  cfg.ppo.total_steps = 512;
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("rdn_unit_" + name);
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("smoke training run bookkeeping and determinism") {
  const TrainConfig cfg = smoke_config();
  TrainOptions opts;
  opts.seed = 3;
  opts.out_dir = scratch("smoke_a");
  const TrainResult a = train(cfg, opts);
  CHECK(a.steps == 512);
  CHECK(a.rows.size() == 1);
  REQUIRE(a.checkpoints.size() == 1);
  CHECK(read_train_log(a.log_path).size() == 1);
  opts.out_dir = scratch("smoke_b");
  const TrainResult b = train(cfg, opts);
  CHECK(slurp(a.log_path) == slurp(b.log_path));
  CHECK(slurp(a.checkpoints[0]) == slurp(b.checkpoints[0]));

  opts.out_dir = scratch("smoke_threads");
  opts.threads = 2;
  const TrainResult c = train(cfg, opts);
  CHECK(slurp(a.log_path) == slurp(c.log_path));

  const LoadedAgent agent = load_agent(a.checkpoints[0]);
  CHECK(agent.steps == 512);
  CHECK(agent.config.agent.image_size == 36);
  CHECK(agent.metadata.at("variant") == "lstm");
  CHECK(agent.metadata.at("bev_mode") == "multi");
  for (const char* d : {"smoke_a", "smoke_b", "smoke_threads"}) fs::remove_all(scratch(d));
}

TEST_CASE("resume continues without duplicate rows") {
  TrainConfig cfg = smoke_config();
  cfg.ppo.checkpoint_interval = 512;
  cfg.ppo.total_steps = 1536;
  TrainOptions opts;
  opts.seed = 9;
  opts.out_dir = scratch("resume");
  train(cfg, opts);
  // Pretend the run died after logging 1536 but before its checkpoint was written.
  fs::remove(checkpoint_path(opts.out_dir, 1536));
  fs::remove(checkpoint_path(opts.out_dir, 1024));
  opts.resume = true;
  const TrainResult r = train(cfg, opts);
  CHECK(r.rows.size() == 2);
  const auto rows = read_train_log(r.log_path);
  REQUIRE(rows.size() == 3);
  for (std::size_t i = 0; i < rows.size(); ++i) CHECK(rows[i].steps == 512 * static_cast<std::int64_t>(i + 1));
  CHECK(latest_checkpoint(opts.out_dir) == checkpoint_path(opts.out_dir, 1536));

  // A corrupt newest checkpoint is rejected.
  fs::resize_file(checkpoint_path(opts.out_dir, 1536), 100);
  cfg.ppo.total_steps = 2048;
  CHECK_THROWS_AS(train(cfg, opts), nn::CheckpointError);
  fs::remove_all(opts.out_dir);
}

TEST_CASE("resume rejects a different agent configuration") {
  TrainConfig cfg = smoke_config();
  TrainOptions opts;
  opts.out_dir = scratch("resume_mismatch");
  train(cfg, opts);
  cfg.agent.bev_mode = bev::BevMode::kGray;
  cfg.ppo.total_steps = 1024;
  opts.resume = true;
  CHECK_THROWS_AS(train(cfg, opts), TrainingError);
  fs::remove_all(opts.out_dir);
}

TEST_CASE("training log format") {
  const LogRow row{512, -1.5, 0.25, 3.0, 0.125, 1e-3};
  CHECK(format_log_row(row) == "512,-1.5,0.25,3,0.125,0.001");
  CHECK(std::string(kTrainLogHeader) == "steps,mean_return,policy_loss,value_loss,clip_frac,approx_kl");
}
