#include "qrsrm/agent.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>

#include "oracles.hpp"

namespace qrsrm {
namespace {

TrainConfig small_config(const std::string& algorithm, long steps) {
  TrainConfig c;
  c.algorithm = Algorithm::parse(algorithm);
  c.quantiles = 8;
  c.hidden = {16, 16};
  c.batch_size = 32;
  c.total_timesteps = steps;
  c.warmup = 200;
  c.replay_capacity = 5000;
  c.h_frequency = 500;
  c.sync_frequency = 50;
  c.log_frequency = 250;
  c.learning_rate = 1e-3;
  return c;
}

std::unique_ptr<Environment> env_named(const std::string& name) {
  EnvConfig ec;
  ec.name = name;
  return make_environment(ec);
}

// Output layer zeroed except the bias, so every state maps to `rows`.
void force_rows(Agent& agent, const std::vector<double>& rows) {
  Checkpoint ckpt = agent.checkpoint();
  std::fill(ckpt.parameters.begin(), ckpt.parameters.end(), 0.0);
  ASSERT_EQ(rows.size(), static_cast<std::size_t>(ckpt.layers.back()));
  std::copy(rows.begin(), rows.end(), ckpt.parameters.end() - static_cast<std::ptrdiff_t>(rows.size()));
  agent.load(ckpt);
}

TEST(TrainConfig, RejectsInvalidFields) {
  auto bad = [](auto mutate) {
    TrainConfig c;
    mutate(c);
    return c;
  };
  EXPECT_NO_THROW(validate(TrainConfig{}));
  EXPECT_THROW(validate(bad([](TrainConfig& c) { c.quantiles = 0; })), std::invalid_argument);
  EXPECT_THROW(validate(bad([](TrainConfig& c) { c.learning_rate = 0; })), std::invalid_argument);
  EXPECT_THROW(validate(bad([](TrainConfig& c) { c.batch_size = 0; })), std::invalid_argument);
  EXPECT_THROW(validate(bad([](TrainConfig& c) { c.hidden = {}; })), std::invalid_argument);
  EXPECT_THROW(validate(bad([](TrainConfig& c) { c.h_frequency = 0; })), std::invalid_argument);
  EXPECT_THROW(validate(bad([](TrainConfig& c) { c.epsilon_end = 1.5; })), std::invalid_argument);
  EXPECT_THROW(validate(bad([](TrainConfig& c) { c.total_timesteps = -1; })), std::invalid_argument);
}

TEST(TrainConfig, ExplorationDecaysLinearlyOverHalfTheRun) {
  TrainConfig c;
  c.total_timesteps = 1000;
  EXPECT_DOUBLE_EQ(exploration_rate(c, 0), 1.0);
  EXPECT_NEAR(exploration_rate(c, 250), 0.525, 1e-12);
  EXPECT_DOUBLE_EQ(exploration_rate(c, 500), 0.05);
  EXPECT_DOUBLE_EQ(exploration_rate(c, 999), 0.05);
}

TEST(ReplayBuffer, SamplesOnlyStoredTransitions) {
  ReplayBuffer buffer(4, 2);
  std::mt19937_64 rng(1);
  EXPECT_THROW(buffer.sample(3, rng), std::logic_error);
  const double f[2] = {1.0, 2.0};
  for (int k = 0; k < 3; ++k) buffer.add(f, k, 0.5 * k, f, k == 2, 0.0, 1.0, 0.0);
  EXPECT_EQ(buffer.size(), 3u);
  for (std::size_t i : buffer.sample(1000, rng)) EXPECT_LT(i, 3u);
  for (int k = 3; k < 10; ++k) buffer.add(f, k, 0.5 * k, f, false, 0.0, 1.0, 0.0);
  EXPECT_EQ(buffer.size(), 4u);
  // Ring order: slots hold actions 8, 9, 6, 7.
  EXPECT_EQ(buffer.action(0), 8);
  EXPECT_EQ(buffer.action(2), 6);
  EXPECT_FLOAT_EQ(buffer.features(1)[1], 2.0f);
}

TEST(Agent, FeatureLayoutFollowsAlgorithm) {
  auto env = env_named("put");
  EXPECT_EQ(Agent(*env, 0.99, small_config("qrdqn", 0), 1).feature_dim(), 2u);
  EXPECT_EQ(Agent(*env, 0.99, small_config("qricvar:0.5", 0), 1).feature_dim(), 2u);
  EXPECT_EQ(Agent(*env, 0.99, small_config("qrcvar:0.5", 0), 1).feature_dim(), 3u);
  const Agent srm(*env, 0.99, small_config("qrsrm:cvar:0.5", 0), 1);
  ASSERT_EQ(srm.feature_dim(), 4u);
  AugmentedState st = srm.initial_state();
  st.s = 0.5;  // put returns lie in [0, strike = 1]
  st.c = 0.9;
  std::vector<double> f(4);
  srm.encode(st, f.data());
  EXPECT_DOUBLE_EQ(f[2], 0.5);
  EXPECT_DOUBLE_EQ(f[3], 0.9);
}

TEST(Agent, NoTrainingLeavesInitialState) {
  auto env = env_named("cliff");
  Agent agent(*env, 0.95, small_config("qrsrm:cvar:0.1", 0), 3);
  EXPECT_TRUE(agent.train().empty());
  for (double v : agent.h().ref_quantiles) EXPECT_EQ(v, 0.0);
  for (double v : agent.quantiles_at(agent.initial_state())) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(agent.act(agent.initial_state()), 0);
}

TEST(Agent, UpdateHTakesTheSingleRowSorted) {
  FixtureMdp env(FixtureModel::example1(), EnvConfig{});
  TrainConfig c = small_config("qrsrm:cvar:0.5", 0);
  c.quantiles = 4;
  Agent agent(env, 0.5, c, 1);
  force_rows(agent, {3, 1, 4, 2});
  agent.update_h();
  EXPECT_EQ(agent.h().ref_quantiles, (std::vector<double>{1, 2, 3, 4}));
  EXPECT_EQ(agent.h().quantile_weights, initial_h(RiskSpectrum::cvar(0.5), 4).quantile_weights);
}

TEST(Agent, UpdateHPicksTheDominatingRow) {
  FixtureMdp env(FixtureModel::load(QRSRM_SOURCE_DIR "/data/fixtures/choice.txt", 0.9), EnvConfig{});
  for (const char* algo : {"qrsrm:cvar:0.2", "qrsrm:erm:3", "qrsrm:mean"}) {
    TrainConfig c = small_config(algo, 0);
    c.quantiles = 3;
    Agent agent(env, 0.9, c, 1);
    force_rows(agent, {1, 1, 1, 2, 2, 2});
    agent.update_h();
    EXPECT_EQ(agent.h().ref_quantiles, (std::vector<double>{2, 2, 2})) << algo;
  }
}

TEST(Agent, UpdateBTakesTheAlphaQuantileOfTheGreedyRow) {
  FixtureMdp env(FixtureModel::load(QRSRM_SOURCE_DIR "/data/fixtures/choice.txt", 0.9), EnvConfig{});
  TrainConfig c = small_config("qrcvar:0.5", 0);
  c.quantiles = 4;
  Agent agent(env, 0.9, c, 1);
  // b0 = 0: row 0 has hinge -1, row 1 has 0, so action 1 is greedy.
  force_rows(agent, {-1, 5, 6, 7, 4, 1, 3, 2});
  EXPECT_DOUBLE_EQ(agent.update_b(), 2.0);
  EXPECT_DOUBLE_EQ(agent.initial_state().b, 2.0);
}

TEST(Agent, TrainingIsDeterministicPerSeed) {
  auto env = env_named("cliff");
  for (const char* algo : {"qrsrm:cvar:0.3", "qrcvar:0.5", "qricvar:0.5", "qrdqn"}) {
    Agent a(*env, 0.95, small_config(algo, 2000), 42);
    Agent b(*env, 0.95, small_config(algo, 2000), 42);
    const auto ra = a.train();
    const auto rb = b.train();
    ASSERT_EQ(ra.size(), rb.size());
    for (std::size_t k = 0; k < ra.size(); ++k) {
      EXPECT_EQ(ra[k].step, rb[k].step);
      EXPECT_EQ(ra[k].episodes, rb[k].episodes);
      EXPECT_EQ(ra[k].loss, rb[k].loss);
      EXPECT_EQ(ra[k].w1, rb[k].w1);
      EXPECT_EQ(ra[k].mean_return, rb[k].mean_return);
    }
    EXPECT_EQ(a.checkpoint().parameters, b.checkpoint().parameters) << algo;
    Agent other(*env, 0.95, small_config(algo, 2000), 43);
    other.train();
    EXPECT_NE(a.checkpoint().parameters, other.checkpoint().parameters) << algo;
  }
}

TEST(Agent, RecordsFollowTheLogSchedule) {
  // Exercising pays immediately, so the initial rows move off zero quickly.
  auto env = env_named("put");
  Agent agent(*env, 0.99, small_config("qrsrm:cvar:0.3", 1100), 5);
  std::vector<long> streamed;
  const auto records = agent.train([&](const TrainRecord& r) { streamed.push_back(r.step); });
  ASSERT_EQ(records.size(), 5u);
  EXPECT_EQ(streamed, (std::vector<long>{250, 500, 750, 1000, 1100}));
  for (std::size_t k = 1; k < records.size(); ++k) {
    EXPECT_GE(records[k].episodes, records[k - 1].episodes);
    EXPECT_LE(records[k].epsilon, records[k - 1].epsilon);
    EXPECT_TRUE(std::isfinite(records[k].loss));
  }
  // First h update after warm-up (200) plus h_frequency (500).
  EXPECT_EQ(records[1].w1, 0.0);
  EXPECT_GT(records[2].w1, 0.0);
}

TEST(Agent, CheckpointRoundTripRestoresBehaviour) {
  auto env = env_named("meanrev");
  for (const char* algo : {"qrsrm:wscvar:0.2,1@0.5,0.5", "qrcvar:0.3"}) {
    Agent trained(*env, 0.99, small_config(algo, 1500), 9);
    trained.train();
    if (trained.algorithm().kind == AlgorithmKind::QrCvar) trained.update_b();
    const auto path = std::filesystem::temp_directory_path() / "agent_roundtrip.qrsrm";
    write_checkpoint(path.string(), trained.checkpoint());
    Agent restored(*env, 0.99, small_config(algo, 1500), 123);
    restored.load(read_checkpoint(path.string()));
    std::filesystem::remove(path);
    EXPECT_EQ(restored.h().ref_quantiles, trained.h().ref_quantiles);
    EXPECT_EQ(restored.initial_b(), trained.initial_b());
    Augmented roll(env->clone(), 0.99);
    AugmentedState st = roll.reset(77, trained.initial_b());
    for (int t = 0; t < 10; ++t) {
      EXPECT_EQ(restored.quantiles_at(st), trained.quantiles_at(st));
      const int a = trained.act(st);
      EXPECT_EQ(restored.act(st), a);
      const auto step = roll.step(a);
      if (step.done) break;
      st = step.next;
    }
  }
}

TEST(Agent, LoadRejectsMismatchedLayout) {
  auto env = env_named("cliff");
  Agent agent(*env, 0.95, small_config("qrdqn", 0), 1);
  Checkpoint ckpt = agent.checkpoint();
  ckpt.quantiles = 9;
  EXPECT_THROW(agent.load(ckpt), std::runtime_error);
  Agent srm(*env, 0.95, small_config("qrsrm:cvar:0.5", 0), 1);
  Checkpoint wrong = srm.checkpoint();
  wrong.ref_quantiles.pop_back();
  EXPECT_THROW(srm.load(wrong), std::runtime_error);
}

TEST(Agent, LearnsExample1ReturnDistribution) {
  FixtureMdp env(FixtureModel::example1(), EnvConfig{});
  TrainConfig c;
  c.algorithm = Algorithm::parse("qrsrm:wscvar:0.4,0.8@0.7,0.3");
  c.quantiles = 50;
  c.hidden = {32, 32};
  c.batch_size = 64;
  c.learning_rate = 2.5e-4;
  c.kappa = 0.01;
  c.total_timesteps = 60000;
  c.warmup = 500;
  c.h_frequency = 1000;
  c.sync_frequency = 100;
  Agent agent(env, 0.5, c, 11);
  agent.train();
  const double srm = agent.update_h();
  // Quantiles sitting right next to an atom jump get a subgradient of only
  // |F(q) - tau| and creep in slowly; that lag is bootstrapped up one level
  // and leaves the learned SRM about 0.1 high. TabularSolver checks the exact
  // fixed point.
  EXPECT_NEAR(srm, 5.5875, 0.2);
  const QuantileDistribution learned(agent.h().ref_quantiles);
  EXPECT_LT(w1_distance(learned.to_discrete(), oracle::example1_return()), 0.25);
}

}  // namespace
}  // namespace qrsrm
