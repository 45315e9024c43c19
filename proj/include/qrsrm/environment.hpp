#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "qrsrm/distribution.hpp"

namespace qrsrm {

/// What an environment shows the agent. Grid worlds and fixtures use `index`
/// (a cell or node id); the trading tasks use `values`.
struct Observation {
  int index = 0;
  std::vector<double> values;
};

struct StepResult {
  Observation next;
  double reward = 0.0;
  bool done = false;
};

struct ReturnBounds {
  double min;
  double max;
};

/// Per-environment parameters. Unset optionals take the environment's default.
struct EnvConfig {
  std::string name = "cliff";
  std::optional<double> gamma;
  std::optional<int> max_steps;

  double wind_probability = 0.5;
  double cliff_reward = -1.0;
  double goal_reward = 10.0;

  double put_drift = 1.0;
  double put_volatility = 1.0;
  double put_initial_price = 1.0;
  double put_strike = 1.0;
  double put_dt = 0.1;

  double ou_mean = 1.0;
  double ou_reversion = 2.0;
  double ou_volatility = 0.5;
  double ou_dt = 0.1;
  double ou_initial_price = 1.0;
  double transaction_cost = 0.005;
  double terminal_penalty = 0.5;
  double max_inventory = 5.0;
  double max_trade = 2.0;
  int trade_levels = 21;
};

class Environment {
 public:
  virtual ~Environment() = default;

  virtual std::string name() const = 0;
  virtual int action_count() const = 0;
  virtual double gamma() const = 0;
  /// Episodes are cut off after this many steps.
  virtual int max_steps() const = 0;
  /// Loose bounds on the discounted return, used to scale s and to bin it.
  virtual ReturnBounds return_bounds() const = 0;

  /// Starts a new episode with its own noise stream.
  virtual Observation reset(std::uint64_t seed) = 0;
  /// Throws std::out_of_range for an invalid action or a finished episode.
  virtual StepResult step(int action) = 0;

  /// Number of network input features for an observation.
  virtual std::size_t feature_dim() const = 0;
  virtual void encode(const Observation& obs, double* out) const = 0;

  virtual std::unique_ptr<Environment> clone() const = 0;
};

/// 4x8 grid, start bottom-left, goal bottom-right, cliff between them.
/// Actions: 0 up, 1 right, 2 down, 3 left. After the move a wind blows the
/// agent to a uniformly chosen neighbour with probability `wind_probability`.
/// Falling into the cliff pays `cliff_reward` and sends the agent back to the
/// start; the goal pays `goal_reward` and ends the episode.
class CliffWalk final : public Environment {
 public:
  static constexpr int kRows = 4;
  static constexpr int kCols = 8;

  explicit CliffWalk(const EnvConfig& config);

  std::string name() const override { return "cliff"; }
  int action_count() const override { return 4; }
  double gamma() const override { return gamma_; }
  int max_steps() const override { return max_steps_; }
  ReturnBounds return_bounds() const override;
  Observation reset(std::uint64_t seed) override;
  StepResult step(int action) override;
  std::size_t feature_dim() const override { return kRows * kCols; }
  void encode(const Observation& obs, double* out) const override;
  std::unique_ptr<Environment> clone() const override { return std::make_unique<CliffWalk>(*this); }

  static int cell(int row, int col) { return row * kCols + col; }
  static bool is_cliff(int row, int col) { return row == kRows - 1 && col > 0 && col < kCols - 1; }
  static int start_cell() { return cell(kRows - 1, 0); }
  static int goal_cell() { return cell(kRows - 1, kCols - 1); }

 private:
  double gamma_;
  int max_steps_;
  double wind_;
  double cliff_reward_;
  double goal_reward_;
  std::mt19937_64 rng_;
  int row_ = kRows - 1;
  int col_ = 0;
  int t_ = 0;
  bool done_ = true;
};

/// Early exercise of a put on a geometric Brownian motion price, sampled
/// with the exact log-normal step. Actions: 0 hold, 1 exercise. Holding
/// through the last step exercises automatically at the final price.
/// Observation values: (t / T, P).
class AmericanPut final : public Environment {
 public:
  explicit AmericanPut(const EnvConfig& config);

  std::string name() const override { return "put"; }
  int action_count() const override { return 2; }
  double gamma() const override { return gamma_; }
  int max_steps() const override { return horizon_; }
  ReturnBounds return_bounds() const override { return {0.0, strike_}; }
  Observation reset(std::uint64_t seed) override;
  StepResult step(int action) override;
  std::size_t feature_dim() const override { return 2; }
  void encode(const Observation& obs, double* out) const override;
  std::unique_ptr<Environment> clone() const override { return std::make_unique<AmericanPut>(*this); }

 private:
  Observation observe() const;

  double gamma_;
  int horizon_;
  double drift_;
  double volatility_;
  double initial_price_;
  double strike_;
  double dt_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_;
  double price_ = 1.0;
  int t_ = 0;
  bool done_ = true;
};

/// Trading an Ornstein-Uhlenbeck price with an inventory limit. Action k
/// buys -max_trade + k * 2 max_trade / (levels - 1), clipped so the inventory
/// stays within +-max_inventory. Each trade costs a * P + cost * a^2; on the
/// last step the inventory is liquidated at the next price with a quadratic
/// penalty. Observation values: (t / T, P, q).
class MeanReversion final : public Environment {
 public:
  explicit MeanReversion(const EnvConfig& config);

  std::string name() const override { return "meanrev"; }
  int action_count() const override { return levels_; }
  double gamma() const override { return gamma_; }
  int max_steps() const override { return horizon_; }
  ReturnBounds return_bounds() const override;
  Observation reset(std::uint64_t seed) override;
  StepResult step(int action) override;
  std::size_t feature_dim() const override { return 3; }
  void encode(const Observation& obs, double* out) const override;
  std::unique_ptr<Environment> clone() const override { return std::make_unique<MeanReversion>(*this); }

  double trade_size(int action) const;
  /// Exact one-step OU transition from `price` driven by the normal draw `noise`.
  double next_price(double price, double noise) const;
  /// Reward for executing trade `a` at `price`; on the last step the
  /// resulting inventory is also liquidated at `next_price`.
  double trade_reward(double a, double price, double next_price, double inventory_after,
                      bool last) const;

 private:
  Observation observe() const;

  double gamma_;
  int horizon_;
  double mean_;
  double reversion_;
  double volatility_;
  double dt_;
  double initial_price_;
  double cost_;
  double penalty_;
  double max_inventory_;
  double max_trade_;
  int levels_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_;
  double price_ = 1.0;
  double inventory_ = 0.0;
  int t_ = 0;
  bool done_ = true;
};

/// A finite Markov process given as a table of nodes and edges, with exact
/// access to its transition model for oracle computations.
///
/// Visiting a node pays its reward; a node without outgoing edges ends the
/// episode once its reward is collected. Edges may carry an action label;
/// unlabelled edges apply to every action.
struct FixtureModel {
  struct Edge {
    int to;
    double probability;
  };
  std::vector<std::string> names;
  std::vector<double> rewards;
  /// successors[node][action]
  std::vector<std::vector<std::vector<Edge>>> successors;
  int actions = 1;
  double gamma = 0.5;

  int size() const { return static_cast<int>(names.size()); }
  bool is_leaf(int node) const { return successors[node][0].empty(); }
  int index_of(const std::string& name) const;

  /// Parses "node reward" lines, "from to prob" and "from to prob action"
  /// edges; '#' starts a comment. The first node listed is the initial node.
  /// Throws std::invalid_argument with a line number on malformed input.
  static FixtureModel parse(const std::string& text, double gamma);
  static FixtureModel load(const std::string& path, double gamma);
  /// The worked three-level example with gamma 0.5.
  static FixtureModel example1();

  /// Longest path in steps; throws std::invalid_argument on a cycle.
  int depth() const;
  /// Exact distribution of the discounted return from `node` when every
  /// node takes `action_of(node)`; acyclic models only.
  DiscreteDistribution return_distribution(int node, const std::vector<int>& policy) const;
  DiscreteDistribution return_distribution(int node) const;
};

class FixtureMdp final : public Environment {
 public:
  FixtureMdp(FixtureModel model, const EnvConfig& config);

  std::string name() const override { return "fixture"; }
  int action_count() const override { return model_.actions; }
  double gamma() const override { return model_.gamma; }
  int max_steps() const override { return max_steps_; }
  ReturnBounds return_bounds() const override;
  Observation reset(std::uint64_t seed) override;
  StepResult step(int action) override;
  std::size_t feature_dim() const override { return static_cast<std::size_t>(model_.size()); }
  void encode(const Observation& obs, double* out) const override;
  std::unique_ptr<Environment> clone() const override { return std::make_unique<FixtureMdp>(*this); }

  const FixtureModel& model() const { return model_; }

 private:
  FixtureModel model_;
  int max_steps_;
  std::mt19937_64 rng_;
  int node_ = 0;
  int t_ = 0;
  bool done_ = true;
};

/// Builds "cliff", "put", "meanrev", "fixture:<path>" or "fixture:example1".
/// Throws std::invalid_argument on an unknown name or bad parameters.
std::unique_ptr<Environment> make_environment(const EnvConfig& config);

/// Augmented state: the observation plus the discounted reward so far s,
/// the accumulated discount c and the step index t. `b` is the QR-CVaR
/// threshold carried along as b' = (b - r) / gamma.
struct AugmentedState {
  Observation x;
  double s = 0.0;
  double c = 1.0;
  double b = 0.0;
  int t = 0;
};

struct AugmentedStep {
  AugmentedState next;
  double reward = 0.0;
  bool done = false;
};

/// Wraps an environment and maintains (s, c, b) on every step.
class Augmented {
 public:
  /// Throws std::invalid_argument unless 0 < gamma < 1.
  Augmented(std::unique_ptr<Environment> env, double gamma);
  explicit Augmented(std::unique_ptr<Environment> env);

  AugmentedState reset(std::uint64_t seed, double b0 = 0.0);
  AugmentedStep step(int action);

  const AugmentedState& state() const { return state_; }
  Environment& env() { return *env_; }
  const Environment& env() const { return *env_; }
  double gamma() const { return gamma_; }

 private:
  std::unique_ptr<Environment> env_;
  double gamma_;
  AugmentedState state_;
};

}  // namespace qrsrm
