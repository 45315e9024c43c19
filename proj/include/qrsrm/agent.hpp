#pragma once

// Neural agents: QR-SRM and the QR-DQN / QR-CVaR / QR-iCVaR baselines share
// the replay buffer, target network and training loop; they differ in the
// network inputs and in the action rule.

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <vector>

#include "qrsrm/approximator.hpp"
#include "qrsrm/environment.hpp"
#include "qrsrm/policy.hpp"
#include "qrsrm/risk_spectrum.hpp"

namespace qrsrm {

struct TrainConfig {
  Algorithm algorithm;
  int quantiles = 50;
  std::vector<int> hidden{128, 128, 128};
  double learning_rate = 2.5e-4;
  double kappa = 1.0;
  int batch_size = 256;
  long total_timesteps = 100000;
  long replay_capacity = 100000;
  long warmup = 1000;
  int train_frequency = 4;
  /// In gradient steps.
  long sync_frequency = 500;
  long h_frequency = 2000;
  /// 0 means the same as h_frequency.
  long b_frequency = 0;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  double exploration_fraction = 0.5;
  long log_frequency = 1000;
  int return_window = 100;
};

/// Throws std::invalid_argument naming the offending field.
void validate(const TrainConfig& config);

/// Linear decay to epsilon_end over exploration_fraction of the run.
double exploration_rate(const TrainConfig& config, long step);

struct TrainRecord {
  long step = 0;
  long episodes = 0;
  /// Mean loss over the gradient steps since the previous record.
  double loss = 0.0;
  /// w1 between the last two reference quantile vectors.
  double w1 = 0.0;
  /// SRM of the initial-state row chosen at the last h update.
  double objective = 0.0;
  double mean_return = 0.0;
  double epsilon = 0.0;
};

/// Uniform experience replay over a ring buffer; features stored as float.
class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, std::size_t feature_dim);

  void add(const double* features, int action, double reward, const double* next_features, bool done,
           double next_s, double next_c, double next_b);

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  std::size_t feature_dim() const { return dim_; }

  /// Indices drawn uniformly from the stored transitions; throws
  /// std::logic_error when empty.
  std::vector<std::size_t> sample(std::size_t batch, std::mt19937_64& rng) const;

  const float* features(std::size_t i) const { return features_.data() + i * dim_; }
  const float* next_features(std::size_t i) const { return next_features_.data() + i * dim_; }
  int action(std::size_t i) const { return actions_[i]; }
  double reward(std::size_t i) const { return rewards_[i]; }
  bool done(std::size_t i) const { return done_[i] != 0; }
  double next_s(std::size_t i) const { return next_s_[i]; }
  double next_c(std::size_t i) const { return next_c_[i]; }
  double next_b(std::size_t i) const { return next_b_[i]; }

 private:
  std::size_t capacity_;
  std::size_t dim_;
  std::size_t size_ = 0;
  std::size_t head_ = 0;
  std::vector<float> features_;
  std::vector<float> next_features_;
  std::vector<int> actions_;
  std::vector<double> rewards_;
  std::vector<unsigned char> done_;
  std::vector<double> next_s_;
  std::vector<double> next_c_;
  std::vector<double> next_b_;
};

class Agent {
 public:
  /// `env` is copied; `gamma` drives both the TD targets and the (s, c, b)
  /// bookkeeping.
  Agent(const Environment& env, double gamma, TrainConfig config, std::uint64_t seed);

  const TrainConfig& config() const { return config_; }
  const Algorithm& algorithm() const { return config_.algorithm; }
  double gamma() const { return gamma_; }
  int action_count() const { return actions_; }
  int quantiles() const { return config_.quantiles; }
  const Environment& environment() const { return *env_; }

  std::size_t feature_dim() const { return feature_dim_; }
  void encode(const AugmentedState& state, double* out) const;

  /// Online network quantiles at `state`, row-major A x N.
  std::vector<double> quantiles_at(const AugmentedState& state) const;
  /// Greedy action of the configured rule at `state`.
  int act(const AugmentedState& state) const;

  const HFunction& h() const { return h_; }
  void set_h(HFunction h);
  /// QR-CVaR threshold used at reset.
  double initial_b() const { return b0_; }

  /// Re-reads the initial-state rows and rebuilds h from the row with the
  /// highest SRM. Returns the SRM of that row.
  double update_h();
  /// QR-CVaR: b0 becomes the alpha-quantile of the greedy initial row.
  double update_b();

  /// Runs the full loop; `on_record` sees every record as it is produced.
  std::vector<TrainRecord> train(const std::function<void(const TrainRecord&)>& on_record = {});

  Checkpoint checkpoint() const;
  /// Throws std::runtime_error if the layout does not match this agent.
  void load(const Checkpoint& ckpt);

  /// The initial augmented state (deterministic for every environment here).
  AugmentedState initial_state() const;

 private:
  void train_batch(std::mt19937_64& rng, double& loss_sum, long& loss_count);

  TrainConfig config_;
  std::unique_ptr<Environment> env_;
  double gamma_;
  std::uint64_t seed_;
  int actions_;
  std::size_t base_dim_;
  std::size_t feature_dim_;
  double s_scale_;
  QuantileNetwork<float> online_;
  QuantileNetwork<float> target_;
  HFunction h_;
  std::unique_ptr<HingeSum> hinge_;
  double b0_ = 0.0;
  double last_w1_ = 0.0;
  double last_objective_ = 0.0;
  std::vector<double> previous_ref_;
  ReplayBuffer replay_;
  long gradient_steps_ = 0;
};

/// Zero reference quantiles with the spectrum's N-grid weights: the
/// untrained h.
HFunction initial_h(const RiskSpectrum& spectrum, int quantiles);

}  // namespace qrsrm
