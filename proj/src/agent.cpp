#include "qrsrm/agent.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <stdexcept>
#include <string>

#include "qrsrm/rng.hpp"

namespace qrsrm {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument("invalid training config: " + what);
}

QuantileNetwork<float>::Options network_options(const TrainConfig& config) {
  QuantileNetwork<float>::Options o;
  o.hidden = config.hidden;
  o.learning_rate = config.learning_rate;
  o.kappa = config.kappa;
  return o;
}

std::size_t extra_features(const Algorithm& algorithm) {
  switch (algorithm.kind) {
    case AlgorithmKind::QrSrm:
      return 2;  // s, c
    case AlgorithmKind::QrCvar:
      return 1;  // b
    default:
      return 0;
  }
}

}  // namespace

void validate(const TrainConfig& c) {
  require(c.quantiles >= 1, "quantiles must be positive");
  require(!c.hidden.empty() && std::all_of(c.hidden.begin(), c.hidden.end(), [](int h) { return h >= 1; }),
          "hidden layer sizes must be positive");
  require(c.learning_rate > 0.0 && std::isfinite(c.learning_rate), "learning_rate must be positive");
  require(c.kappa > 0.0, "kappa must be positive");
  require(c.batch_size >= 1, "batch_size must be positive");
  require(c.total_timesteps >= 0, "total_timesteps must be non-negative");
  require(c.replay_capacity >= 1, "replay_capacity must be positive");
  require(c.warmup >= 0, "warmup must be non-negative");
  require(c.train_frequency >= 1, "train_frequency must be positive");
  require(c.sync_frequency >= 1, "sync_frequency must be positive");
  require(c.h_frequency >= 1, "h_frequency must be positive");
  require(c.b_frequency >= 0, "b_frequency must be non-negative");
  require(c.epsilon_start >= 0.0 && c.epsilon_start <= 1.0, "epsilon_start must lie in [0, 1]");
  require(c.epsilon_end >= 0.0 && c.epsilon_end <= 1.0, "epsilon_end must lie in [0, 1]");
  require(c.exploration_fraction >= 0.0 && c.exploration_fraction <= 1.0,
          "exploration_fraction must lie in [0, 1]");
  require(c.log_frequency >= 1, "log_frequency must be positive");
  require(c.return_window >= 1, "return_window must be positive");
}

double exploration_rate(const TrainConfig& config, long step) {
  const double horizon = config.exploration_fraction * static_cast<double>(config.total_timesteps);
  if (horizon <= 0.0) return config.epsilon_end;
  const double u = static_cast<double>(step) / horizon;
  if (u >= 1.0) return config.epsilon_end;
  return config.epsilon_start + (config.epsilon_end - config.epsilon_start) * u;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity, std::size_t feature_dim)
    : capacity_(capacity),
      dim_(feature_dim),
      features_(capacity * feature_dim),
      next_features_(capacity * feature_dim),
      actions_(capacity),
      rewards_(capacity),
      done_(capacity),
      next_s_(capacity),
      next_c_(capacity),
      next_b_(capacity) {
  if (capacity == 0) throw std::invalid_argument("replay capacity must be positive");
}

void ReplayBuffer::add(const double* features, int action, double reward, const double* next_features, bool done,
                       double next_s, double next_c, double next_b) {
  const std::size_t i = head_;
  std::transform(features, features + dim_, features_.begin() + static_cast<std::ptrdiff_t>(i * dim_),
                 [](double v) { return static_cast<float>(v); });
  std::transform(next_features, next_features + dim_, next_features_.begin() + static_cast<std::ptrdiff_t>(i * dim_),
                 [](double v) { return static_cast<float>(v); });
  actions_[i] = action;
  rewards_[i] = reward;
  done_[i] = done ? 1 : 0;
  next_s_[i] = next_s;
  next_c_[i] = next_c;
  next_b_[i] = next_b;
  head_ = (head_ + 1) % capacity_;
  size_ = std::min(size_ + 1, capacity_);
}

std::vector<std::size_t> ReplayBuffer::sample(std::size_t batch, std::mt19937_64& rng) const {
  if (size_ == 0) throw std::logic_error("sampling from an empty replay buffer");
  std::uniform_int_distribution<std::size_t> pick(0, size_ - 1);
  std::vector<std::size_t> out(batch);
  for (auto& i : out) i = pick(rng);
  return out;
}

HFunction initial_h(const RiskSpectrum& spectrum, int quantiles) {
  return build_h(spectrum, QuantileDistribution::zeros(static_cast<std::size_t>(quantiles)));
}

Agent::Agent(const Environment& env, double gamma, TrainConfig config, std::uint64_t seed)
    : config_(std::move(config)),
      env_(env.clone()),
      gamma_(gamma),
      seed_(seed),
      actions_(env.action_count()),
      base_dim_(env.feature_dim()),
      feature_dim_(env.feature_dim() + extra_features(config_.algorithm)),
      s_scale_(1.0),
      replay_(static_cast<std::size_t>(std::max<long>(config_.replay_capacity, 1)),
              env.feature_dim() + extra_features(config_.algorithm)) {
  validate(config_);
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in (0, 1)");
  const ReturnBounds bounds = env.return_bounds();
  const double span = std::max({std::abs(bounds.min), std::abs(bounds.max), 1e-12});
  s_scale_ = 1.0 / span;
  online_ = QuantileNetwork<float>(static_cast<int>(feature_dim_), actions_, config_.quantiles,
                                   network_options(config_), derive_seed(seed, stream::kInit, 0));
  target_ = online_;
  set_h(initial_h(config_.algorithm.spectrum, config_.quantiles));
}

void Agent::encode(const AugmentedState& state, double* out) const {
  env_->encode(state.x, out);
  switch (config_.algorithm.kind) {
    case AlgorithmKind::QrSrm:
      out[base_dim_] = state.s * s_scale_;
      out[base_dim_ + 1] = state.c;
      break;
    case AlgorithmKind::QrCvar:
      out[base_dim_] = state.b * s_scale_;
      break;
    default:
      break;
  }
}

std::vector<double> Agent::quantiles_at(const AugmentedState& state) const {
  std::vector<double> features(feature_dim_);
  encode(state, features.data());
  return online_.forward(features);
}

int Agent::act(const AugmentedState& state) const {
  const auto rows = quantiles_at(state);
  return select_action(config_.algorithm, hinge_.get(), rows, actions_, state.s, state.c, state.b);
}

void Agent::set_h(HFunction h) {
  if (h.size() != static_cast<std::size_t>(config_.quantiles))
    throw std::invalid_argument("h dimension must equal the number of quantiles");
  h_ = std::move(h);
  hinge_ = std::make_unique<HingeSum>(h_);
}

AugmentedState Agent::initial_state() const {
  auto env = env_->clone();
  AugmentedState state;
  state.x = env->reset(derive_seed(seed_, stream::kTrainEnv, 0));
  state.b = b0_;
  return state;
}

double Agent::update_h() {
  const auto rows = quantiles_at(initial_state());
  const int a = best_srm_row(config_.algorithm.spectrum, rows, actions_);
  const std::size_t n = static_cast<std::size_t>(config_.quantiles);
  auto next = QuantileDistribution::from_unsorted(
      std::vector<double>(rows.begin() + static_cast<std::ptrdiff_t>(a * n),
                          rows.begin() + static_cast<std::ptrdiff_t>((a + 1) * n)));
  last_w1_ = w1_distance(QuantileDistribution(h_.ref_quantiles), next);
  last_objective_ = srm_value(config_.algorithm.spectrum, next);
  set_h(HFunction{next.theta(), h_.quantile_weights, h_.level_masses});
  return last_objective_;
}

double Agent::update_b() {
  const AugmentedState start = initial_state();
  const auto rows = quantiles_at(start);
  const int a = qr_cvar_action(rows, actions_, start.b);
  const std::size_t n = static_cast<std::size_t>(config_.quantiles);
  std::vector<double> row(rows.begin() + static_cast<std::ptrdiff_t>(a * n),
                          rows.begin() + static_cast<std::ptrdiff_t>((a + 1) * n));
  std::sort(row.begin(), row.end());
  // Left-continuous inverse of the N-atom distribution at alpha.
  const double k = std::ceil(config_.algorithm.alpha * static_cast<double>(n) - 1e-9);
  const std::size_t idx = static_cast<std::size_t>(std::clamp(k, 1.0, static_cast<double>(n))) - 1;
  last_w1_ = std::abs(row[idx] - b0_);
  b0_ = row[idx];
  last_objective_ = empirical_cvar(row, config_.algorithm.alpha);
  return b0_;
}

void Agent::train_batch(std::mt19937_64& rng, double& loss_sum, long& loss_count) {
  using Matrix = QuantileNetwork<float>::Matrix;
  const std::size_t batch = static_cast<std::size_t>(config_.batch_size);
  const auto idx = replay_.sample(batch, rng);
  const auto dim = static_cast<Eigen::Index>(feature_dim_);
  Matrix x(dim, static_cast<Eigen::Index>(batch));
  Matrix xn(dim, static_cast<Eigen::Index>(batch));
  for (std::size_t k = 0; k < batch; ++k) {
    std::copy_n(replay_.features(idx[k]), feature_dim_, x.col(static_cast<Eigen::Index>(k)).data());
    std::copy_n(replay_.next_features(idx[k]), feature_dim_, xn.col(static_cast<Eigen::Index>(k)).data());
  }
  const Matrix next_q = target_.forward(xn);
  const int n = config_.quantiles;
  Matrix targets(n, static_cast<Eigen::Index>(batch));
  std::vector<int> actions(batch);
  std::vector<double> rows(static_cast<std::size_t>(actions_ * n));
  for (std::size_t k = 0; k < batch; ++k) {
    const std::size_t i = idx[k];
    actions[k] = replay_.action(i);
    const double r = replay_.reward(i);
    if (replay_.done(i)) {
      targets.col(static_cast<Eigen::Index>(k)).setConstant(static_cast<float>(r));
      continue;
    }
    const auto col = next_q.col(static_cast<Eigen::Index>(k));
    for (std::size_t j = 0; j < rows.size(); ++j) rows[j] = col(static_cast<Eigen::Index>(j));
    const int a_star = select_action(config_.algorithm, hinge_.get(), rows, actions_, replay_.next_s(i),
                                     replay_.next_c(i), replay_.next_b(i));
    const auto target = td_targets(std::span<const double>(rows).subspan(static_cast<std::size_t>(a_star * n),
                                                                         static_cast<std::size_t>(n)),
                                   r, gamma_, false);
    for (int j = 0; j < n; ++j) targets(j, static_cast<Eigen::Index>(k)) = static_cast<float>(target[j]);
  }
  loss_sum += online_.train_step(x, actions, targets);
  ++loss_count;
  if (++gradient_steps_ % config_.sync_frequency == 0) target_.copy_parameters_from(online_);
}

std::vector<TrainRecord> Agent::train(const std::function<void(const TrainRecord&)>& on_record) {
  validate(config_);
  std::vector<TrainRecord> records;
  if (config_.total_timesteps == 0) return records;

  Augmented env(env_->clone(), gamma_);
  std::mt19937_64 explore(derive_seed(seed_, stream::kExplore, 0));
  std::mt19937_64 replay_rng(derive_seed(seed_, stream::kReplay, 0));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> random_action(0, actions_ - 1);
  const long b_frequency = config_.b_frequency > 0 ? config_.b_frequency : config_.h_frequency;

  long episode = 0;
  AugmentedState state = env.reset(derive_seed(seed_, stream::kTrainEnv, episode), b0_);
  std::vector<double> features(feature_dim_);
  std::vector<double> next_features(feature_dim_);
  encode(state, features.data());
  std::deque<double> recent;
  double loss_sum = 0.0;
  long loss_count = 0;

  for (long step = 0; step < config_.total_timesteps; ++step) {
    const double epsilon = exploration_rate(config_, step);
    int action;
    if (unit(explore) < epsilon) {
      action = random_action(explore);
    } else {
      const auto rows = online_.forward(features);
      action = select_action(config_.algorithm, hinge_.get(), rows, actions_, state.s, state.c, state.b);
    }
    const AugmentedStep result = env.step(action);
    encode(result.next, next_features.data());
    replay_.add(features.data(), action, result.reward, next_features.data(), result.done, result.next.s,
                result.next.c, result.next.b);
    if (result.done) {
      recent.push_back(result.next.s);
      if (recent.size() > static_cast<std::size_t>(config_.return_window)) recent.pop_front();
      ++episode;
      state = env.reset(derive_seed(seed_, stream::kTrainEnv, episode), b0_);
      encode(state, features.data());
    } else {
      state = result.next;
      features.swap(next_features);
    }

    const long done_steps = step + 1;
    if (done_steps > config_.warmup) {
      if (done_steps % config_.train_frequency == 0) train_batch(replay_rng, loss_sum, loss_count);
      const long since = done_steps - config_.warmup;
      if (config_.algorithm.kind == AlgorithmKind::QrSrm && since % config_.h_frequency == 0) update_h();
      if (config_.algorithm.kind == AlgorithmKind::QrCvar && since % b_frequency == 0) update_b();
    }

    if (done_steps % config_.log_frequency == 0 || done_steps == config_.total_timesteps) {
      TrainRecord rec;
      rec.step = done_steps;
      rec.episodes = episode;
      rec.loss = loss_count > 0 ? loss_sum / static_cast<double>(loss_count) : 0.0;
      rec.w1 = last_w1_;
      rec.objective = last_objective_;
      rec.mean_return =
          recent.empty() ? 0.0 : std::accumulate(recent.begin(), recent.end(), 0.0) / static_cast<double>(recent.size());
      rec.epsilon = epsilon;
      records.push_back(rec);
      if (on_record) on_record(rec);
      loss_sum = 0.0;
      loss_count = 0;
    }
  }
  return records;
}

Checkpoint Agent::checkpoint() const {
  Checkpoint ckpt;
  ckpt.layers = online_.layer_dims();
  ckpt.quantiles = config_.quantiles;
  ckpt.actions = actions_;
  ckpt.parameters = online_.parameters();
  switch (config_.algorithm.kind) {
    case AlgorithmKind::QrSrm:
      ckpt.ref_quantiles = h_.ref_quantiles;
      ckpt.quantile_weights = h_.quantile_weights;
      break;
    case AlgorithmKind::QrCvar:
      ckpt.ref_quantiles = {b0_};
      ckpt.quantile_weights = {config_.algorithm.alpha};
      break;
    default:
      break;
  }
  return ckpt;
}

void Agent::load(const Checkpoint& ckpt) {
  if (ckpt.layers != online_.layer_dims() || ckpt.quantiles != config_.quantiles || ckpt.actions != actions_)
    throw std::runtime_error("checkpoint layout does not match the configured agent");
  online_.set_parameters(ckpt.parameters);
  target_.set_parameters(ckpt.parameters);
  switch (config_.algorithm.kind) {
    case AlgorithmKind::QrSrm: {
      if (ckpt.ref_quantiles.size() != static_cast<std::size_t>(config_.quantiles) ||
          ckpt.quantile_weights.size() != ckpt.ref_quantiles.size())
        throw std::runtime_error("checkpoint h has the wrong dimension");
      if (!std::is_sorted(ckpt.ref_quantiles.begin(), ckpt.ref_quantiles.end()))
        throw std::runtime_error("checkpoint reference quantiles are not sorted");
      HFunction h = initial_h(config_.algorithm.spectrum, config_.quantiles);
      h.ref_quantiles = ckpt.ref_quantiles;
      h.quantile_weights = ckpt.quantile_weights;
      set_h(std::move(h));
      break;
    }
    case AlgorithmKind::QrCvar:
      if (ckpt.ref_quantiles.size() != 1) throw std::runtime_error("checkpoint is missing the CVaR threshold");
      b0_ = ckpt.ref_quantiles[0];
      break;
    default:
      break;
  }
}

}  // namespace qrsrm
