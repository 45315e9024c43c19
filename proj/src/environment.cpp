#include "qrsrm/environment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

#include "qrsrm/text.hpp"

namespace qrsrm {

namespace {

double discounted_horizon(double gamma, int steps) {
  return (1.0 - std::pow(gamma, steps)) / (1.0 - gamma);
}

double check_gamma(double gamma) {
  if (!(gamma >= 0.0 && gamma < 1.0))
    throw std::invalid_argument("gamma must lie in [0, 1), got " + format_number(gamma));
  return gamma;
}

int check_steps(int steps) {
  if (steps < 1) throw std::invalid_argument("max_steps must be at least 1");
  return steps;
}

void check_action(int action, int count) {
  if (action < 0 || action >= count)
    throw std::out_of_range("action " + std::to_string(action) + " outside [0, " +
                            std::to_string(count) + ")");
}

// Min-max scaling of v from [lo, hi] onto [-1, 1].
double scale(double v, double lo, double hi) { return 2.0 * (v - lo) / (hi - lo) - 1.0; }

}  // namespace

// ---------------------------------------------------------------- cliff walk

CliffWalk::CliffWalk(const EnvConfig& config)
    : gamma_(check_gamma(config.gamma.value_or(0.95))),
      max_steps_(check_steps(config.max_steps.value_or(50))),
      wind_(config.wind_probability),
      cliff_reward_(config.cliff_reward),
      goal_reward_(config.goal_reward) {
  if (!(wind_ >= 0.0 && wind_ <= 1.0))
    throw std::invalid_argument("wind_probability must lie in [0, 1]");
}

ReturnBounds CliffWalk::return_bounds() const {
  const double h = discounted_horizon(gamma_, max_steps_);
  return {std::min(0.0, cliff_reward_) * h + std::min(0.0, goal_reward_),
          std::max(0.0, cliff_reward_) * h + std::max(0.0, goal_reward_)};
}

Observation CliffWalk::reset(std::uint64_t seed) {
  rng_.seed(seed);
  row_ = kRows - 1;
  col_ = 0;
  t_ = 0;
  done_ = false;
  return Observation{start_cell(), {}};
}

StepResult CliffWalk::step(int action) {
  check_action(action, 4);
  if (done_) throw std::out_of_range("step called on a finished episode");
  static constexpr int kDr[4] = {-1, 0, 1, 0};
  static constexpr int kDc[4] = {0, 1, 0, -1};
  auto move = [this](int dir) {
    row_ = std::clamp(row_ + kDr[dir], 0, kRows - 1);
    col_ = std::clamp(col_ + kDc[dir], 0, kCols - 1);
  };
  move(action);
  if (std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < wind_)
    move(std::uniform_int_distribution<int>(0, 3)(rng_));

  StepResult out;
  ++t_;
  if (is_cliff(row_, col_)) {
    out.reward = cliff_reward_;
    row_ = kRows - 1;
    col_ = 0;
  } else if (row_ == kRows - 1 && col_ == kCols - 1) {
    out.reward = goal_reward_;
    done_ = true;
  }
  if (t_ >= max_steps_) done_ = true;
  out.done = done_;
  out.next = Observation{cell(row_, col_), {}};
  return out;
}

void CliffWalk::encode(const Observation& obs, double* out) const {
  std::fill(out, out + kRows * kCols, 0.0);
  out[obs.index] = 1.0;
}

// -------------------------------------------------------------- american put

AmericanPut::AmericanPut(const EnvConfig& config)
    : gamma_(check_gamma(config.gamma.value_or(0.99))),
      horizon_(check_steps(config.max_steps.value_or(10))),
      drift_(config.put_drift),
      volatility_(config.put_volatility),
      initial_price_(config.put_initial_price),
      strike_(config.put_strike),
      dt_(config.put_dt) {
  if (!(initial_price_ > 0.0)) throw std::invalid_argument("put_initial_price must be positive");
  if (!(volatility_ >= 0.0)) throw std::invalid_argument("put_volatility must be non-negative");
  if (!(dt_ > 0.0)) throw std::invalid_argument("put_dt must be positive");
}

Observation AmericanPut::observe() const {
  return Observation{0, {static_cast<double>(t_) / horizon_, price_}};
}

Observation AmericanPut::reset(std::uint64_t seed) {
  rng_.seed(seed);
  normal_.reset();
  price_ = initial_price_;
  t_ = 0;
  done_ = false;
  return observe();
}

StepResult AmericanPut::step(int action) {
  check_action(action, 2);
  if (done_) throw std::out_of_range("step called on a finished episode");
  StepResult out;
  if (action == 1) {
    out.reward = std::max(0.0, strike_ - price_);
    done_ = true;
  } else {
    const double eps = normal_(rng_);
    price_ *= std::exp((drift_ - 0.5 * volatility_ * volatility_) * dt_ +
                       volatility_ * std::sqrt(dt_) * eps);
    ++t_;
    if (t_ >= horizon_) {
      out.reward = std::max(0.0, strike_ - price_);
      done_ = true;
    }
  }
  out.done = done_;
  out.next = observe();
  return out;
}

void AmericanPut::encode(const Observation& obs, double* out) const {
  out[0] = scale(obs.values[0], 0.0, 1.0);
  out[1] = scale(obs.values[1], 0.0, 2.0 * strike_);
}

// ----------------------------------------------------------- mean reversion

MeanReversion::MeanReversion(const EnvConfig& config)
    : gamma_(check_gamma(config.gamma.value_or(0.99))),
      horizon_(check_steps(config.max_steps.value_or(10))),
      mean_(config.ou_mean),
      reversion_(config.ou_reversion),
      volatility_(config.ou_volatility),
      dt_(config.ou_dt),
      initial_price_(config.ou_initial_price),
      cost_(config.transaction_cost),
      penalty_(config.terminal_penalty),
      max_inventory_(config.max_inventory),
      max_trade_(config.max_trade),
      levels_(config.trade_levels) {
  if (!(reversion_ > 0.0)) throw std::invalid_argument("ou_reversion must be positive");
  if (!(volatility_ >= 0.0)) throw std::invalid_argument("ou_volatility must be non-negative");
  if (!(dt_ > 0.0)) throw std::invalid_argument("ou_dt must be positive");
  if (levels_ < 2) throw std::invalid_argument("trade_levels must be at least 2");
  if (!(max_trade_ > 0.0) || !(max_inventory_ > 0.0))
    throw std::invalid_argument("max_trade and max_inventory must be positive");
}

double MeanReversion::trade_size(int action) const {
  return -max_trade_ + 2.0 * max_trade_ * action / (levels_ - 1);
}

double MeanReversion::next_price(double price, double noise) const {
  const double decay = std::exp(-reversion_ * dt_);
  const double sd = volatility_ * std::sqrt(-std::expm1(-2.0 * reversion_ * dt_) / (2.0 * reversion_));
  return mean_ + (price - mean_) * decay + sd * noise;
}

double MeanReversion::trade_reward(double a, double price, double next_price,
                                   double inventory_after, bool last) const {
  double r = -a * price - cost_ * a * a;
  if (last) r += inventory_after * next_price - penalty_ * inventory_after * inventory_after;
  return r;
}

ReturnBounds MeanReversion::return_bounds() const {
  // Nominal price ceiling four stationary deviations above the mean.
  const double p_hi = std::abs(mean_) + 4.0 * volatility_ / std::sqrt(2.0 * reversion_);
  const double h = discounted_horizon(gamma_, horizon_);
  const double per_step = max_trade_ * p_hi + cost_ * max_trade_ * max_trade_;
  const double liquidation = max_inventory_ * p_hi;
  return {-per_step * h - liquidation - penalty_ * max_inventory_ * max_inventory_,
          max_trade_ * p_hi * h + liquidation};
}

Observation MeanReversion::observe() const {
  return Observation{0, {static_cast<double>(t_) / horizon_, price_, inventory_}};
}

Observation MeanReversion::reset(std::uint64_t seed) {
  rng_.seed(seed);
  normal_.reset();
  price_ = initial_price_;
  inventory_ = 0.0;
  t_ = 0;
  done_ = false;
  return observe();
}

StepResult MeanReversion::step(int action) {
  check_action(action, levels_);
  if (done_) throw std::out_of_range("step called on a finished episode");
  const double target = std::clamp(inventory_ + trade_size(action), -max_inventory_, max_inventory_);
  const double a = target - inventory_;
  const double next = next_price(price_, normal_(rng_));
  ++t_;
  done_ = t_ >= horizon_;
  StepResult out;
  out.reward = trade_reward(a, price_, next, target, done_);
  inventory_ = target;
  price_ = next;
  out.done = done_;
  out.next = observe();
  return out;
}

void MeanReversion::encode(const Observation& obs, double* out) const {
  const double spread = 4.0 * volatility_ / std::sqrt(2.0 * reversion_) + 1e-12;
  out[0] = scale(obs.values[0], 0.0, 1.0);
  out[1] = scale(obs.values[1], mean_ - spread, mean_ + spread);
  out[2] = obs.values[2] / max_inventory_;
}

// ------------------------------------------------------------------ fixtures

int FixtureModel::index_of(const std::string& name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw std::invalid_argument("unknown fixture node '" + name + "'");
  return static_cast<int>(it - names.begin());
}

FixtureModel FixtureModel::parse(const std::string& text, double gamma) {
  struct RawEdge {
    std::string from, to;
    double probability;
    int action;  // -1 when unlabelled
    int line;
  };
  FixtureModel model;
  model.gamma = check_gamma(gamma);
  std::map<std::string, int> index;
  std::vector<RawEdge> edges;

  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  auto fail = [&](const std::string& what) {
    throw std::invalid_argument("fixture line " + std::to_string(line_no) + ": " + what);
  };
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    std::istringstream fields{std::string(line)};
    std::vector<std::string> tok;
    for (std::string t; fields >> t;) tok.push_back(t);
    if (tok.empty()) continue;
    try {
      if (tok.size() == 2) {
        if (index.count(tok[0])) fail("node '" + tok[0] + "' declared twice");
        index[tok[0]] = model.size();
        model.names.push_back(tok[0]);
        model.rewards.push_back(parse_number(tok[1]));
      } else if (tok.size() == 3 || tok.size() == 4) {
        const double p = parse_number(tok[2]);
        if (!(p >= 0.0 && p <= 1.0)) fail("probability " + tok[2] + " outside [0, 1]");
        int action = -1;
        if (tok.size() == 4) {
          const long long a = parse_integer(tok[3]);
          if (a < 0 || a > 1024) fail("action label out of range");
          action = static_cast<int>(a);
        }
        edges.push_back({tok[0], tok[1], p, action, line_no});
      } else {
        fail("expected 'node reward', 'from to prob' or 'from to prob action'");
      }
    } catch (const std::invalid_argument& e) {
      if (std::string(e.what()).rfind("fixture line", 0) == 0) throw;
      fail(e.what());
    }
  }
  if (model.names.empty()) throw std::invalid_argument("fixture declares no nodes");

  int actions = 1;
  for (const auto& e : edges) actions = std::max(actions, e.action + 1);
  model.actions = actions;
  const int n = model.size();
  std::vector<int> labelled(n, -1);  // -1 unknown, 0 unlabelled, 1 labelled
  std::vector<std::vector<std::vector<Edge>>> succ(n, std::vector<std::vector<Edge>>(actions));
  for (const auto& e : edges) {
    line_no = e.line;
    const auto from = index.find(e.from);
    const auto to = index.find(e.to);
    if (from == index.end()) fail("unknown node '" + e.from + "'");
    if (to == index.end()) fail("unknown node '" + e.to + "'");
    const int kind = e.action >= 0 ? 1 : 0;
    if (labelled[from->second] != -1 && labelled[from->second] != kind)
      fail("node '" + e.from + "' mixes labelled and unlabelled edges");
    labelled[from->second] = kind;
    if (kind == 0) {
      for (int a = 0; a < actions; ++a) succ[from->second][a].push_back({to->second, e.probability});
    } else {
      succ[from->second][e.action].push_back({to->second, e.probability});
    }
  }
  for (int v = 0; v < n; ++v) {
    if (labelled[v] == -1) continue;
    for (int a = 0; a < actions; ++a) {
      double total = 0.0;
      for (const auto& e : succ[v][a]) total += e.probability;
      if (std::abs(total - 1.0) > 1e-9)
        throw std::invalid_argument("fixture: probabilities out of node '" + model.names[v] +
                                    "' under action " + std::to_string(a) + " sum to " +
                                    format_number(total));
    }
  }
  model.successors = std::move(succ);
  return model;
}

FixtureModel FixtureModel::load(const std::string& path, double gamma) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open fixture file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), gamma);
}

FixtureModel FixtureModel::example1() {
  return parse(
      "x0 2\n"
      "x1_1 4\n"
      "x1_2 6\n"
      "x2_1 4\n"
      "x2_2 16\n"
      "x2_3 20\n"
      "x2_4 4\n"
      "x2_5 8\n"
      "x2_6 20\n"
      "x0 x1_1 0.6\n"
      "x0 x1_2 0.4\n"
      "x1_1 x2_1 0.5\n"
      "x1_1 x2_2 0.3\n"
      "x1_1 x2_3 0.2\n"
      "x1_2 x2_4 0.4\n"
      "x1_2 x2_5 0.3\n"
      "x1_2 x2_6 0.3\n",
      0.5);
}

int FixtureModel::depth() const {
  std::vector<int> memo(size(), -1);
  std::vector<char> on_stack(size(), 0);
  std::function<int(int)> visit = [&](int v) -> int {
    if (memo[v] >= 0) return memo[v];
    if (on_stack[v]) throw std::invalid_argument("fixture has a cycle through '" + names[v] + "'");
    on_stack[v] = 1;
    int d = 0;
    for (const auto& edges : successors[v])
      for (const auto& e : edges) d = std::max(d, 1 + visit(e.to));
    on_stack[v] = 0;
    return memo[v] = d;
  };
  int d = 0;
  for (int v = 0; v < size(); ++v) d = std::max(d, visit(v));
  return d;
}

DiscreteDistribution FixtureModel::return_distribution(int node, const std::vector<int>& policy) const {
  depth();  // rejects cycles
  std::vector<std::optional<DiscreteDistribution>> memo(size());
  std::function<const DiscreteDistribution&(int)> visit = [&](int v) -> const DiscreteDistribution& {
    if (memo[v]) return *memo[v];
    if (is_leaf(v)) {
      memo[v] = DiscreteDistribution::point(rewards[v]);
    } else {
      const int a = policy.empty() ? 0 : policy.at(v);
      std::vector<std::pair<double, DiscreteDistribution>> parts;
      for (const auto& e : successors[v][a])
        if (e.probability > 0.0) parts.emplace_back(e.probability, visit(e.to).affine(rewards[v], gamma));
      // Renormalise away rounding in the stored probabilities.
      double total = 0.0;
      for (const auto& p : parts) total += p.first;
      for (auto& p : parts) p.first /= total;
      memo[v] = mix(parts);
    }
    return *memo[v];
  };
  return visit(node);
}

DiscreteDistribution FixtureModel::return_distribution(int node) const {
  return return_distribution(node, {});
}

FixtureMdp::FixtureMdp(FixtureModel model, const EnvConfig& config) : model_(std::move(model)) {
  if (config.gamma) model_.gamma = check_gamma(*config.gamma);
  int default_steps = 100;
  try {
    default_steps = model_.depth() + 1;
  } catch (const std::invalid_argument&) {
    // cyclic: fall back to the fixed cut-off
  }
  max_steps_ = check_steps(config.max_steps.value_or(default_steps));
}

ReturnBounds FixtureMdp::return_bounds() const {
  const auto [lo, hi] = std::minmax_element(model_.rewards.begin(), model_.rewards.end());
  const double h = discounted_horizon(model_.gamma, max_steps_);
  return {std::min(0.0, *lo) * h, std::max(0.0, *hi) * h};
}

Observation FixtureMdp::reset(std::uint64_t seed) {
  rng_.seed(seed);
  node_ = 0;
  t_ = 0;
  done_ = false;
  return Observation{0, {}};
}

StepResult FixtureMdp::step(int action) {
  check_action(action, model_.actions);
  if (done_) throw std::out_of_range("step called on a finished episode");
  StepResult out;
  out.reward = model_.rewards[node_];
  ++t_;
  if (model_.is_leaf(node_)) {
    done_ = true;
  } else {
    const auto& edges = model_.successors[node_][action];
    double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng_);
    int next = edges.back().to;
    for (const auto& e : edges) {
      if (u < e.probability) {
        next = e.to;
        break;
      }
      u -= e.probability;
    }
    node_ = next;
    if (t_ >= max_steps_) done_ = true;
  }
  out.done = done_;
  out.next = Observation{node_, {}};
  return out;
}

void FixtureMdp::encode(const Observation& obs, double* out) const {
  std::fill(out, out + model_.size(), 0.0);
  out[obs.index] = 1.0;
}

std::unique_ptr<Environment> make_environment(const EnvConfig& config) {
  const std::string& name = config.name;
  if (name == "cliff") return std::make_unique<CliffWalk>(config);
  if (name == "put") return std::make_unique<AmericanPut>(config);
  if (name == "meanrev") return std::make_unique<MeanReversion>(config);
  if (name.rfind("fixture:", 0) == 0) {
    const std::string path = name.substr(8);
    FixtureModel model = path == "example1" ? FixtureModel::example1()
                                            : FixtureModel::load(path, config.gamma.value_or(0.5));
    if (config.gamma) model.gamma = *config.gamma;
    return std::make_unique<FixtureMdp>(std::move(model), config);
  }
  throw std::invalid_argument("unknown environment '" + name + "'");
}

// ------------------------------------------------------------------ wrapper

Augmented::Augmented(std::unique_ptr<Environment> env, double gamma)
    : env_(std::move(env)), gamma_(gamma) {
  if (!(gamma > 0.0 && gamma < 1.0))
    throw std::invalid_argument("augmentation needs 0 < gamma < 1, got " + format_number(gamma));
}

Augmented::Augmented(std::unique_ptr<Environment> env) : Augmented(nullptr, 0.5) {
  gamma_ = env->gamma();
  if (!(gamma_ > 0.0 && gamma_ < 1.0))
    throw std::invalid_argument("augmentation needs 0 < gamma < 1, got " + format_number(gamma_));
  env_ = std::move(env);
}

AugmentedState Augmented::reset(std::uint64_t seed, double b0) {
  state_ = AugmentedState{env_->reset(seed), 0.0, 1.0, b0, 0};
  return state_;
}

AugmentedStep Augmented::step(int action) {
  const StepResult r = env_->step(action);
  AugmentedStep out;
  out.reward = r.reward;
  out.done = r.done;
  out.next.x = r.next;
  out.next.s = state_.s + state_.c * r.reward;
  out.next.c = state_.c * gamma_;
  out.next.b = (state_.b - r.reward) / gamma_;
  out.next.t = state_.t + 1;
  state_ = out.next;
  return out;
}

}  // namespace qrsrm
