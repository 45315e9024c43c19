#include "qrsrm/tabular.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <stdexcept>
#include <tuple>

namespace qrsrm {

namespace {

constexpr int kBins = 1 << 24;

}  // namespace

TabularSolver::TabularSolver(FixtureModel model, Algorithm algorithm, int quantiles, double b0)
    : model_(std::move(model)), algorithm_(std::move(algorithm)), quantiles_(quantiles), b0_(b0) {
  if (quantiles < 1) throw std::invalid_argument("quantiles must be positive");
  if (!(model_.gamma > 0.0 && model_.gamma < 1.0)) throw std::invalid_argument("fixture gamma must lie in (0, 1)");
  model_.depth();  // rejects cycles
  set_h(build_h(algorithm_.spectrum, QuantileDistribution::zeros(static_cast<std::size_t>(quantiles))));
  enumerate();
}

double TabularSolver::key_value(const State& st) const {
  switch (algorithm_.kind) {
    case AlgorithmKind::QrSrm:
      return st.s;
    case AlgorithmKind::QrCvar:
      return st.b;
    default:
      return 0.0;
  }
}

void TabularSolver::enumerate() {
  states_.clear();
  successors_.clear();
  const bool timed = algorithm_.augmented();
  std::map<std::tuple<int, int, double>, std::size_t> index;
  auto intern = [&](const State& st) {
    const auto key = std::make_tuple(st.node, timed ? st.t : 0, key_value(st));
    const auto [it, inserted] = index.emplace(key, states_.size());
    if (inserted) states_.push_back(st);
    return it->second;
  };
  intern(State{0, 0, 0.0, 1.0, b0_});
  const double gamma = model_.gamma;
  for (std::size_t i = 0; i < states_.size(); ++i) {
    const State st = states_[i];
    std::vector<Successors> per_action(static_cast<std::size_t>(model_.actions));
    if (!model_.is_leaf(st.node)) {
      const double r = model_.rewards[static_cast<std::size_t>(st.node)];
      for (int a = 0; a < model_.actions; ++a) {
        for (const auto& e : model_.successors[static_cast<std::size_t>(st.node)][static_cast<std::size_t>(a)]) {
          const State next{e.to, st.t + 1, st.s + st.c * r, st.c * gamma, (st.b - r) / gamma};
          per_action[static_cast<std::size_t>(a)].emplace_back(intern(next), e.probability);
        }
      }
    }
    successors_.push_back(std::move(per_action));
  }

  double lo = 0.0;
  double hi = 0.0;
  for (const auto& st : states_) {
    lo = std::min(lo, key_value(st));
    hi = std::max(hi, key_value(st));
  }
  table_ = std::make_unique<TabularQuantiles>(model_.actions, quantiles_, lo - 1.0, hi + 1.0, kBins);
  std::map<std::tuple<int, int, int>, double> bins;
  for (const auto& st : states_) {
    const double v = key_value(st);
    const auto [it, inserted] = bins.emplace(std::make_tuple(st.node, timed ? st.t : 0, table_->s_bin(v)), v);
    if (!inserted && it->second != v)
      throw std::runtime_error("two reachable states share a table bin at node '" +
                               model_.names[static_cast<std::size_t>(st.node)] + "'");
  }
  sweeps_ = 0;
}

const TabularSolver::Successors& TabularSolver::successors(std::size_t state, int action) const {
  return successors_.at(state).at(static_cast<std::size_t>(action));
}

std::vector<double> TabularSolver::rows(std::size_t state) const {
  const State& st = states_.at(state);
  return table_->state_rows(st.node, algorithm_.augmented() ? st.t : 0, key_value(st));
}

int TabularSolver::greedy(std::size_t state) const {
  const State& st = states_.at(state);
  return select_action(algorithm_, hinge_.get(), rows(state), model_.actions, st.s, st.c, st.b);
}

double TabularSolver::utility(std::size_t state, int action) const {
  const State& st = states_.at(state);
  const auto block = rows(state);
  double v = 0.0;
  for (int j = 0; j < quantiles_; ++j)
    v += h_eval(h_, st.s + st.c * block[static_cast<std::size_t>(action * quantiles_ + j)]);
  return v / quantiles_;
}

void TabularSolver::sweep() {
  const double gamma = model_.gamma;
  const auto n = static_cast<std::size_t>(quantiles_);
  std::vector<int> next_action(states_.size());
  for (std::size_t i = 0; i < states_.size(); ++i) next_action[i] = greedy(i);

  std::vector<std::vector<QuantileDistribution>> updated(states_.size());
  for (std::size_t i = 0; i < states_.size(); ++i) {
    const State& st = states_[i];
    const double r = model_.rewards[static_cast<std::size_t>(st.node)];
    for (int a = 0; a < model_.actions; ++a) {
      const auto& succ = successors_[i][static_cast<std::size_t>(a)];
      if (succ.empty()) {
        updated[i].push_back(quantile_project(DiscreteDistribution::point(r), n));
        continue;
      }
      std::vector<Atom> atoms;
      atoms.reserve(succ.size() * n);
      for (const auto& [child, p] : succ) {
        const auto block = rows(child);
        const std::size_t offset = static_cast<std::size_t>(next_action[child]) * n;
        for (std::size_t j = 0; j < n; ++j)
          atoms.push_back(Atom{r + gamma * block[offset + j], p / static_cast<double>(n)});
      }
      updated[i].push_back(quantile_project(DiscreteDistribution(std::move(atoms)), n));
    }
  }
  for (std::size_t i = 0; i < states_.size(); ++i) {
    const State& st = states_[i];
    for (int a = 0; a < model_.actions; ++a)
      table_->set(st.node, algorithm_.augmented() ? st.t : 0, key_value(st), a,
                  updated[i][static_cast<std::size_t>(a)].theta());
  }
  ++sweeps_;
}

DiscreteDistribution TabularSolver::policy_return(std::size_t state, int action) const {
  const State& st = states_.at(state);
  const double r = model_.rewards[static_cast<std::size_t>(st.node)];
  const auto& succ = successors(state, action);
  if (succ.empty()) return DiscreteDistribution::point(r);
  std::vector<std::pair<double, DiscreteDistribution>> parts;
  for (const auto& [child, p] : succ) parts.emplace_back(p, policy_return(child, greedy(child)).affine(r, model_.gamma));
  return mix(parts);
}

void TabularSolver::set_h(HFunction h) {
  if (h.size() != static_cast<std::size_t>(quantiles_))
    throw std::invalid_argument("h dimension must equal the number of quantiles");
  h_ = std::move(h);
  hinge_ = std::make_unique<HingeSum>(h_);
}

double TabularSolver::update_h() {
  const auto block = rows(0);
  const int a = best_srm_row(algorithm_.spectrum, block, model_.actions);
  const auto n = static_cast<std::size_t>(quantiles_);
  auto next = QuantileDistribution::from_unsorted(
      std::vector<double>(block.begin() + static_cast<std::ptrdiff_t>(a * n),
                          block.begin() + static_cast<std::ptrdiff_t>((a + 1) * n)));
  const double objective = srm_value(algorithm_.spectrum, next);
  set_h(HFunction{next.theta(), h_.quantile_weights, h_.level_masses});
  return objective;
}

void TabularSolver::set_b(double b0) {
  b0_ = b0;
  enumerate();
}

double TabularSolver::update_b() {
  const auto block = rows(0);
  const int a = qr_cvar_action(block, model_.actions, b0_);
  const auto n = static_cast<std::size_t>(quantiles_);
  std::vector<double> row(block.begin() + static_cast<std::ptrdiff_t>(a * n),
                          block.begin() + static_cast<std::ptrdiff_t>((a + 1) * n));
  std::sort(row.begin(), row.end());
  const double k = std::ceil(algorithm_.alpha * static_cast<double>(n) - 1e-9);
  const std::size_t idx = static_cast<std::size_t>(std::clamp(k, 1.0, static_cast<double>(n))) - 1;
  set_b(row[idx]);
  return b0_;
}

}  // namespace qrsrm
