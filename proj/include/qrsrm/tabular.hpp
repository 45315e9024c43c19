#pragma once

// Exact distributional value iteration on an acyclic fixture: every
// reachable augmented state gets a row in a TabularQuantiles table and each
// sweep applies the projected Bellman optimality operator to all of them at
// once. Used to check the agents' fixed points against exact oracles.

#include <cstddef>
#include <memory>
#include <utility>
#include <vector>

#include "qrsrm/approximator.hpp"
#include "qrsrm/environment.hpp"
#include "qrsrm/policy.hpp"

namespace qrsrm {

class TabularSolver {
 public:
  struct State {
    int node;
    int t;
    double s;
    double c;
    double b;
  };
  using Successors = std::vector<std::pair<std::size_t, double>>;

  /// Throws std::invalid_argument on a cyclic model, std::runtime_error if
  /// two distinct reachable states fall into one table bin.
  TabularSolver(FixtureModel model, Algorithm algorithm, int quantiles, double b0 = 0.0);

  const FixtureModel& model() const { return model_; }
  const Algorithm& algorithm() const { return algorithm_; }
  int quantiles() const { return quantiles_; }
  int actions() const { return model_.actions; }

  /// Reachable states; index 0 is the initial state. QR-SRM tracks (t, s),
  /// QR-CVaR (t, b); the other rules only see the node.
  const std::vector<State>& states() const { return states_; }
  /// Successor states of `state` under `action`; empty at a leaf.
  const Successors& successors(std::size_t state, int action) const;

  /// One synchronous sweep from the current table.
  void sweep();
  int sweeps() const { return sweeps_; }

  /// Row-major A x N block of `state`.
  std::vector<double> rows(std::size_t state) const;
  int greedy(std::size_t state) const;
  /// (1/N) sum_j h(s + c theta_j(a)) at `state`.
  double utility(std::size_t state, int action) const;
  /// Exact return distribution of taking `action` in `state` and then
  /// following the greedy policy of the current table.
  DiscreteDistribution policy_return(std::size_t state, int action) const;

  const HFunction& h() const { return h_; }
  void set_h(HFunction h);
  /// h from the initial row with the highest SRM; returns that SRM.
  double update_h();

  double b() const { return b0_; }
  /// Re-enumerates the reachable states from the new threshold and clears
  /// the table.
  void set_b(double b0);
  /// b0 becomes the alpha-quantile of the greedy initial row; returns it.
  double update_b();

 private:
  void enumerate();
  double key_value(const State& st) const;

  FixtureModel model_;
  Algorithm algorithm_;
  int quantiles_;
  double b0_;
  HFunction h_;
  std::unique_ptr<HingeSum> hinge_;
  std::vector<State> states_;
  std::vector<std::vector<Successors>> successors_;
  std::unique_ptr<TabularQuantiles> table_;
  int sweeps_ = 0;
};

}  // namespace qrsrm
