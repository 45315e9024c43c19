#pragma once

// Time-t risk preferences implied by a static SRM. A CVaR_alpha term seen
// from an intermediate state (s_t, c_t) becomes CVaR_{alpha xi_t} of the
// remaining return, reweighted by xi_t, where xi_t is the conditional
// expectation of the optimal dual variable.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <vector>

#include "qrsrm/agent.hpp"
#include "qrsrm/distribution.hpp"
#include "qrsrm/environment.hpp"
#include "qrsrm/risk_spectrum.hpp"

namespace qrsrm {

/// Every component's xi_t is zero: the state lies above all thresholds and
/// carries no weight in the static objective.
class DegenerateDecomposition : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct DecomposedPreference {
  /// Aligned with the input mixture. Weights are normalized by xi.
  std::vector<CvarComponent> components;
  double xi = 0.0;
  /// Sum of weight_i * CVaR_{level_i}(G_t).
  double value = 0.0;
};

/// lambda_alpha = inf{z : F(z) > alpha}, the largest atom at alpha = 1. At an
/// exact CDF step alpha = F(z) this takes the next atom up, which is how a
/// quantile representation with tau_{i-1} <= alpha < tau_i picks theta_i.
/// Throws std::domain_error unless 0 < alpha <= 1.
double lambda_level(const DiscreteDistribution& g0, double alpha);
double lambda_level(const QuantileDistribution& g0, double alpha);

/// E[xi^alpha | F_t] for the state with remaining return G_t. With
/// z* = (lambda_alpha - s) / c:
///   alpha xi = F_t(z*) - p_t(z*) (F_0(lambda) - alpha) / p_0(lambda)
/// where the second term only applies when G_t has an atom at z*. The
/// product is clamped into [0, 1]. alpha = 1 returns 1, since xi^1 is
/// identically one.
/// Throws std::invalid_argument for c <= 0, std::domain_error for alpha
/// outside (0, 1].
double xi_t(const DiscreteDistribution& gt, double s, double c, const DiscreteDistribution& g0, double alpha);
double xi_t(const QuantileDistribution& gt, double s, double c, const QuantileDistribution& g0, double alpha);

/// The mixture a spectrum is decomposed through: exact for CVaR and WSCVaR,
/// the n-interval discretization for ERM and DPRM.
std::vector<CvarComponent> decomposition_mixture(const RiskSpectrum& spectrum, std::size_t n);

/// Throws std::invalid_argument unless the weights are non-negative and sum
/// to one and every level is in (0, 1]; DegenerateDecomposition when xi = 0.
DecomposedPreference decompose(std::span<const CvarComponent> mixture, const DiscreteDistribution& g0,
                               const DiscreteDistribution& gt, double s, double c);
DecomposedPreference decompose(std::span<const CvarComponent> mixture, const QuantileDistribution& g0,
                               const QuantileDistribution& gt, double s, double c);

struct Successor {
  double probability;
  double xi;
  double value;
};

/// s + c * sum_k p_k xi_k value_k.
double recompose(double s, double c, std::span<const Successor> successors);

/// Decomposition at every successor of the initial node of an acyclic
/// fixture under a fixed node policy.
struct FirstStep {
  double s = 0.0;
  double c = 1.0;
  DiscreteDistribution g0;
  /// One entry per distinct successor node.
  std::vector<int> nodes;
  std::vector<double> probabilities;
  std::vector<DiscreteDistribution> returns;
  std::vector<DecomposedPreference> preferences;

  std::vector<Successor> successors() const;
};

FirstStep decompose_first_step(const FixtureModel& model, const std::vector<int>& policy,
                               std::span<const CvarComponent> mixture);

struct TrajectoryStep {
  int t = 0;
  double s = 0.0;
  double c = 1.0;
  int action = 0;
  /// Set when xi = 0; `preference` is then empty.
  bool degenerate = false;
  DecomposedPreference preference;
};

/// One greedy episode of a frozen agent. At each step G_t is the online row
/// of the action taken and G_0 is the reference row: theta tilde for QR-SRM,
/// the greedy initial row otherwise. The episode seed is drawn from the
/// report stream of `seed`.
std::vector<TrajectoryStep> trajectory_report(const Agent& agent, std::uint64_t seed);

/// CSV with header t,s,c,level_1,weight_1,...; one row per step. Degenerate
/// steps leave the level and weight cells empty.
void write_trajectory_csv(std::ostream& out, const std::vector<TrajectoryStep>& steps);

}  // namespace qrsrm
