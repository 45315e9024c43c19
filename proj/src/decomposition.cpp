#include "qrsrm/decomposition.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>
#include <string>

#include "qrsrm/policy.hpp"
#include "qrsrm/rng.hpp"
#include "qrsrm/text.hpp"

namespace qrsrm {
namespace {

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw std::domain_error("risk level must lie in (0, 1]");
}

}  // namespace

double lambda_level(const DiscreteDistribution& g0, double alpha) {
  check_alpha(alpha);
  return g0.upper_quantile(alpha);
}

double lambda_level(const QuantileDistribution& g0, double alpha) {
  return lambda_level(g0.to_discrete(), alpha);
}

double xi_t(const DiscreteDistribution& gt, double s, double c, const DiscreteDistribution& g0, double alpha) {
  check_alpha(alpha);
  if (!(c > 0.0)) throw std::invalid_argument("xi_t needs c > 0");
  if (alpha == 1.0) return 1.0;
  const double lambda = lambda_level(g0, alpha);
  const double z = (lambda - s) / c;
  double scaled = gt.cdf(z);
  const double p_t = gt.mass_at(z);
  const double p_0 = g0.mass_at(lambda);
  if (p_t > 0.0 && p_0 > 0.0) scaled -= p_t * (g0.cdf(lambda) - alpha) / p_0;
  return std::clamp(scaled, 0.0, 1.0) / alpha;
}

double xi_t(const QuantileDistribution& gt, double s, double c, const QuantileDistribution& g0, double alpha) {
  return xi_t(gt.to_discrete(), s, c, g0.to_discrete(), alpha);
}

std::vector<CvarComponent> decomposition_mixture(const RiskSpectrum& spectrum, std::size_t n) {
  if (spectrum.is_cvar_mixture()) return spectrum.components();
  return cvar_mixture(spectrum, n);
}

DecomposedPreference decompose(std::span<const CvarComponent> mixture, const DiscreteDistribution& g0,
                               const DiscreteDistribution& gt, double s, double c) {
  if (mixture.empty()) throw std::invalid_argument("empty CVaR mixture");
  double total = 0.0;
  for (const auto& m : mixture) {
    if (!(m.level > 0.0 && m.level <= 1.0)) throw std::invalid_argument("mixture level outside (0, 1]");
    if (!(m.weight >= 0.0)) throw std::invalid_argument("negative mixture weight");
    total += m.weight;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("mixture weights must sum to one");

  DecomposedPreference out;
  out.components.reserve(mixture.size());
  for (const auto& m : mixture) {
    const double x = xi_t(gt, s, c, g0, m.level);
    // alpha xi <= 1 holds analytically; the lower clamp keeps a level for
    // components whose weight vanishes.
    const double level = std::clamp(m.level * x, std::numeric_limits<double>::min(), 1.0);
    out.components.push_back({level, m.weight * x});
    out.xi += m.weight * x;
  }
  if (!(out.xi > 0.0)) throw DegenerateDecomposition("xi is zero: the state lies above every threshold");
  for (auto& comp : out.components) {
    comp.weight /= out.xi;
    if (comp.weight > 0.0) out.value += comp.weight * cvar(gt, comp.level);
  }
  return out;
}

DecomposedPreference decompose(std::span<const CvarComponent> mixture, const QuantileDistribution& g0,
                               const QuantileDistribution& gt, double s, double c) {
  return decompose(mixture, g0.to_discrete(), gt.to_discrete(), s, c);
}

double recompose(double s, double c, std::span<const Successor> successors) {
  double total = 0.0;
  for (const auto& k : successors) total += k.probability * k.xi * k.value;
  return s + c * total;
}

std::vector<Successor> FirstStep::successors() const {
  std::vector<Successor> out;
  for (std::size_t k = 0; k < nodes.size(); ++k)
    out.push_back({probabilities[k], preferences[k].xi, preferences[k].value});
  return out;
}

FirstStep decompose_first_step(const FixtureModel& model, const std::vector<int>& policy,
                               std::span<const CvarComponent> mixture) {
  if (model.is_leaf(0)) throw std::invalid_argument("the initial node has no successors");
  FirstStep out;
  out.s = model.rewards[0];
  out.c = model.gamma;
  out.g0 = model.return_distribution(0, policy);
  std::map<int, double> merged;
  for (const auto& e : model.successors[0][policy[0]]) merged[e.to] += e.probability;
  for (const auto& [node, p] : merged) {
    out.nodes.push_back(node);
    out.probabilities.push_back(p);
    out.returns.push_back(model.return_distribution(node, policy));
    out.preferences.push_back(decompose(mixture, out.g0, out.returns.back(), out.s, out.c));
  }
  return out;
}

std::vector<TrajectoryStep> trajectory_report(const Agent& agent, std::uint64_t seed) {
  const int n = agent.quantiles();
  const auto mixture = decomposition_mixture(agent.algorithm().spectrum, static_cast<std::size_t>(n));

  QuantileDistribution g0;
  if (agent.algorithm().kind == AlgorithmKind::QrSrm) {
    g0 = QuantileDistribution(agent.h().ref_quantiles);
  } else {
    const AugmentedState start = agent.initial_state();
    const auto rows = agent.quantiles_at(start);
    const int a = agent.act(start);
    g0 = QuantileDistribution::from_unsorted({rows.begin() + a * n, rows.begin() + (a + 1) * n});
  }
  const DiscreteDistribution g0_atoms = g0.to_discrete();

  Augmented roll(agent.environment().clone(), agent.gamma());
  AugmentedState st = roll.reset(derive_seed(seed, stream::kReport, 0), agent.initial_b());
  std::vector<TrajectoryStep> out;
  for (;;) {
    TrajectoryStep step;
    step.t = st.t;
    step.s = st.s;
    step.c = st.c;
    step.action = agent.act(st);
    const auto rows = agent.quantiles_at(st);
    const auto gt = QuantileDistribution::from_unsorted(
                        {rows.begin() + step.action * n, rows.begin() + (step.action + 1) * n})
                        .to_discrete();
    try {
      step.preference = decompose(mixture, g0_atoms, gt, st.s, st.c);
    } catch (const DegenerateDecomposition&) {
      step.degenerate = true;
    }
    out.push_back(std::move(step));
    const AugmentedStep next = roll.step(out.back().action);
    if (next.done) break;
    st = next.next;
  }
  return out;
}

void write_trajectory_csv(std::ostream& out, const std::vector<TrajectoryStep>& steps) {
  std::size_t width = 0;
  for (const auto& step : steps) width = std::max(width, step.preference.components.size());
  out << "t,s,c";
  for (std::size_t i = 1; i <= width; ++i) out << ",level_" << i << ",weight_" << i;
  out << '\n';
  for (const auto& step : steps) {
    out << step.t << ',' << format_number(step.s) << ',' << format_number(step.c);
    for (std::size_t i = 0; i < width; ++i) {
      if (step.degenerate) {
        out << ",,";
        continue;
      }
      const auto& comp = step.preference.components[i];
      out << ',' << format_number(comp.level) << ',' << format_number(comp.weight);
    }
    out << '\n';
  }
}

}  // namespace qrsrm
