#pragma once

// Action selection rules shared by the agents and the exact tabular solver.
// Quantile blocks are row-major A x N: action a owns [a N, (a + 1) N).

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qrsrm/risk_spectrum.hpp"

namespace qrsrm {

enum class AlgorithmKind { QrSrm, QrDqn, QrCvar, QrIcvar };

/// "qrsrm:<spectrum>", "qrdqn", "qrcvar:<alpha>", "qricvar:<alpha>".
struct Algorithm {
  AlgorithmKind kind = AlgorithmKind::QrDqn;
  RiskSpectrum spectrum = RiskSpectrum::expectation();
  double alpha = 1.0;

  /// Throws std::invalid_argument on malformed text.
  static Algorithm parse(std::string_view text);
  std::string to_string() const;
  /// Label for tables: "qrsrm", "qrdqn", "qrcvar" or "qricvar".
  std::string model_name() const;
  /// The risk objective the algorithm targets, as a spectrum string.
  std::string spectrum_name() const;
  /// Whether the network sees (s, c) or (b, c) besides the observation.
  bool augmented() const { return kind == AlgorithmKind::QrSrm || kind == AlgorithmKind::QrCvar; }
};

/// Fast evaluation of sum_i mu_i (z - theta_i)^- for a fixed h with sorted
/// reference quantiles, via suffix sums.
class HingeSum {
 public:
  explicit HingeSum(const HFunction& h);
  double operator()(double z) const;

 private:
  std::vector<double> ref_;
  std::vector<double> weight_suffix_;
  std::vector<double> moment_suffix_;
};

/// Q(a) = (1/N) sum_j sum_i mu_i (s + c theta_j(a) - ref_i)^-, the
/// action-dependent part of E[h(s + c G)].
std::vector<double> srm_action_values(const HingeSum& hinge, std::span<const double> quantiles,
                                      int actions, double s, double c);

/// argmax over srm_action_values; ties go to the lowest index.
int greedy_action(const HFunction& h, std::span<const double> quantiles, int actions, double s, double c);
int greedy_action(const HingeSum& hinge, std::span<const double> quantiles, int actions, double s, double c);

/// Highest mean row.
int qr_dqn_action(std::span<const double> quantiles, int actions);
/// argmax (1/N) sum_j (theta_j(a) - b)^-.
int qr_cvar_action(std::span<const double> quantiles, int actions, double b);
/// Highest empirical CVaR_alpha of the row.
int qr_icvar_action(std::span<const double> quantiles, int actions, double alpha);

/// Mean of the worst alpha N quantiles of a row, the last one weighted
/// fractionally. Sorts a copy, so crossing quantiles are fine.
double empirical_cvar(std::span<const double> row, double alpha);

/// target_j = r + gamma theta_j, or r on a terminal transition.
std::vector<double> td_targets(std::span<const double> next_row, double reward, double gamma, bool terminal);

/// Row with the largest SRM value under `spectrum`; ties to the lowest index.
int best_srm_row(const RiskSpectrum& spectrum, std::span<const double> quantiles, int actions);

int argmax(std::span<const double> values);

/// The configured rule at a state: h-greedy for QR-SRM (needs `hinge`), the
/// b-hinge for QR-CVaR, mean or CVaR_alpha for the others.
int select_action(const Algorithm& algorithm, const HingeSum* hinge, std::span<const double> quantiles,
                  int actions, double s, double c, double b);

}  // namespace qrsrm
