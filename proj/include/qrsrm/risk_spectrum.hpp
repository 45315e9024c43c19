#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qrsrm/distribution.hpp"

namespace qrsrm {

enum class SpectrumFamily { CVaR, WSCVaR, ERM, DualPower };

/// One CVaR term of a Kusuoka mixture.
struct CvarComponent {
  double level;
  double weight;
};

/// A risk spectrum phi: non-increasing, left-continuous, integrating to one.
///
/// Families:
///   CVaR(alpha)       phi(u) = 1{u <= alpha} / alpha
///   WSCVaR(a, w)      phi(u) = sum_i w_i 1{u <= a_i} / a_i
///   ERM(lambda)       phi(u) = lambda e^{-lambda u} / (1 - e^{-lambda})
///   DPRM(nu)          phi(u) = nu (1 - u)^{nu - 1}
///
/// The mixing measure mu over CVaR levels follows from phi(u) = mu-integral of
/// 1/alpha over [u, 1]; ERM and DPRM carry an atom phi(1) at level one.
class RiskSpectrum {
 public:
  static RiskSpectrum cvar(double alpha);
  static RiskSpectrum wscvar(std::vector<CvarComponent> components);
  static RiskSpectrum erm(double lambda);
  static RiskSpectrum dual_power(double nu);
  static RiskSpectrum expectation() { return cvar(1.0); }

  /// "cvar:0.5", "wscvar:0.1,1.0@0.8,0.2", "erm:12", "dprm:4", "mean".
  /// Throws std::invalid_argument on malformed text or invalid parameters.
  static RiskSpectrum parse(std::string_view text);
  std::string to_string() const;

  SpectrumFamily family() const { return family_; }
  /// alpha, lambda or nu; meaningless for WSCVaR.
  double parameter() const { return parameter_; }
  /// Exact CVaR terms for CVaR and WSCVaR; empty for ERM/DPRM.
  const std::vector<CvarComponent>& components() const { return components_; }
  bool is_cvar_mixture() const {
    return family_ == SpectrumFamily::CVaR || family_ == SpectrumFamily::WSCVaR;
  }

  /// Throws std::domain_error for u outside [0, 1].
  double phi(double u) const;
  /// Integral of phi over [a, b], closed form.
  double phi_integral(double a, double b) const;

 private:
  RiskSpectrum(SpectrumFamily family, double parameter, std::vector<CvarComponent> components);

  SpectrumFamily family_;
  double parameter_;
  std::vector<CvarComponent> components_;
};

/// Per-interval weights of a spectrum over [u_0, u_1), ..., [u_{n-1}, u_n].
struct LevelWeights {
  /// mu-integral of 1/alpha over each interval: phi(u_{i-1}) - phi(u_i),
  /// with phi taken as zero past 1 on the closed last interval.
  std::vector<double> quantile_weights;
  /// mu-mass of each interval.
  std::vector<double> level_masses;
};

/// `edges` runs from 0 to 1, strictly increasing.
LevelWeights interval_weights(const RiskSpectrum& spectrum, std::span<const double> edges);
/// Interval weights on the uniform grid tau_i = i / n.
LevelWeights quantile_weights(const RiskSpectrum& spectrum, std::size_t n);

/// Mean of the worst alpha fraction; the straddling atom is split.
/// Throws std::domain_error unless 0 < alpha <= 1.
double cvar(const DiscreteDistribution& dist, double alpha);
/// Integral of phi(u) F^{-1}(u) du, exact on the piecewise-constant quantile function.
double srm_value(const RiskSpectrum& spectrum, const DiscreteDistribution& dist);
double srm_value(const RiskSpectrum& spectrum, const QuantileDistribution& dist);
/// Same as srm_value, on an unsorted row of equally weighted samples.
double srm_value(const RiskSpectrum& spectrum, std::span<const double> samples);

/// The spectrum as a finite CVaR mixture. CVaR/WSCVaR are exact; ERM/DPRM are
/// discretized on the n-interval grid with level m_i / mu_i and weight m_i,
/// plus their atom phi(1) as an exact level-one term.
std::vector<CvarComponent> cvar_mixture(const RiskSpectrum& spectrum, std::size_t n);

/// The concave utility attaining the supremum representation of an SRM,
/// h(z) = sum_i theta_i m_i + mu_i (z - theta_i)^-.
struct HFunction {
  std::vector<double> ref_quantiles;
  std::vector<double> quantile_weights;
  std::vector<double> level_masses;

  std::size_t size() const { return ref_quantiles.size(); }
  /// sum_i theta_i m_i, the action-independent part.
  double constant_term() const;
};

HFunction build_h(const RiskSpectrum& spectrum, const QuantileDistribution& quantiles);
/// h built on the exact quantile function of `dist`: one interval per atom.
HFunction build_h_exact(const RiskSpectrum& spectrum, const DiscreteDistribution& dist);

double h_eval(const HFunction& h, double z);
double expected_h(const HFunction& h, const DiscreteDistribution& dist);

}  // namespace qrsrm
