#include "qrsrm/risk_spectrum.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <stdexcept>

#include "qrsrm/text.hpp"

namespace qrsrm {

namespace {

// 1 - e^{-lambda} without cancellation for small lambda.
double erm_norm(double lambda) { return -std::expm1(-lambda); }

}  // namespace

RiskSpectrum::RiskSpectrum(SpectrumFamily family, double parameter,
                           std::vector<CvarComponent> components)
    : family_(family), parameter_(parameter), components_(std::move(components)) {}

RiskSpectrum RiskSpectrum::cvar(double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0))
    throw std::invalid_argument("CVaR level must lie in (0, 1], got " + format_number(alpha));
  return RiskSpectrum(SpectrumFamily::CVaR, alpha, {{alpha, 1.0}});
}

RiskSpectrum RiskSpectrum::wscvar(std::vector<CvarComponent> components) {
  if (components.empty()) throw std::invalid_argument("WSCVaR needs at least one level");
  double total = 0.0;
  for (const auto& c : components) {
    if (!(c.level > 0.0 && c.level <= 1.0))
      throw std::invalid_argument("WSCVaR level must lie in (0, 1], got " + format_number(c.level));
    if (!(c.weight >= 0.0))
      throw std::invalid_argument("WSCVaR weight must be non-negative");
    total += c.weight;
  }
  if (std::abs(total - 1.0) > 1e-12)
    throw std::invalid_argument("WSCVaR weights sum to " + format_number(total));
  return RiskSpectrum(SpectrumFamily::WSCVaR, 0.0, std::move(components));
}

RiskSpectrum RiskSpectrum::erm(double lambda) {
  if (!(lambda > 0.0) || !std::isfinite(lambda))
    throw std::invalid_argument("ERM lambda must be positive");
  return RiskSpectrum(SpectrumFamily::ERM, lambda, {});
}

RiskSpectrum RiskSpectrum::dual_power(double nu) {
  if (!(nu >= 1.0) || !std::isfinite(nu))
    throw std::invalid_argument("DPRM nu must be >= 1");
  return RiskSpectrum(SpectrumFamily::DualPower, nu, {});
}

RiskSpectrum RiskSpectrum::parse(std::string_view text) {
  const std::string_view trimmed = trim(text);
  if (trimmed == "mean") return expectation();
  const auto colon = trimmed.find(':');
  if (colon == std::string_view::npos)
    throw std::invalid_argument("spectrum '" + std::string(text) + "' lacks a ':'");
  const std::string_view kind = trimmed.substr(0, colon);
  const std::string_view args = trimmed.substr(colon + 1);

  if (kind == "cvar") return cvar(parse_number(args));
  if (kind == "erm") return erm(parse_number(args));
  if (kind == "dprm") return dual_power(parse_number(args));
  if (kind == "wscvar") {
    const auto at = args.find('@');
    if (at == std::string_view::npos)
      throw std::invalid_argument("wscvar needs 'levels@weights', got '" + std::string(args) + "'");
    const auto levels = parse_number_list(args.substr(0, at));
    const auto weights = parse_number_list(args.substr(at + 1));
    if (levels.size() != weights.size())
      throw std::invalid_argument("wscvar has " + std::to_string(levels.size()) + " levels but " +
                                  std::to_string(weights.size()) + " weights");
    std::vector<CvarComponent> components;
    for (std::size_t i = 0; i < levels.size(); ++i) components.push_back({levels[i], weights[i]});
    return wscvar(std::move(components));
  }
  throw std::invalid_argument("unknown spectrum family '" + std::string(kind) + "'");
}

std::string RiskSpectrum::to_string() const {
  switch (family_) {
    case SpectrumFamily::CVaR:
      return "cvar:" + format_number(parameter_);
    case SpectrumFamily::ERM:
      return "erm:" + format_number(parameter_);
    case SpectrumFamily::DualPower:
      return "dprm:" + format_number(parameter_);
    case SpectrumFamily::WSCVaR: {
      std::string levels;
      std::string weights;
      for (std::size_t i = 0; i < components_.size(); ++i) {
        if (i > 0) {
          levels += ',';
          weights += ',';
        }
        levels += format_number(components_[i].level);
        weights += format_number(components_[i].weight);
      }
      return "wscvar:" + levels + "@" + weights;
    }
  }
  return {};
}

double RiskSpectrum::phi(double u) const {
  if (!(u >= 0.0 && u <= 1.0)) throw std::domain_error("phi evaluated outside [0, 1]");
  switch (family_) {
    case SpectrumFamily::CVaR:
    case SpectrumFamily::WSCVaR: {
      double v = 0.0;
      for (const auto& c : components_)
        if (u <= c.level) v += c.weight / c.level;
      return v;
    }
    case SpectrumFamily::ERM:
      return parameter_ * std::exp(-parameter_ * u) / erm_norm(parameter_);
    case SpectrumFamily::DualPower:
      return parameter_ * std::pow(1.0 - u, parameter_ - 1.0);
  }
  return 0.0;
}

double RiskSpectrum::phi_integral(double a, double b) const {
  switch (family_) {
    case SpectrumFamily::CVaR:
    case SpectrumFamily::WSCVaR: {
      double v = 0.0;
      for (const auto& c : components_)
        v += c.weight * (std::min(b, c.level) - std::min(a, c.level)) / c.level;
      return v;
    }
    case SpectrumFamily::ERM:
      return (std::exp(-parameter_ * a) - std::exp(-parameter_ * b)) / erm_norm(parameter_);
    case SpectrumFamily::DualPower:
      return std::pow(1.0 - a, parameter_) - std::pow(1.0 - b, parameter_);
  }
  return 0.0;
}

LevelWeights interval_weights(const RiskSpectrum& spectrum, std::span<const double> edges) {
  if (edges.size() < 2 || edges.front() != 0.0 || edges.back() != 1.0)
    throw std::invalid_argument("interval edges must run from 0 to 1");
  const std::size_t n = edges.size() - 1;
  LevelWeights out;
  out.quantile_weights.resize(n);
  out.level_masses.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = edges[i];
    const double b = edges[i + 1];
    if (!(b > a)) throw std::invalid_argument("interval edges must be strictly increasing");
    const double phi_a = spectrum.phi(a);
    const double phi_b = (i + 1 == n) ? 0.0 : spectrum.phi(b);
    out.quantile_weights[i] = std::max(0.0, phi_a - phi_b);
    // mu([a, b)) = a phi(a) - b phi(b) + int_a^b phi, by parts on phi(u) = int_[u,1] dmu/alpha.
    out.level_masses[i] = std::max(0.0, a * phi_a - b * phi_b + spectrum.phi_integral(a, b));
  }
  return out;
}

LevelWeights quantile_weights(const RiskSpectrum& spectrum, std::size_t n) {
  if (n == 0) throw std::invalid_argument("quantile_weights needs N >= 1");
  std::vector<double> edges(n + 1);
  for (std::size_t i = 0; i <= n; ++i)
    edges[i] = static_cast<double>(i) / static_cast<double>(n);
  return interval_weights(spectrum, edges);
}

double cvar(const DiscreteDistribution& dist, double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw std::domain_error("CVaR level must lie in (0, 1]");
  double remaining = alpha;
  double sum = 0.0;
  for (const auto& a : dist.atoms()) {
    const double take = std::min(a.probability, remaining);
    sum += take * a.value;
    remaining -= take;
    if (remaining <= 0.0) break;
  }
  // Rounding can leave a sliver of mass unassigned; charge it to the top atom.
  if (remaining > 0.0) sum += remaining * dist.max();
  return sum / alpha;
}

double srm_value(const RiskSpectrum& spectrum, const DiscreteDistribution& dist) {
  double value = 0.0;
  double lower = 0.0;
  const auto& atoms = dist.atoms();
  for (std::size_t k = 0; k < atoms.size(); ++k) {
    const double upper = (k + 1 == atoms.size()) ? 1.0 : std::min(1.0, lower + atoms[k].probability);
    value += atoms[k].value * spectrum.phi_integral(lower, upper);
    lower = upper;
  }
  return value;
}

double srm_value(const RiskSpectrum& spectrum, const QuantileDistribution& dist) {
  return srm_value(spectrum, std::span<const double>(dist.theta()));
}

double srm_value(const RiskSpectrum& spectrum, std::span<const double> samples) {
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  double value = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i)
    value += sorted[i] * spectrum.phi_integral(static_cast<double>(i) / n,
                                               static_cast<double>(i + 1) / n);
  return value;
}

std::vector<CvarComponent> cvar_mixture(const RiskSpectrum& spectrum, std::size_t n) {
  if (spectrum.is_cvar_mixture()) return spectrum.components();
  LevelWeights w = quantile_weights(spectrum, n);
  // The atom at level one is exact; only the continuous part of the last
  // interval is collapsed onto a single level.
  const double atom = spectrum.phi(1.0);
  w.level_masses.back() -= atom;
  w.quantile_weights.back() -= atom;
  std::vector<CvarComponent> out;
  double total = atom;
  for (std::size_t i = 0; i < n; ++i) {
    if (w.level_masses[i] <= 1e-15 || w.quantile_weights[i] <= 1e-15) continue;
    const double level = std::clamp(w.level_masses[i] / w.quantile_weights[i], 1e-12, 1.0);
    out.push_back({level, w.level_masses[i]});
    total += w.level_masses[i];
  }
  if (atom > 0.0) out.push_back({1.0, atom});
  for (auto& c : out) c.weight /= total;
  return out;
}

double HFunction::constant_term() const {
  double c = 0.0;
  for (std::size_t i = 0; i < ref_quantiles.size(); ++i) c += ref_quantiles[i] * level_masses[i];
  return c;
}

HFunction build_h(const RiskSpectrum& spectrum, const QuantileDistribution& quantiles) {
  LevelWeights w = quantile_weights(spectrum, quantiles.size());
  return HFunction{quantiles.theta(), std::move(w.quantile_weights), std::move(w.level_masses)};
}

HFunction build_h_exact(const RiskSpectrum& spectrum, const DiscreteDistribution& dist) {
  std::vector<double> edges{0.0};
  std::vector<double> values;
  double cum = 0.0;
  for (const auto& a : dist.atoms()) {
    cum += a.probability;
    values.push_back(a.value);
    edges.push_back(std::min(cum, 1.0));
  }
  edges.back() = 1.0;
  LevelWeights w = interval_weights(spectrum, edges);
  return HFunction{std::move(values), std::move(w.quantile_weights), std::move(w.level_masses)};
}

double h_eval(const HFunction& h, double z) {
  double v = 0.0;
  for (std::size_t i = 0; i < h.ref_quantiles.size(); ++i) {
    v += h.ref_quantiles[i] * h.level_masses[i];
    v += h.quantile_weights[i] * std::min(z - h.ref_quantiles[i], 0.0);
  }
  return v;
}

double expected_h(const HFunction& h, const DiscreteDistribution& dist) {
  double v = 0.0;
  for (const auto& a : dist.atoms()) v += a.probability * h_eval(h, a.value);
  return v;
}

}  // namespace qrsrm
