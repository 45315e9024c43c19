#include "qrsrm/distribution.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace qrsrm {

namespace {

constexpr double kMassTolerance = 1e-9;

bool same_value(double a, double b) {
  return std::abs(a - b) <= 1e-12 * std::max(1.0, std::max(std::abs(a), std::abs(b)));
}

}  // namespace

DiscreteDistribution::DiscreteDistribution(std::vector<Atom> atoms) {
  if (atoms.empty()) throw std::invalid_argument("distribution has no atoms");
  double total = 0.0;
  for (const auto& a : atoms) {
    if (!std::isfinite(a.value) || !std::isfinite(a.probability) || a.probability < 0.0)
      throw std::invalid_argument("invalid atom (" + std::to_string(a.value) + ", " +
                                  std::to_string(a.probability) + ")");
    total += a.probability;
  }
  if (std::abs(total - 1.0) > kMassTolerance)
    throw std::invalid_argument("atom probabilities sum to " + std::to_string(total));

  std::sort(atoms.begin(), atoms.end(),
            [](const Atom& l, const Atom& r) { return l.value < r.value; });
  for (const auto& a : atoms) {
    if (a.probability == 0.0) continue;
    if (!atoms_.empty() && atoms_.back().value == a.value) {
      atoms_.back().probability += a.probability;
    } else {
      atoms_.push_back(a);
    }
  }
  for (auto& a : atoms_) a.probability /= total;
}

DiscreteDistribution DiscreteDistribution::point(double value) {
  return DiscreteDistribution({{value, 1.0}});
}

DiscreteDistribution DiscreteDistribution::empirical(std::span<const double> samples) {
  if (samples.empty()) throw std::invalid_argument("empirical distribution of no samples");
  std::vector<Atom> atoms;
  atoms.reserve(samples.size());
  const double p = 1.0 / static_cast<double>(samples.size());
  for (double v : samples) atoms.push_back({v, p});
  return DiscreteDistribution(std::move(atoms));
}

double DiscreteDistribution::mean() const {
  double m = 0.0;
  for (const auto& a : atoms_) m += a.value * a.probability;
  return m;
}

double DiscreteDistribution::cdf(double z) const {
  double f = 0.0;
  for (const auto& a : atoms_) {
    if (a.value > z && !same_value(a.value, z)) break;
    f += a.probability;
  }
  return std::min(f, 1.0);
}

double DiscreteDistribution::mass_at(double z) const {
  for (const auto& a : atoms_)
    if (same_value(a.value, z)) return a.probability;
  return 0.0;
}

double DiscreteDistribution::lower_quantile(double u) const {
  double f = 0.0;
  for (const auto& a : atoms_) {
    f += a.probability;
    if (f >= u - 1e-12) return a.value;
  }
  return atoms_.back().value;
}

double DiscreteDistribution::upper_quantile(double u) const {
  double f = 0.0;
  for (const auto& a : atoms_) {
    f += a.probability;
    if (f > u + 1e-12) return a.value;
  }
  return atoms_.back().value;
}

DiscreteDistribution DiscreteDistribution::affine(double shift, double scale) const {
  if (scale < 0.0) throw std::invalid_argument("affine map needs a non-negative scale");
  std::vector<Atom> out;
  out.reserve(atoms_.size());
  for (const auto& a : atoms_) out.push_back({shift + scale * a.value, a.probability});
  return DiscreteDistribution(std::move(out));
}

QuantileDistribution::QuantileDistribution(std::vector<double> theta) : theta_(std::move(theta)) {
  if (theta_.empty()) throw std::invalid_argument("quantile distribution needs N >= 1");
  for (double v : theta_)
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite quantile");
  if (!std::is_sorted(theta_.begin(), theta_.end()))
    throw std::invalid_argument("quantiles must be sorted ascending");
}

QuantileDistribution QuantileDistribution::from_unsorted(std::vector<double> theta) {
  std::sort(theta.begin(), theta.end());
  return QuantileDistribution(std::move(theta));
}

QuantileDistribution QuantileDistribution::zeros(std::size_t n) {
  return QuantileDistribution(std::vector<double>(n, 0.0));
}

DiscreteDistribution QuantileDistribution::to_discrete() const {
  return DiscreteDistribution::empirical(theta_);
}

std::vector<double> quantile_midpoints(std::size_t n) {
  std::vector<double> tau(n);
  for (std::size_t i = 0; i < n; ++i)
    tau[i] = (2.0 * static_cast<double>(i) + 1.0) / (2.0 * static_cast<double>(n));
  return tau;
}

QuantileDistribution quantile_project(const DiscreteDistribution& dist, std::size_t n) {
  if (n == 0) throw std::invalid_argument("quantile_project needs N >= 1");
  std::vector<double> theta(n);
  const auto& atoms = dist.atoms();
  // Single pass: midpoints are increasing, so the atom cursor only advances.
  std::size_t k = 0;
  double cum = atoms[0].probability;
  for (std::size_t i = 0; i < n; ++i) {
    const double tau = (2.0 * static_cast<double>(i) + 1.0) / (2.0 * static_cast<double>(n));
    while (cum < tau - 1e-12 && k + 1 < atoms.size()) {
      ++k;
      cum += atoms[k].probability;
    }
    theta[i] = atoms[k].value;
  }
  return QuantileDistribution(std::move(theta));
}

QuantileDistribution pushforward(const QuantileDistribution& q, double reward, double discount) {
  if (discount < 0.0) throw std::invalid_argument("pushforward needs a non-negative discount");
  std::vector<double> out(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) out[i] = reward + discount * q[i];
  return QuantileDistribution(std::move(out));
}

CdfPoint cdf_eval(const QuantileDistribution& q, double z) {
  std::size_t below = 0;
  std::size_t equal = 0;
  for (double v : q.theta()) {
    if (v < z) {
      ++below;
    } else if (v == z) {
      ++equal;
    }
  }
  const double n = static_cast<double>(q.size());
  return {static_cast<double>(below + equal) / n, static_cast<double>(equal) / n};
}

double w1_distance(const QuantileDistribution& a, const QuantileDistribution& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("w1_distance: " + std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()) + " quantiles");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += std::abs(a[i] - b[i]);
  return sum / static_cast<double>(a.size());
}

double w1_distance(const DiscreteDistribution& a, const DiscreteDistribution& b) {
  // Integrate |F_a - F_b| over the merged breakpoints.
  std::vector<double> points;
  points.reserve(a.size() + b.size());
  for (const auto& x : a.atoms()) points.push_back(x.value);
  for (const auto& x : b.atoms()) points.push_back(x.value);
  std::sort(points.begin(), points.end());
  points.erase(std::unique(points.begin(), points.end()), points.end());

  double area = 0.0;
  double fa = 0.0;
  double fb = 0.0;
  std::size_t ia = 0;
  std::size_t ib = 0;
  for (std::size_t k = 0; k + 1 < points.size(); ++k) {
    while (ia < a.size() && a.atoms()[ia].value <= points[k]) fa += a.atoms()[ia++].probability;
    while (ib < b.size() && b.atoms()[ib].value <= points[k]) fb += b.atoms()[ib++].probability;
    area += std::abs(fa - fb) * (points[k + 1] - points[k]);
  }
  return area;
}

DiscreteDistribution mix(const std::vector<std::pair<double, DiscreteDistribution>>& components) {
  if (components.empty()) throw std::invalid_argument("mix of no components");
  double total = 0.0;
  std::vector<Atom> atoms;
  for (const auto& [p, d] : components) {
    if (!(p >= 0.0)) throw std::invalid_argument("negative mixture probability");
    total += p;
    for (const auto& a : d.atoms()) atoms.push_back({a.value, p * a.probability});
  }
  if (std::abs(total - 1.0) > kMassTolerance)
    throw std::invalid_argument("mixture probabilities sum to " + std::to_string(total));
  return DiscreteDistribution(std::move(atoms));
}

}  // namespace qrsrm
