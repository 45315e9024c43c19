#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace qrsrm {

struct Atom {
  double value;
  double probability;
};

/// Finite distribution over returns. Atoms are kept sorted by value with
/// equal values merged, so the point mass at any value is well defined.
class DiscreteDistribution {
 public:
  DiscreteDistribution() = default;

  /// Sorts, merges equal values and validates. Throws std::invalid_argument
  /// on negative or non-finite entries, or when the mass is not 1 (1e-12).
  explicit DiscreteDistribution(std::vector<Atom> atoms);

  static DiscreteDistribution point(double value);
  /// Equal mass on each sample (duplicates merged).
  static DiscreteDistribution empirical(std::span<const double> samples);

  const std::vector<Atom>& atoms() const { return atoms_; }
  std::size_t size() const { return atoms_.size(); }
  bool empty() const { return atoms_.empty(); }

  double mean() const;
  double min() const { return atoms_.front().value; }
  double max() const { return atoms_.back().value; }

  /// P(Z <= z)
  double cdf(double z) const;
  /// P(Z == z), with a relative tolerance of 1e-12 on the value match.
  double mass_at(double z) const;
  /// Left-continuous inverse inf{z : F(z) >= u}, u in (0,1]; u <= 0 gives min.
  double lower_quantile(double u) const;
  /// inf{z : F(z) > u}; for u >= 1 returns the largest atom.
  double upper_quantile(double u) const;

  /// Distribution of shift + scale * Z (scale >= 0).
  DiscreteDistribution affine(double shift, double scale) const;

 private:
  std::vector<Atom> atoms_;
};

/// N equally weighted support points theta_i = F^{-1}(tau_hat_i),
/// tau_hat_i = (2i - 1) / (2N). Sorted ascending.
class QuantileDistribution {
 public:
  QuantileDistribution() = default;
  /// Throws std::invalid_argument if empty, unsorted or non-finite.
  explicit QuantileDistribution(std::vector<double> theta);
  /// Sorts first; for rows coming out of an approximator that may cross.
  static QuantileDistribution from_unsorted(std::vector<double> theta);
  static QuantileDistribution zeros(std::size_t n);

  const std::vector<double>& theta() const { return theta_; }
  std::size_t size() const { return theta_.size(); }
  double operator[](std::size_t i) const { return theta_[i]; }

  DiscreteDistribution to_discrete() const;

 private:
  std::vector<double> theta_;
};

/// tau_hat_i for i = 1..n (returned 0-based).
std::vector<double> quantile_midpoints(std::size_t n);

/// Pi_Q: the w1-closest N-quantile representation of `dist`.
QuantileDistribution quantile_project(const DiscreteDistribution& dist, std::size_t n);

/// theta_i -> reward + discount * theta_i
QuantileDistribution pushforward(const QuantileDistribution& q, double reward, double discount);

struct CdfPoint {
  double cdf;
  double mass;
};
/// Counting CDF of the quantile representation and the point mass at z.
CdfPoint cdf_eval(const QuantileDistribution& q, double z);

/// (1/N) sum |a_i - b_i|; throws std::invalid_argument on size mismatch.
double w1_distance(const QuantileDistribution& a, const QuantileDistribution& b);
/// Area between the two CDFs.
double w1_distance(const DiscreteDistribution& a, const DiscreteDistribution& b);

/// Exact mixture sum_k p_k D_k; throws std::invalid_argument unless the
/// component probabilities are non-negative and sum to 1 (1e-12).
DiscreteDistribution mix(const std::vector<std::pair<double, DiscreteDistribution>>& components);

}  // namespace qrsrm
