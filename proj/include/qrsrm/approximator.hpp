#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "qrsrm/distribution.hpp"

namespace qrsrm {

/// Raised when a loss or parameter goes non-finite.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct HuberValue {
  double loss;
  double derivative;
};

/// rho_tau^kappa(u) = |tau - 1{u < 0}| L_kappa(u) and its derivative in u.
HuberValue quantile_huber(double u, double tau, double kappa);

/// Fully connected ReLU network mapping features to A x N quantiles, trained
/// with Adam on the quantile Huber loss. `T` is the arithmetic type; training
/// runs in float, gradient checks in double.
template <typename T>
class QuantileNetwork {
 public:
  using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;
  using WeightMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using BiasMap = Eigen::Map<const Vector>;
  /// Aligned so the vector kernels see the same layout in every instance,
  /// which keeps results bit-identical across runs.
  using Parameters = std::vector<T, Eigen::aligned_allocator<T>>;

  struct Options {
    std::vector<int> hidden{128, 128, 128};
    double learning_rate = 2.5e-4;
    double kappa = 1.0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    /// Zero output layer, so every quantile starts at 0.
    bool zero_output = true;
  };

  QuantileNetwork() = default;
  QuantileNetwork(int input_dim, int actions, int quantiles, const Options& options,
                  std::uint64_t seed);

  int input_dim() const { return dims_.front(); }
  int actions() const { return actions_; }
  int quantiles() const { return quantiles_; }
  const std::vector<int>& layer_dims() const { return dims_; }
  const Options& options() const { return options_; }

  /// Features are columns. Returns (A * N) x batch; action a owns rows
  /// [a N, (a + 1) N).
  Matrix forward(const Matrix& features) const;
  /// One sample; row-major A x N.
  std::vector<double> forward(std::span<const double> features) const;

  /// Mean over the batch of sum_i (1/N) sum_j rho_{tau_i}(target_j - theta_i)
  /// for the chosen action's quantiles; `targets` is N' x batch. Fills the
  /// gradient (same layout as parameters()) when `gradient` is non-null.
  double loss(const Matrix& features, std::span<const int> actions, const Matrix& targets,
              Parameters* gradient) const;

  /// One Adam step; returns the loss before the update. Throws NumericError
  /// if the loss or any parameter becomes non-finite.
  double train_step(const Matrix& features, std::span<const int> actions, const Matrix& targets);

  std::size_t parameter_count() const;
  /// Per layer: weights row-major (out x in), then biases.
  std::vector<double> parameters() const;
  void set_parameters(std::span<const double> values);

  /// Copies parameters only; optimizer state stays with the source.
  void copy_parameters_from(const QuantileNetwork& other);

 private:
  WeightMap weight(std::size_t layer) const;
  BiasMap bias(std::size_t layer) const;
  /// Activations of the input and of every hidden layer after the ReLU.
  std::vector<Matrix> hidden_forward(const Matrix& features) const;

  std::vector<int> dims_;
  int actions_ = 0;
  int quantiles_ = 0;
  Options options_;
  Parameters params_;
  std::vector<std::size_t> offsets_;  // start of each layer's weights
  Parameters adam_m_;
  Parameters adam_v_;
  std::int64_t adam_t_ = 0;
};

extern template class QuantileNetwork<float>;
extern template class QuantileNetwork<double>;

/// On-disk network plus the h reference quantiles and weights.
struct Checkpoint {
  std::vector<int> layers;
  int quantiles = 0;
  int actions = 0;
  std::vector<double> parameters;
  std::vector<double> ref_quantiles;
  std::vector<double> quantile_weights;
};

/// Throws std::runtime_error on I/O failure or a malformed file.
void write_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::string& path);

/// Quantile rows for (cell, t, s-bin, action), created as all-zero on first
/// access. s-bins partition [s_min, s_max] uniformly.
class TabularQuantiles {
 public:
  TabularQuantiles(int actions, int quantiles, double s_min, double s_max, int s_bins);

  int actions() const { return actions_; }
  int quantiles() const { return quantiles_; }
  int s_bin(double s) const;

  std::vector<double> row(int cell, int t, double s, int action) const;
  /// Row-major A x N block for one state.
  std::vector<double> state_rows(int cell, int t, double s) const;
  void set(int cell, int t, double s, int action, std::vector<double> theta);
  /// theta <- (1 - lr) theta + lr * Pi_Q(target).
  void update(int cell, int t, double s, int action, const DiscreteDistribution& target, double lr);

  std::size_t size() const { return table_.size(); }

 private:
  std::uint64_t key(int cell, int t, double s) const;

  int actions_;
  int quantiles_;
  double s_min_;
  double s_max_;
  int s_bins_;
  std::vector<double> zeros_;
  std::unordered_map<std::uint64_t, std::vector<double>> table_;
};

}  // namespace qrsrm
