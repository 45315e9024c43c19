#include "qrsrm/approximator.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include "qrsrm/text.hpp"

namespace qrsrm {

HuberValue quantile_huber(double u, double tau, double kappa) {
  const double weight = u < 0.0 ? 1.0 - tau : tau;
  const double a = std::abs(u);
  if (a <= kappa) return {weight * 0.5 * u * u, weight * u};
  return {weight * kappa * (a - 0.5 * kappa), weight * kappa * (u < 0.0 ? -1.0 : 1.0)};
}

// ------------------------------------------------------------------ network

template <typename T>
QuantileNetwork<T>::QuantileNetwork(int input_dim, int actions, int quantiles,
                                    const Options& options, std::uint64_t seed)
    : actions_(actions), quantiles_(quantiles), options_(options) {
  if (input_dim < 1 || actions < 1 || quantiles < 1)
    throw std::invalid_argument("network dimensions must be positive");
  dims_.push_back(input_dim);
  for (int h : options.hidden) {
    if (h < 1) throw std::invalid_argument("hidden layer width must be positive");
    dims_.push_back(h);
  }
  dims_.push_back(actions * quantiles);

  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
    offsets_.push_back(total);
    total += static_cast<std::size_t>(dims_[l + 1]) * (dims_[l] + 1);
  }
  params_.assign(total, T(0));
  adam_m_.assign(total, T(0));
  adam_v_.assign(total, T(0));

  std::mt19937_64 rng(seed);
  const std::size_t layers = dims_.size() - 1;
  for (std::size_t l = 0; l < layers; ++l) {
    if (l + 1 == layers && options.zero_output) break;
    const double bound = 1.0 / std::sqrt(static_cast<double>(dims_[l]));
    std::uniform_real_distribution<double> u(-bound, bound);
    const std::size_t count = static_cast<std::size_t>(dims_[l + 1]) * (dims_[l] + 1);
    for (std::size_t k = 0; k < count; ++k) params_[offsets_[l] + k] = static_cast<T>(u(rng));
  }
}

template <typename T>
typename QuantileNetwork<T>::WeightMap QuantileNetwork<T>::weight(std::size_t layer) const {
  return WeightMap(params_.data() + offsets_[layer], dims_[layer + 1], dims_[layer]);
}

template <typename T>
typename QuantileNetwork<T>::BiasMap QuantileNetwork<T>::bias(std::size_t layer) const {
  return BiasMap(params_.data() + offsets_[layer] +
                     static_cast<std::size_t>(dims_[layer + 1]) * dims_[layer],
                 dims_[layer + 1]);
}

template <typename T>
std::vector<typename QuantileNetwork<T>::Matrix> QuantileNetwork<T>::hidden_forward(
    const Matrix& features) const {
  if (features.rows() != dims_.front())
    throw std::invalid_argument("feature size " + std::to_string(features.rows()) +
                                " does not match network input " + std::to_string(dims_.front()));
  std::vector<Matrix> acts;
  acts.reserve(dims_.size() - 1);
  acts.push_back(features);
  for (std::size_t l = 0; l + 2 < dims_.size(); ++l) {
    Matrix z = weight(l) * acts.back();
    z.colwise() += bias(l);
    acts.push_back(z.cwiseMax(T(0)));
  }
  return acts;
}

template <typename T>
typename QuantileNetwork<T>::Matrix QuantileNetwork<T>::forward(const Matrix& features) const {
  const auto acts = hidden_forward(features);
  const std::size_t last = dims_.size() - 2;
  Matrix out = weight(last) * acts.back();
  out.colwise() += bias(last);
  return out;
}

template <typename T>
std::vector<double> QuantileNetwork<T>::forward(std::span<const double> features) const {
  Matrix x(static_cast<Eigen::Index>(features.size()), 1);
  for (std::size_t i = 0; i < features.size(); ++i) x(static_cast<Eigen::Index>(i), 0) = static_cast<T>(features[i]);
  const Matrix out = forward(x);
  std::vector<double> rows(static_cast<std::size_t>(out.rows()));
  for (Eigen::Index i = 0; i < out.rows(); ++i) rows[static_cast<std::size_t>(i)] = out(i, 0);
  return rows;
}

template <typename T>
double QuantileNetwork<T>::loss(const Matrix& features, std::span<const int> actions,
                                const Matrix& targets, Parameters* gradient) const {
  const Eigen::Index batch = features.cols();
  if (batch == 0 || static_cast<Eigen::Index>(actions.size()) != batch || targets.cols() != batch)
    throw std::invalid_argument("batch sizes of features, actions and targets differ");
  const int n = quantiles_;
  const Eigen::Index nt = targets.rows();
  const std::size_t last = dims_.size() - 2;
  const auto acts = hidden_forward(features);
  const Matrix& h = acts.back();
  const auto w_last = weight(last);
  const auto b_last = bias(last);

  const double kappa = options_.kappa;
  const double inv_batch = 1.0 / static_cast<double>(batch);
  const double inv_targets = 1.0 / static_cast<double>(nt);
  if (gradient) gradient->assign(params_.size(), T(0));
  Matrix dh;
  if (gradient) dh.setZero(h.rows(), batch);

  std::vector<T> tau(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) tau[i] = static_cast<T>((2.0 * i + 1.0) / (2.0 * n));
  const T k = static_cast<T>(kappa);
  const T scale = static_cast<T>(inv_targets * inv_batch);

  // Samples grouped by action so each group's head is one matrix product.
  std::vector<std::vector<Eigen::Index>> groups(static_cast<std::size_t>(actions_));
  for (Eigen::Index b = 0; b < batch; ++b) {
    const int a = actions[static_cast<std::size_t>(b)];
    if (a < 0 || a >= actions_) throw std::out_of_range("action index out of range in batch");
    groups[static_cast<std::size_t>(a)].push_back(b);
  }

  const int in = dims_[last];
  double total = 0.0;
  for (int a = 0; a < actions_; ++a) {
    const auto& group = groups[static_cast<std::size_t>(a)];
    if (group.empty()) continue;
    const auto m = static_cast<Eigen::Index>(group.size());
    const Eigen::Index row0 = static_cast<Eigen::Index>(a) * n;
    Matrix ha(in, m);
    for (Eigen::Index c = 0; c < m; ++c) ha.col(c) = h.col(group[static_cast<std::size_t>(c)]);
    Matrix theta = w_last.middleRows(row0, n) * ha;
    theta.colwise() += b_last.segment(row0, n);
    Matrix g(n, m);
    for (Eigen::Index c = 0; c < m; ++c) {
      const T* target = targets.col(group[static_cast<std::size_t>(c)]).data();
      for (int i = 0; i < n; ++i) {
        const T th = theta(i, c);
        const T ti = tau[static_cast<std::size_t>(i)];
        T row_loss = 0;
        T row_grad = 0;
        // Branch-free: with m = min(|u|, k) the Huber loss is m (|u| - m / 2)
        // and its derivative is clamp(u, -k, k).
#pragma omp simd reduction(+ : row_loss, row_grad)
        for (Eigen::Index j = 0; j < nt; ++j) {
          const T u = target[j] - th;
          const T w = ti + static_cast<T>(u < T(0)) * (T(1) - T(2) * ti);
          const T mag = std::abs(u);
          const T mk = std::min(mag, k);
          row_loss += w * mk * (mag - T(0.5) * mk);
          row_grad += w * std::min(std::max(u, -k), k);
        }
        total += static_cast<double>(row_loss);
        g(i, c) = -row_grad * scale;
      }
    }
    if (gradient) {
      T* gw = gradient->data() + offsets_[last] + static_cast<std::size_t>(row0) * in;
      T* gb = gradient->data() + offsets_[last] + static_cast<std::size_t>(dims_[last + 1]) * in;
      Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(gw, n, in).noalias() =
          g * ha.transpose();
      Eigen::Map<Vector>(gb + row0, n) = g.rowwise().sum();
      const Matrix dha = w_last.middleRows(row0, n).transpose() * g;
      for (Eigen::Index c = 0; c < m; ++c) dh.col(group[static_cast<std::size_t>(c)]) = dha.col(c);
    }
  }
  const double mean_loss = total * inv_targets * inv_batch;
  if (!gradient) return mean_loss;

  for (std::size_t l = last; l-- > 0;) {
    const Matrix& out = acts[l + 1];
    const Matrix dz = dh.cwiseProduct((out.array() > T(0)).template cast<T>().matrix());
    const std::size_t rows = static_cast<std::size_t>(dims_[l + 1]);
    const std::size_t cols = static_cast<std::size_t>(dims_[l]);
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> gw(
        gradient->data() + offsets_[l], rows, cols);
    Eigen::Map<Vector> gb(gradient->data() + offsets_[l] + rows * cols, rows);
    gw.noalias() = dz * acts[l].transpose();
    gb = dz.rowwise().sum();
    if (l > 0) dh = weight(l).transpose() * dz;
  }
  return mean_loss;
}

template <typename T>
double QuantileNetwork<T>::train_step(const Matrix& features, std::span<const int> actions,
                                      const Matrix& targets) {
  Parameters grad;
  const double value = loss(features, actions, targets, &grad);
  if (!std::isfinite(value)) throw NumericError("non-finite training loss");

  ++adam_t_;
  const double b1 = options_.adam_beta1;
  const double b2 = options_.adam_beta2;
  const T step = static_cast<T>(options_.learning_rate * std::sqrt(1.0 - std::pow(b2, adam_t_)) /
                                (1.0 - std::pow(b1, adam_t_)));
  const T eps = static_cast<T>(options_.adam_epsilon);
  const T tb1 = static_cast<T>(b1), tb2 = static_cast<T>(b2);
  using Array = Eigen::Array<T, Eigen::Dynamic, 1>;
  const auto count = static_cast<Eigen::Index>(params_.size());
  Eigen::Map<Array> p(params_.data(), count), m(adam_m_.data(), count), v(adam_v_.data(), count);
  const Eigen::Map<const Array> gk(grad.data(), count);
  m = tb1 * m + (T(1) - tb1) * gk;
  v = tb2 * v + (T(1) - tb2) * gk.square();
  p -= step * m / (v.sqrt() + eps);
  const bool finite = p.allFinite();
  if (!finite) throw NumericError("network parameters became non-finite");
  return value;
}

template <typename T>
std::size_t QuantileNetwork<T>::parameter_count() const {
  return params_.size();
}

template <typename T>
std::vector<double> QuantileNetwork<T>::parameters() const {
  return std::vector<double>(params_.begin(), params_.end());
}

template <typename T>
void QuantileNetwork<T>::set_parameters(std::span<const double> values) {
  if (values.size() != params_.size())
    throw std::invalid_argument("expected " + std::to_string(params_.size()) + " parameters, got " +
                                std::to_string(values.size()));
  for (std::size_t k = 0; k < values.size(); ++k) params_[k] = static_cast<T>(values[k]);
}

template <typename T>
void QuantileNetwork<T>::copy_parameters_from(const QuantileNetwork& other) {
  if (other.dims_ != dims_) throw std::invalid_argument("network shapes differ");
  params_ = other.params_;
}

template class QuantileNetwork<float>;
template class QuantileNetwork<double>;

// --------------------------------------------------------------- checkpoint

namespace {

constexpr char kMagic[] = "QRSRM1";

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

void write_u64(std::ostream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); }

void write_doubles(std::ostream& out, const std::vector<double>& v) {
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * 8));
}

std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), 8)) throw std::runtime_error("checkpoint truncated");
  return v;
}

std::vector<double> read_doubles(std::istream& in, std::uint64_t count) {
  if (count > (1ULL << 32)) throw std::runtime_error("checkpoint array length implausible");
  std::vector<double> v(count);
  if (!in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(count * 8)))
    throw std::runtime_error("checkpoint truncated");
  return v;
}

}  // namespace

void write_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint '" + path + "'");
  out.write(kMagic, 6);
  std::string dims;
  for (std::size_t i = 0; i < ckpt.layers.size(); ++i) {
    if (i > 0) dims += ',';
    dims += std::to_string(ckpt.layers[i]);
  }
  out << "layers=" << dims << ";N=" << ckpt.quantiles << ";A=" << ckpt.actions << '\n';
  write_doubles(out, ckpt.parameters);
  write_u64(out, ckpt.ref_quantiles.size());
  write_doubles(out, ckpt.ref_quantiles);
  write_u64(out, ckpt.quantile_weights.size());
  write_doubles(out, ckpt.quantile_weights);
  if (!out) throw std::runtime_error("failed writing checkpoint '" + path + "'");
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path + "'");
  char magic[6];
  if (!in.read(magic, 6) || std::memcmp(magic, kMagic, 6) != 0)
    throw std::runtime_error("'" + path + "' is not a checkpoint");
  std::string header;
  if (!std::getline(in, header)) throw std::runtime_error("checkpoint header missing");

  Checkpoint ckpt;
  bool have_layers = false, have_n = false, have_a = false;
  try {
    for (auto field : split(header, ';')) {
      const auto eq = field.find('=');
      if (eq == std::string_view::npos) throw std::runtime_error("bad header field");
      const auto key = field.substr(0, eq);
      const auto value = field.substr(eq + 1);
      if (key == "layers") {
        for (auto d : split(value, ',')) ckpt.layers.push_back(static_cast<int>(parse_integer(d)));
        have_layers = true;
      } else if (key == "N") {
        ckpt.quantiles = static_cast<int>(parse_integer(value));
        have_n = true;
      } else if (key == "A") {
        ckpt.actions = static_cast<int>(parse_integer(value));
        have_a = true;
      }
    }
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string("checkpoint header: ") + e.what());
  }
  if (!have_layers || !have_n || !have_a || ckpt.layers.size() < 2)
    throw std::runtime_error("checkpoint header incomplete: '" + header + "'");
  if (ckpt.layers.back() != ckpt.quantiles * ckpt.actions)
    throw std::runtime_error("checkpoint output layer does not match N x A");

  std::uint64_t count = 0;
  for (std::size_t l = 0; l + 1 < ckpt.layers.size(); ++l)
    count += static_cast<std::uint64_t>(ckpt.layers[l + 1]) * (ckpt.layers[l] + 1);
  ckpt.parameters = read_doubles(in, count);
  ckpt.ref_quantiles = read_doubles(in, read_u64(in));
  ckpt.quantile_weights = read_doubles(in, read_u64(in));
  if (in.peek() != std::char_traits<char>::eof())
    throw std::runtime_error("trailing bytes after checkpoint");
  return ckpt;
}

// ------------------------------------------------------------------ tabular

TabularQuantiles::TabularQuantiles(int actions, int quantiles, double s_min, double s_max, int s_bins)
    : actions_(actions),
      quantiles_(quantiles),
      s_min_(s_min),
      s_max_(s_max),
      s_bins_(s_bins),
      zeros_(static_cast<std::size_t>(quantiles), 0.0) {
  if (actions < 1 || quantiles < 1 || s_bins < 1 || !(s_max > s_min))
    throw std::invalid_argument("invalid tabular dimensions");
}

int TabularQuantiles::s_bin(double s) const {
  const double u = (s - s_min_) / (s_max_ - s_min_);
  return std::clamp(static_cast<int>(std::floor(u * s_bins_)), 0, s_bins_ - 1);
}

std::uint64_t TabularQuantiles::key(int cell, int t, double s) const {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(cell)) << 44) ^
         (static_cast<std::uint64_t>(static_cast<std::uint32_t>(t)) << 28) ^
         static_cast<std::uint64_t>(s_bin(s));
}

std::vector<double> TabularQuantiles::row(int cell, int t, double s, int action) const {
  const auto it = table_.find(key(cell, t, s));
  if (it == table_.end()) return zeros_;
  return std::vector<double>(it->second.begin() + static_cast<std::ptrdiff_t>(action) * quantiles_,
                             it->second.begin() + static_cast<std::ptrdiff_t>(action + 1) * quantiles_);
}

std::vector<double> TabularQuantiles::state_rows(int cell, int t, double s) const {
  const auto it = table_.find(key(cell, t, s));
  if (it == table_.end()) return std::vector<double>(static_cast<std::size_t>(actions_) * quantiles_, 0.0);
  return it->second;
}

void TabularQuantiles::set(int cell, int t, double s, int action, std::vector<double> theta) {
  if (static_cast<int>(theta.size()) != quantiles_)
    throw std::invalid_argument("tabular row has the wrong length");
  auto& block = table_[key(cell, t, s)];
  if (block.empty()) block.assign(static_cast<std::size_t>(actions_) * quantiles_, 0.0);
  std::copy(theta.begin(), theta.end(), block.begin() + static_cast<std::ptrdiff_t>(action) * quantiles_);
}

void TabularQuantiles::update(int cell, int t, double s, int action,
                              const DiscreteDistribution& target, double lr) {
  const auto projected = quantile_project(target, static_cast<std::size_t>(quantiles_));
  std::vector<double> theta = state_rows(cell, t, s);
  std::vector<double> row(theta.begin() + static_cast<std::ptrdiff_t>(action) * quantiles_,
                          theta.begin() + static_cast<std::ptrdiff_t>(action + 1) * quantiles_);
  for (int i = 0; i < quantiles_; ++i) row[i] = lr == 1.0 ? projected[i] : (1.0 - lr) * row[i] + lr * projected[i];
  set(cell, t, s, action, std::move(row));
}

}  // namespace qrsrm
