#include "qrsrm/policy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "qrsrm/text.hpp"

namespace qrsrm {

namespace {

double parse_alpha(std::string_view text) {
  const double a = parse_number(text);
  if (!(a > 0.0 && a <= 1.0))
    throw std::invalid_argument("alpha must lie in (0, 1], got '" + std::string(text) + "'");
  return a;
}

std::span<const double> row_of(std::span<const double> quantiles, int actions, int a) {
  const std::size_t n = quantiles.size() / static_cast<std::size_t>(actions);
  return quantiles.subspan(static_cast<std::size_t>(a) * n, n);
}

void check_block(std::span<const double> quantiles, int actions) {
  if (actions < 1 || quantiles.empty() || quantiles.size() % static_cast<std::size_t>(actions) != 0)
    throw std::invalid_argument("quantile block does not split into the action count");
}

}  // namespace

Algorithm Algorithm::parse(std::string_view text) {
  text = trim(text);
  Algorithm out;
  if (text == "qrdqn") return out;
  const auto colon = text.find(':');
  const std::string_view kind = text.substr(0, colon);
  const std::string_view rest = colon == std::string_view::npos ? std::string_view{} : text.substr(colon + 1);
  if (kind == "qrsrm") {
    out.kind = AlgorithmKind::QrSrm;
    out.spectrum = RiskSpectrum::parse(rest);
  } else if (kind == "qrcvar") {
    out.kind = AlgorithmKind::QrCvar;
    out.alpha = parse_alpha(rest);
    out.spectrum = RiskSpectrum::cvar(out.alpha);
  } else if (kind == "qricvar") {
    out.kind = AlgorithmKind::QrIcvar;
    out.alpha = parse_alpha(rest);
    out.spectrum = RiskSpectrum::cvar(out.alpha);
  } else {
    throw std::invalid_argument("unknown algorithm '" + std::string(text) + "'");
  }
  return out;
}

std::string Algorithm::to_string() const {
  switch (kind) {
    case AlgorithmKind::QrSrm:
      return "qrsrm:" + spectrum.to_string();
    case AlgorithmKind::QrDqn:
      return "qrdqn";
    case AlgorithmKind::QrCvar:
      return "qrcvar:" + format_number(alpha);
    case AlgorithmKind::QrIcvar:
      return "qricvar:" + format_number(alpha);
  }
  return {};
}

std::string Algorithm::model_name() const {
  switch (kind) {
    case AlgorithmKind::QrSrm:
      return "qrsrm";
    case AlgorithmKind::QrDqn:
      return "qrdqn";
    case AlgorithmKind::QrCvar:
      return "qrcvar";
    case AlgorithmKind::QrIcvar:
      return "qricvar";
  }
  return {};
}

std::string Algorithm::spectrum_name() const {
  return kind == AlgorithmKind::QrDqn ? "mean" : spectrum.to_string();
}

HingeSum::HingeSum(const HFunction& h) {
  if (!std::is_sorted(h.ref_quantiles.begin(), h.ref_quantiles.end()))
    throw std::invalid_argument("h reference quantiles must be sorted");
  // Zero-weight terms never contribute; CVaR spectra keep a single one.
  std::vector<double> weights;
  for (std::size_t i = 0; i < h.size(); ++i) {
    if (h.quantile_weights[i] == 0.0) continue;
    ref_.push_back(h.ref_quantiles[i]);
    weights.push_back(h.quantile_weights[i]);
  }
  const std::size_t n = ref_.size();
  weight_suffix_.assign(n + 1, 0.0);
  moment_suffix_.assign(n + 1, 0.0);
  for (std::size_t i = n; i-- > 0;) {
    weight_suffix_[i] = weight_suffix_[i + 1] + weights[i];
    moment_suffix_[i] = moment_suffix_[i + 1] + weights[i] * ref_[i];
  }
}

double HingeSum::operator()(double z) const {
  // Terms with ref_i > z are active.
  const auto k = static_cast<std::size_t>(std::upper_bound(ref_.begin(), ref_.end(), z) - ref_.begin());
  return z * weight_suffix_[k] - moment_suffix_[k];
}

int argmax(std::span<const double> values) {
  int best = 0;
  for (std::size_t a = 1; a < values.size(); ++a)
    if (values[a] > values[static_cast<std::size_t>(best)]) best = static_cast<int>(a);
  return best;
}

std::vector<double> srm_action_values(const HingeSum& hinge, std::span<const double> quantiles,
                                      int actions, double s, double c) {
  check_block(quantiles, actions);
  std::vector<double> q(static_cast<std::size_t>(actions));
  for (int a = 0; a < actions; ++a) {
    const auto row = row_of(quantiles, actions, a);
    double v = 0.0;
    for (double theta : row) v += hinge(s + c * theta);
    q[static_cast<std::size_t>(a)] = v / static_cast<double>(row.size());
  }
  return q;
}

int greedy_action(const HingeSum& hinge, std::span<const double> quantiles, int actions, double s, double c) {
  return argmax(srm_action_values(hinge, quantiles, actions, s, c));
}

int greedy_action(const HFunction& h, std::span<const double> quantiles, int actions, double s, double c) {
  return greedy_action(HingeSum(h), quantiles, actions, s, c);
}

int qr_dqn_action(std::span<const double> quantiles, int actions) {
  check_block(quantiles, actions);
  std::vector<double> q(static_cast<std::size_t>(actions));
  for (int a = 0; a < actions; ++a) {
    const auto row = row_of(quantiles, actions, a);
    double sum = 0.0;
    for (double v : row) sum += v;
    q[static_cast<std::size_t>(a)] = sum / static_cast<double>(row.size());
  }
  return argmax(q);
}

int qr_cvar_action(std::span<const double> quantiles, int actions, double b) {
  check_block(quantiles, actions);
  std::vector<double> q(static_cast<std::size_t>(actions));
  for (int a = 0; a < actions; ++a) {
    double sum = 0.0;
    for (double v : row_of(quantiles, actions, a)) sum += std::min(v - b, 0.0);
    q[static_cast<std::size_t>(a)] = sum;
  }
  return argmax(q);
}

double empirical_cvar(std::span<const double> row, double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw std::domain_error("CVaR level must lie in (0, 1]");
  std::vector<double> sorted(row.begin(), row.end());
  std::sort(sorted.begin(), sorted.end());
  const double mass = alpha * static_cast<double>(sorted.size());
  double remaining = mass;
  double sum = 0.0;
  for (double v : sorted) {
    if (remaining <= 0.0) break;
    const double take = std::min(1.0, remaining);
    sum += take * v;
    remaining -= take;
  }
  return sum / mass;
}

int qr_icvar_action(std::span<const double> quantiles, int actions, double alpha) {
  check_block(quantiles, actions);
  std::vector<double> q(static_cast<std::size_t>(actions));
  for (int a = 0; a < actions; ++a) q[static_cast<std::size_t>(a)] = empirical_cvar(row_of(quantiles, actions, a), alpha);
  return argmax(q);
}

std::vector<double> td_targets(std::span<const double> next_row, double reward, double gamma, bool terminal) {
  std::vector<double> out(next_row.size(), reward);
  if (!terminal)
    for (std::size_t j = 0; j < next_row.size(); ++j) out[j] = reward + gamma * next_row[j];
  return out;
}

int best_srm_row(const RiskSpectrum& spectrum, std::span<const double> quantiles, int actions) {
  check_block(quantiles, actions);
  std::vector<double> v(static_cast<std::size_t>(actions));
  for (int a = 0; a < actions; ++a) v[static_cast<std::size_t>(a)] = srm_value(spectrum, row_of(quantiles, actions, a));
  return argmax(v);
}

int select_action(const Algorithm& algorithm, const HingeSum* hinge, std::span<const double> rows, int actions,
                  double s, double c, double b) {
  switch (algorithm.kind) {
    case AlgorithmKind::QrSrm:
      return greedy_action(*hinge, rows, actions, s, c);
    case AlgorithmKind::QrDqn:
      return qr_dqn_action(rows, actions);
    case AlgorithmKind::QrCvar:
      return qr_cvar_action(rows, actions, b);
    case AlgorithmKind::QrIcvar:
      return qr_icvar_action(rows, actions, algorithm.alpha);
  }
  return 0;
}

}  // namespace qrsrm
