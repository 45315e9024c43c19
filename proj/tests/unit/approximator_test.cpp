#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "qrsrm/approximator.hpp"

using namespace qrsrm;

namespace {

using NetD = QuantileNetwork<double>;
using NetF = QuantileNetwork<float>;

NetD::Options tiny_options() {
  NetD::Options o;
  o.hidden = {6, 5, 4};
  o.zero_output = false;
  return o;
}

struct Batch {
  NetD::Matrix x;
  std::vector<int> actions;
  NetD::Matrix targets;
};

Batch random_batch(std::mt19937_64& rng, int in, int actions, int n, int batch) {
  std::normal_distribution<double> z;
  Batch b;
  b.x.resize(in, batch);
  b.targets.resize(n, batch);
  for (int j = 0; j < batch; ++j) {
    for (int i = 0; i < in; ++i) b.x(i, j) = z(rng);
    for (int i = 0; i < n; ++i) b.targets(i, j) = 2.0 * z(rng);
    b.actions.push_back(static_cast<int>(rng() % actions));
  }
  return b;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("qrsrm_" + std::to_string(::getpid()) + "_" + name);
}

}  // namespace

TEST(QuantileHuber, Examples) {
  for (double tau : {0.1, 0.5, 0.9}) {
    const auto v = quantile_huber(0.0, tau, 1.0);
    EXPECT_EQ(v.loss, 0.0);
    EXPECT_EQ(v.derivative, 0.0);
  }
  const auto a = quantile_huber(0.5, 0.5, 1.0);
  EXPECT_DOUBLE_EQ(a.loss, 0.0625);
  EXPECT_DOUBLE_EQ(a.derivative, 0.25);
  const auto b = quantile_huber(-2.0, 0.25, 1.0);
  EXPECT_DOUBLE_EQ(b.loss, 0.75 * 1.5);
  EXPECT_DOUBLE_EQ(b.derivative, -0.75);
}

TEST(QuantileHuber, DerivativeMatchesFiniteDifference) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-4, 4), t(0.01, 0.99), k(0.1, 2.0);
  for (int i = 0; i < 1000; ++i) {
    const double x = u(rng), tau = t(rng), kappa = k(rng);
    const double h = 1e-6;
    const double fd = (quantile_huber(x + h, tau, kappa).loss - quantile_huber(x - h, tau, kappa).loss) / (2 * h);
    EXPECT_NEAR(quantile_huber(x, tau, kappa).derivative, fd, 1e-6);
    EXPECT_GE(quantile_huber(x, tau, kappa).loss, 0.0);
  }
}

TEST(QuantileNetwork, ZeroOutputLayerGivesZeroQuantiles) {
  NetF net(5, 3, 4, NetF::Options{}, 7);
  EXPECT_EQ(net.layer_dims(), (std::vector<int>{5, 128, 128, 128, 12}));
  std::vector<double> x{0.1, -0.3, 1.0, 0.0, 2.0};
  const auto out = net.forward(x);
  ASSERT_EQ(out.size(), 12u);
  for (double v : out) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(net.forward(x), out);
}

TEST(QuantileNetwork, SeedDeterminesInitialization) {
  NetD a(4, 2, 3, tiny_options(), 11), b(4, 2, 3, tiny_options(), 11), c(4, 2, 3, tiny_options(), 12);
  EXPECT_EQ(a.parameters(), b.parameters());
  EXPECT_NE(a.parameters(), c.parameters());
}

TEST(QuantileNetwork, OutputContinuousInWeights) {
  NetD net(4, 2, 3, tiny_options(), 5);
  const std::vector<double> x{0.5, -1.0, 0.25, 2.0};
  const auto base = net.forward(x);
  auto p = net.parameters();
  for (double eps : {1e-3, 1e-5, 1e-7}) {
    auto q = p;
    q[0] += eps;
    net.set_parameters(q);
    const auto moved = net.forward(x);
    double diff = 0.0;
    for (std::size_t i = 0; i < base.size(); ++i) diff = std::max(diff, std::abs(moved[i] - base[i]));
    EXPECT_LE(diff, 10.0 * eps);
  }
}

TEST(QuantileNetwork, ForwardMatchesBatchedForward) {
  NetD net(4, 3, 2, tiny_options(), 2);
  std::mt19937_64 rng(3);
  const auto b = random_batch(rng, 4, 3, 2, 7);
  const auto batched = net.forward(b.x);
  for (int j = 0; j < 7; ++j) {
    std::vector<double> x(4);
    for (int i = 0; i < 4; ++i) x[i] = b.x(i, j);
    const auto single = net.forward(x);
    for (int k = 0; k < 6; ++k) EXPECT_NEAR(single[k], batched(k, j), 1e-14);
  }
}

TEST(QuantileNetwork, LossMatchesDirectFormula) {
  NetD net(3, 2, 4, tiny_options(), 9);
  std::mt19937_64 rng(4);
  const auto b = random_batch(rng, 3, 2, 4, 5);
  const auto out = net.forward(b.x);
  double want = 0.0;
  for (int s = 0; s < 5; ++s)
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j)
        want += quantile_huber(b.targets(j, s) - out(b.actions[s] * 4 + i, s), (2.0 * i + 1) / 8.0, 1.0).loss;
  want /= 5.0 * 4.0;
  EXPECT_NEAR(net.loss(b.x, b.actions, b.targets, nullptr), want, 1e-12);
}

TEST(QuantileNetwork, GradientMatchesCentralDifferences) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 5; ++trial) {
    NetD net(3, 2, 4, tiny_options(), 100 + trial);
    const auto b = random_batch(rng, 3, 2, 4, 6);
    NetD::Parameters grad;
    net.loss(b.x, b.actions, b.targets, &grad);
    auto p = net.parameters();
    double worst = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double h = 1e-5;
      const double keep = p[k];
      p[k] = keep + h;
      net.set_parameters(p);
      const double up = net.loss(b.x, b.actions, b.targets, nullptr);
      p[k] = keep - h;
      net.set_parameters(p);
      const double down = net.loss(b.x, b.actions, b.targets, nullptr);
      p[k] = keep;
      const double fd = (up - down) / (2 * h);
      worst = std::max(worst, std::abs(fd - grad[k]) / std::max({std::abs(fd), std::abs(grad[k]), 1e-8}));
    }
    net.set_parameters(p);
    EXPECT_LE(worst, 1e-4) << "trial " << trial;
  }
}

TEST(QuantileNetwork, FixedPointLeavesParametersAlone) {
  NetF net(3, 2, 4, NetF::Options{}, 1);
  const auto before = net.parameters();
  NetF::Matrix x = NetF::Matrix::Random(3, 8);
  NetF::Matrix targets = NetF::Matrix::Zero(4, 8);
  std::vector<int> actions(8, 1);
  EXPECT_EQ(net.train_step(x, actions, targets), 0.0);
  EXPECT_EQ(net.parameters(), before);
}

TEST(QuantileNetwork, LearnsEmpiricalQuantilesOfFixedTargets) {
  NetD::Options o;
  o.hidden = {16};
  o.learning_rate = 2e-3;
  o.kappa = 0.01;  // small threshold: the Huber minimiser sits within kappa of the quantile
  NetD net(1, 1, 4, o, 3);
  // Ten targets; tau_hat = 1/8, 3/8, 5/8, 7/8 pick the 2nd, 4th, 7th and 9th.
  const std::vector<double> values{3.0, -1.0, 0.5, 2.0, 4.5, -2.0, 1.0, 6.0, 2.5, 0.0};
  const int batch = 32;
  NetD::Matrix x = NetD::Matrix::Ones(1, batch);
  NetD::Matrix targets(10, batch);
  for (int b = 0; b < batch; ++b)
    for (int j = 0; j < 10; ++j) targets(j, b) = values[j];
  std::vector<int> actions(batch, 0);
  for (int step = 0; step < 6000; ++step) net.train_step(x, actions, targets);
  const std::vector<double> x1{1.0};
  const auto theta = net.forward(x1);
  const std::vector<double> want{-1.0, 0.5, 2.5, 4.5};
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(theta[i], want[i], 1e-2) << i;
}

TEST(QuantileNetwork, TargetCopyMatches) {
  NetF online(4, 2, 3, NetF::Options{}, 1);
  NetF target = online;
  std::mt19937_64 rng(8);
  NetF::Matrix x = NetF::Matrix::Random(4, 16);
  NetF::Matrix t = NetF::Matrix::Random(3, 16);
  std::vector<int> a(16, 0);
  for (int k = 0; k < 5; ++k) online.train_step(x, a, t);
  EXPECT_NE(online.forward(x), target.forward(x));
  EXPECT_EQ(target.forward(x), NetF(4, 2, 3, NetF::Options{}, 1).forward(x));
  target.copy_parameters_from(online);
  EXPECT_EQ(online.forward(x), target.forward(x));
}

TEST(QuantileNetwork, RejectsNonFiniteLoss) {
  NetF net(2, 1, 2, NetF::Options{}, 1);
  NetF::Matrix x = NetF::Matrix::Ones(2, 1);
  NetF::Matrix t(2, 1);
  t << std::numeric_limits<float>::infinity(), 0.0f;
  std::vector<int> a{0};
  EXPECT_THROW(net.train_step(x, a, t), NumericError);
}

TEST(Checkpoint, BitExactRoundTrip) {
  NetF net(5, 3, 4, NetF::Options{}, 2);
  NetF::Matrix x = NetF::Matrix::Random(5, 16);
  NetF::Matrix t = NetF::Matrix::Random(4, 16);
  std::vector<int> a(16, 2);
  for (int k = 0; k < 3; ++k) net.train_step(x, a, t);

  Checkpoint ckpt{net.layer_dims(), 4, 3, net.parameters(), {0.5, 1.25, 3.0, 3.5}, {0, 0, 2, 0}};
  const auto path = temp_file("roundtrip.qrsrm");
  write_checkpoint(path.string(), ckpt);
  const auto back = read_checkpoint(path.string());
  EXPECT_EQ(back.layers, ckpt.layers);
  EXPECT_EQ(back.quantiles, 4);
  EXPECT_EQ(back.actions, 3);
  EXPECT_EQ(back.parameters, ckpt.parameters);
  EXPECT_EQ(back.ref_quantiles, ckpt.ref_quantiles);
  EXPECT_EQ(back.quantile_weights, ckpt.quantile_weights);

  NetF copy(5, 3, 4, NetF::Options{}, 99);
  copy.set_parameters(back.parameters);
  EXPECT_EQ(copy.forward(x), net.forward(x));

  std::ifstream in(path, std::ios::binary);
  std::string head(6, '\0');
  in.read(head.data(), 6);
  EXPECT_EQ(head, "QRSRM1");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "layers=5,128,128,128,12;N=4;A=3");
  std::filesystem::remove(path);
}

TEST(Checkpoint, RejectsCorruptFiles) {
  const auto path = temp_file("bad.qrsrm");
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOTQRS";
  }
  EXPECT_THROW(read_checkpoint(path.string()), std::runtime_error);
  {
    std::ofstream out(path, std::ios::binary);
    out << "QRSRM1layers=2,3;N=1;A=3\n";
    out.write("\0\0\0\0", 4);
  }
  EXPECT_THROW(read_checkpoint(path.string()), std::runtime_error);
  EXPECT_THROW(read_checkpoint("/nonexistent/x.qrsrm"), std::runtime_error);
  std::filesystem::remove(path);
}

TEST(TabularQuantiles, DefaultsToZeroAndBlends) {
  TabularQuantiles table(2, 4, -10.0, 10.0, 20);
  EXPECT_EQ(table.row(3, 1, 0.0, 1), (std::vector<double>(4, 0.0)));
  EXPECT_EQ(table.s_bin(-10.0), 0);
  EXPECT_EQ(table.s_bin(9.99), 19);
  EXPECT_EQ(table.s_bin(100.0), 19);
  EXPECT_EQ(table.s_bin(0.4), table.s_bin(0.6));
  EXPECT_NE(table.s_bin(0.9), table.s_bin(1.1));

  const DiscreteDistribution target({{0, 0.25}, {4, 0.5}, {8, 0.25}});
  table.update(3, 1, 0.0, 1, target, 1.0);
  EXPECT_EQ(table.row(3, 1, 0.0, 1), (std::vector<double>{0, 4, 4, 8}));
  EXPECT_EQ(table.row(3, 1, 0.0, 0), (std::vector<double>(4, 0.0)));
  table.update(3, 1, 0.0, 1, DiscreteDistribution::point(0.0), 0.5);
  EXPECT_EQ(table.row(3, 1, 0.0, 1), (std::vector<double>{0, 2, 2, 4}));
  const auto rows = table.state_rows(3, 1, 0.0);
  EXPECT_EQ(rows.size(), 8u);
  EXPECT_EQ(rows[5], 2.0);
}
