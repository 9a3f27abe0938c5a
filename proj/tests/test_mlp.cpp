// Tests for the dense-network building block: forward examples computed by
// hand, gradients checked against central finite differences, optimizer
// behavior, and serialization round-trips.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "stagerl/mlp.hpp"

using namespace stagerl;

namespace {

// Scalar probe loss L = sum_ij c_ij * y_ij for a fixed coefficient matrix c,
// so dL/dy = c and finite differences of L exercise the full backward pass.
double probe_loss(const Mlp& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& c) {
  return (net.forward(x).cwiseProduct(c)).sum();
}

// Max relative error with an absolute floor, so tiny true values don't blow
// up the ratio.
double rel_err(double got, double want) {
  return std::abs(got - want) / std::max({std::abs(got), std::abs(want), 1e-6});
}

// A net and input whose hidden pre-activations stay well away from zero, so
// finite-difference probes never cross a ReLU kink.
struct FdSetup {
  Mlp net;
  Eigen::MatrixXd x;
  Eigen::MatrixXd c;
};

FdSetup make_fd_setup(unsigned long seed, const std::vector<int>& sizes, int batch) {
  Rng rng(seed);
  FdSetup s;
  for (int attempt = 0; attempt < 50; ++attempt) {
    s.net = Mlp::random(sizes, rng);
    s.x = Eigen::MatrixXd::NullaryExpr(sizes.front(), batch,
                                       [&] { return rng.uniform(-1.0, 1.0); });
    s.c = Eigen::MatrixXd::NullaryExpr(sizes.back(), batch,
                                       [&] { return rng.uniform(-1.0, 1.0); });
    // Check kink distance at every hidden unit.
    bool safe = true;
    Eigen::MatrixXd a = s.x;
    for (std::size_t l = 0; l + 1 < s.net.weights.size(); ++l) {
      Eigen::MatrixXd z = (s.net.weights[l] * a).colwise() + s.net.biases[l];
      if (z.cwiseAbs().minCoeff() < 1e-3) {
        safe = false;
        break;
      }
      a = z.cwiseMax(0.0);
    }
    if (safe) return s;
  }
  FAIL("could not find a kink-free finite-difference setup");
  return s;
}

}  // namespace

TEST_CASE("zero network maps everything to zero") {
  Mlp net = Mlp::zeros({3, 5, 2});
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(3, 4);
  REQUIRE(net.forward(x).isZero(0.0));
  REQUIRE(net.layer_sizes() == std::vector<int>{3, 5, 2});
}

TEST_CASE("forward pass matches a hand computation") {
  // 2 -> 2 -> 1, weights chosen so one hidden unit is clipped by the ReLU.
  Mlp net = Mlp::zeros({2, 2, 1});
  net.weights[0] << 1.0, 0.0, 0.0, -1.0;
  net.biases[0] << 0.5, 0.5;
  net.weights[1] << 2.0, 3.0;
  net.biases[1] << -1.0;
  Eigen::VectorXd x(2);
  x << 1.0, 2.0;
  // hidden z = (1.5, -1.5) -> relu (1.5, 0); out = 2*1.5 + 3*0 - 1 = 2
  Eigen::VectorXd y = net.forward1(x);
  REQUIRE(y.size() == 1);
  REQUIRE(y[0] == Catch::Approx(2.0).margin(1e-15));
}

TEST_CASE("batched forward agrees with per-column forward") {
  Rng rng(11);
  Mlp net = Mlp::random({4, 8, 8, 3}, rng);
  Eigen::MatrixXd x =
      Eigen::MatrixXd::NullaryExpr(4, 7, [&] { return rng.uniform(-2.0, 2.0); });
  Eigen::MatrixXd y = net.forward(x);
  for (int k = 0; k < x.cols(); ++k) {
    Eigen::VectorXd yk = net.forward1(x.col(k));
    // Matrix-matrix and matrix-vector products may use different SIMD
    // kernels with different rounding, so agreement is to rounding error,
    // not bitwise; each path on its own is deterministic.
    REQUIRE((y.col(k) - yk).cwiseAbs().maxCoeff() < 1e-13);
  }
}

TEST_CASE("parameter gradients match central finite differences") {
  auto s = make_fd_setup(042, {3, 6, 5, 2}, 4);
  MlpCache cache;
  Eigen::MatrixXd y = s.net.forward(s.x, &cache);
  MlpGrads g = backward(s.net, cache, s.c);
  const double h = 1e-5;

  for (std::size_t l = 0; l < s.net.weights.size(); ++l) {
    for (Eigen::Index i = 0; i < s.net.weights[l].rows(); ++i) {
      for (Eigen::Index j = 0; j < s.net.weights[l].cols(); ++j) {
        Mlp plus = s.net, minus = s.net;
        plus.weights[l](i, j) += h;
        minus.weights[l](i, j) -= h;
        const double fd = (probe_loss(plus, s.x, s.c) - probe_loss(minus, s.x, s.c)) / (2 * h);
        INFO("weight layer " << l << " (" << i << "," << j << ")");
        REQUIRE(rel_err(g.dweights[l](i, j), fd) < 1e-3);
      }
    }
    for (Eigen::Index i = 0; i < s.net.biases[l].size(); ++i) {
      Mlp plus = s.net, minus = s.net;
      plus.biases[l][i] += h;
      minus.biases[l][i] -= h;
      const double fd = (probe_loss(plus, s.x, s.c) - probe_loss(minus, s.x, s.c)) / (2 * h);
      INFO("bias layer " << l << " [" << i << "]");
      REQUIRE(rel_err(g.dbiases[l][i], fd) < 1e-3);
    }
  }
}

TEST_CASE("input gradients match central finite differences") {
  auto s = make_fd_setup(7, {4, 8, 3}, 5);
  MlpCache cache;
  s.net.forward(s.x, &cache);
  MlpGrads g = backward(s.net, cache, s.c);
  const double h = 1e-5;
  for (Eigen::Index i = 0; i < s.x.rows(); ++i) {
    for (Eigen::Index j = 0; j < s.x.cols(); ++j) {
      Eigen::MatrixXd plus = s.x, minus = s.x;
      plus(i, j) += h;
      minus(i, j) -= h;
      const double fd =
          (probe_loss(s.net, plus, s.c) - probe_loss(s.net, minus, s.c)) / (2 * h);
      INFO("input (" << i << "," << j << ")");
      REQUIRE(rel_err(g.dinput(i, j), fd) < 1e-3);
    }
  }
}

TEST_CASE("random net matches an independent matrix-arithmetic evaluation") {
  Rng rng(17);
  Mlp net = Mlp::random({3, 5, 4, 2}, rng);
  Eigen::MatrixXd x =
      Eigen::MatrixXd::NullaryExpr(3, 6, [&] { return rng.uniform(-1.5, 1.5); });
  // Re-evaluate with plain per-sample loops, no shared code path.
  for (int k = 0; k < x.cols(); ++k) {
    Eigen::VectorXd a = x.col(k);
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
      Eigen::VectorXd z = net.biases[l];
      for (Eigen::Index i = 0; i < net.weights[l].rows(); ++i)
        for (Eigen::Index j = 0; j < net.weights[l].cols(); ++j)
          z[i] += net.weights[l](i, j) * a[j];
      if (l + 1 < net.weights.size())
        for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = std::max(z[i], 0.0);
      a = z;
    }
    Eigen::VectorXd got = net.forward1(x.col(k));
    REQUIRE((got - a).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("zero upstream gradient yields zero parameter gradients") {
  Rng rng(23);
  Mlp net = Mlp::random({3, 4, 2}, rng);
  MlpCache cache;
  Eigen::MatrixXd x =
      Eigen::MatrixXd::NullaryExpr(3, 3, [&] { return rng.uniform(-1.0, 1.0); });
  net.forward(x, &cache);
  MlpGrads g = backward(net, cache, Eigen::MatrixXd::Zero(2, 3));
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    REQUIRE(g.dweights[l].isZero(0.0));
    REQUIRE(g.dbiases[l].isZero(0.0));
  }
  REQUIRE(g.dinput.isZero(0.0));
}

TEST_CASE("single linear layer: weight gradient is the input") {
  Rng rng(29);
  Mlp net = Mlp::random({4, 2}, rng);  // no hidden layer, purely affine
  Eigen::VectorXd x(4);
  x << 0.3, -1.2, 2.5, 0.0;
  MlpCache cache;
  net.forward(x, &cache);
  for (int out = 0; out < 2; ++out) {
    Eigen::MatrixXd dy = Eigen::MatrixXd::Zero(2, 1);
    dy(out, 0) = 1.0;
    MlpGrads g = backward(net, cache, dy);
    for (int j = 0; j < 4; ++j) REQUIRE(g.dweights[0](out, j) == x[j]);
    REQUIRE(g.dweights[0].row(1 - out).isZero(0.0));
    REQUIRE(g.dbiases[0][out] == 1.0);
  }
}

TEST_CASE("relu blocks gradient through inactive units") {
  // Single hidden unit forced negative: every upstream gradient must die.
  Mlp net = Mlp::zeros({1, 1, 1});
  net.weights[0] << 1.0;
  net.biases[0] << -5.0;  // z = x - 5 < 0 for small x
  net.weights[1] << 3.0;
  MlpCache cache;
  Eigen::MatrixXd x(1, 1);
  x << 1.0;
  net.forward(x, &cache);
  Eigen::MatrixXd dy(1, 1);
  dy << 1.0;
  MlpGrads g = backward(net, cache, dy);
  REQUIRE(g.dweights[0](0, 0) == 0.0);
  REQUIRE(g.dbiases[0][0] == 0.0);
  REQUIRE(g.dinput(0, 0) == 0.0);
  // The last layer still sees its (zero) activation and live bias path.
  REQUIRE(g.dweights[1](0, 0) == 0.0);
  REQUIRE(g.dbiases[1][0] == 1.0);
}

TEST_CASE("backward demands a recorded forward pass") {
  Mlp net = Mlp::zeros({2, 3, 1});
  MlpCache cache;  // never populated
  Eigen::MatrixXd dy(1, 1);
  dy << 1.0;
  REQUIRE_THROWS_AS(backward(net, cache, dy), StateError);
}

TEST_CASE("random init respects fan-in bounds and final-layer scaling") {
  Rng rng(99);
  Mlp net = Mlp::random({8, 16, 6}, rng, 1e-2);
  const double k0 = 1.0 / std::sqrt(8.0);
  const double k1 = 1.0 / std::sqrt(16.0);
  REQUIRE(net.weights[0].cwiseAbs().maxCoeff() <= k0);
  REQUIRE(net.weights[0].cwiseAbs().maxCoeff() > 0.5 * k0);  // actually spread out
  REQUIRE(net.weights[1].cwiseAbs().maxCoeff() <= 1e-2 * k1);
  REQUIRE(net.biases[1].cwiseAbs().maxCoeff() <= 1e-2 * k1);
  // Same seed, same net.
  Rng rng2(99);
  Mlp net2 = Mlp::random({8, 16, 6}, rng2, 1e-2);
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    REQUIRE(net.weights[l] == net2.weights[l]);
    REQUIRE(net.biases[l] == net2.biases[l]);
  }
}

TEST_CASE("adam first step moves by about the learning rate") {
  // With bias correction, |step| -> lr * g/(|g| + eps') ~= lr at t=1.
  AdamConfig cfg;
  Mlp net = Mlp::zeros({1, 1});
  MlpGrads g;
  g.dweights = {Eigen::MatrixXd::Constant(1, 1, 123.0)};
  g.dbiases = {Eigen::VectorXd::Constant(1, -0.5)};
  MlpAdam opt = MlpAdam::zeros_like(net);
  opt.step(net, g, cfg);
  REQUIRE(net.weights[0](0, 0) == Catch::Approx(-cfg.lr).epsilon(1e-4));
  REQUIRE(net.biases[0][0] == Catch::Approx(cfg.lr).epsilon(1e-4));
}

TEST_CASE("adam drives a quadratic toward its minimum") {
  // Minimize (w - 3)^2 over a 1x1 "network" weight.
  AdamConfig cfg;
  cfg.lr = 0.05;
  Mlp net = Mlp::zeros({1, 1});
  MlpAdam opt = MlpAdam::zeros_like(net);
  for (int it = 0; it < 2000; ++it) {
    MlpGrads g;
    g.dweights = {Eigen::MatrixXd::Constant(1, 1, 2.0 * (net.weights[0](0, 0) - 3.0))};
    g.dbiases = {Eigen::VectorXd::Zero(1)};
    opt.step(net, g, cfg);
  }
  REQUIRE(net.weights[0](0, 0) == Catch::Approx(3.0).margin(1e-2));
}

TEST_CASE("scalar adam matrix-free path matches matrix version") {
  AdamConfig cfg;
  double x = 0.7;
  ScalarAdam sopt;
  Mlp net = Mlp::zeros({1, 1});
  net.weights[0](0, 0) = 0.7;
  MlpAdam mopt = MlpAdam::zeros_like(net);
  for (int it = 0; it < 25; ++it) {
    const double grad = std::sin(static_cast<double>(it)) + 0.3;
    sopt.step(x, grad, cfg);
    MlpGrads g;
    g.dweights = {Eigen::MatrixXd::Constant(1, 1, grad)};
    g.dbiases = {Eigen::VectorXd::Zero(1)};
    mopt.step(net, g, cfg);
  }
  REQUIRE(x == Catch::Approx(net.weights[0](0, 0)).margin(1e-15));
}

TEST_CASE("network JSON round-trip is exact") {
  Rng rng(5);
  Mlp net = Mlp::random({3, 7, 2}, rng);
  Mlp back = mlp_from_json(mlp_to_json(net));
  REQUIRE(back.layer_sizes() == net.layer_sizes());
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    REQUIRE(back.weights[l] == net.weights[l]);
    REQUIRE(back.biases[l] == net.biases[l]);
  }
}

TEST_CASE("network JSON rejects mismatched blocks") {
  Rng rng(5);
  Mlp net = Mlp::random({3, 7, 2}, rng);
  nlohmann::json j = mlp_to_json(net);
  j["weights"][0].push_back(0.0);
  REQUIRE_THROWS_AS(mlp_from_json(j), ConfigError);
  nlohmann::json j2 = mlp_to_json(net);
  j2.erase("biases");
  REQUIRE_THROWS_AS(mlp_from_json(j2), ConfigError);
}

TEST_CASE("optimizer state JSON round-trip preserves trajectories") {
  AdamConfig cfg;
  Rng rng(31);
  Mlp net = Mlp::random({2, 4, 1}, rng);
  MlpAdam opt = MlpAdam::zeros_like(net);
  auto fake_grads = [&](int it) {
    MlpGrads g;
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
      g.dweights.push_back(Eigen::MatrixXd::Constant(net.weights[l].rows(),
                                                     net.weights[l].cols(),
                                                     0.1 * (it + 1)));
      g.dbiases.push_back(Eigen::VectorXd::Constant(net.biases[l].size(), -0.05 * (it + 1)));
    }
    return g;
  };
  for (int it = 0; it < 3; ++it) opt.step(net, fake_grads(it), cfg);

  Mlp net_copy = mlp_from_json(mlp_to_json(net));
  MlpAdam opt_copy = mlp_adam_from_json(mlp_adam_to_json(opt), net_copy);
  for (int it = 3; it < 6; ++it) {
    opt.step(net, fake_grads(it), cfg);
    opt_copy.step(net_copy, fake_grads(it), cfg);
  }
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    REQUIRE(net.weights[l] == net_copy.weights[l]);
    REQUIRE(net.biases[l] == net_copy.biases[l]);
  }
}
