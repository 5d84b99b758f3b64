#include <doctest.h>

#include <Eigen/Core>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>

#include "dmls2r/nn.hpp"
#include "testutil.hpp"

using namespace dmls2r;

namespace {

MlpParams single_linear_layer(const Eigen::MatrixXd& w,
                              const Eigen::VectorXd& b) {
  MlpParams p;
  p.weights = {w};
  p.biases = {b};
  p.activations = {Activation::Identity};
  return p;
}

}  // namespace

TEST_CASE("init_mlp produces the contracted shapes with zero biases") {
  const MlpParams p = init_mlp({13, 100, 100}, 7);
  REQUIRE(p.layer_count() == 2);
  CHECK(p.weights[0].rows() == 100);
  CHECK(p.weights[0].cols() == 13);
  CHECK(p.weights[1].rows() == 100);
  CHECK(p.weights[1].cols() == 100);
  CHECK(p.biases[0].isZero(0.0));
  CHECK(p.biases[1].isZero(0.0));
  CHECK(p.activations[0] == Activation::Rectifier);
  CHECK(p.activations[1] == Activation::Identity);
}

TEST_CASE("init_mlp is deterministic in the seed") {
  const MlpParams a = init_mlp({4, 8, 2}, 99);
  const MlpParams b = init_mlp({4, 8, 2}, 99);
  for (std::size_t l = 0; l < a.layer_count(); ++l)
    CHECK(a.weights[l] == b.weights[l]);
  const MlpParams c = init_mlp({4, 8, 2}, 100);
  CHECK(a.weights[0] != c.weights[0]);
}

TEST_CASE("init_mlp weights stay inside the fan-in scale") {
  const MlpParams p = init_mlp({16, 9, 3}, 5);
  CHECK(p.weights[0].cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(16.0));
  CHECK(p.weights[1].cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(9.0));
}

TEST_CASE("init_mlp rejects degenerate size lists") {
  CHECK_THROWS_AS(init_mlp({5}, 1), std::invalid_argument);
  CHECK_THROWS_AS(init_mlp({}, 1), std::invalid_argument);
  CHECK_THROWS_AS(init_mlp({4, 0, 2}, 1), std::invalid_argument);
}

TEST_CASE("forward with zero parameters is identically zero") {
  MlpParams p = init_mlp({3, 4, 2}, 1);
  for (auto& w : p.weights) w.setZero();
  const Eigen::MatrixXd x = testutil::random_matrix(5, 3, 2);
  CHECK(forward(p, x).output().isZero(0.0));
}

TEST_CASE("identity-weight linear layer reproduces its input") {
  const MlpParams p =
      single_linear_layer(Eigen::MatrixXd::Identity(4, 4), Eigen::VectorXd::Zero(4));
  const Eigen::MatrixXd x = testutil::random_matrix(6, 4, 3);
  CHECK((forward(p, x).output() - x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("forward output has the batch-by-fan-out shape") {
  const MlpParams p = init_mlp({7, 5, 4, 3}, 11);
  const ForwardTrace t = forward(p, testutil::random_matrix(4, 7, 12));
  CHECK(t.output().rows() == 4);
  CHECK(t.output().cols() == 3);
}

TEST_CASE("forward rejects a mismatched batch width") {
  const MlpParams p = init_mlp({7, 5, 3}, 11);
  CHECK_THROWS_AS(forward(p, testutil::random_matrix(4, 6, 12)),
                  std::invalid_argument);
}

TEST_CASE("zero output gradient backs into zero parameter gradients") {
  const MlpParams p = init_mlp({3, 5, 2}, 4);
  const ForwardTrace t = forward(p, testutil::random_matrix(6, 3, 5));
  const BackwardResult r = backward(p, t, Eigen::MatrixXd::Zero(6, 2));
  for (const auto& gw : r.grads.weights) CHECK(gw.isZero(0.0));
  for (const auto& gb : r.grads.biases) CHECK(gb.isZero(0.0));
  CHECK(r.input_grad.isZero(0.0));
}

TEST_CASE("single linear layer gradients match the analytic identity") {
  const Eigen::MatrixXd w = testutil::random_matrix(2, 3, 6);
  const MlpParams p = single_linear_layer(w, testutil::random_vector(2, 7));
  const Eigen::MatrixXd x = testutil::random_matrix(5, 3, 8);
  const Eigen::MatrixXd g = testutil::random_matrix(5, 2, 9);

  const BackwardResult r = backward(p, forward(p, x), g);
  const Eigen::MatrixXd expect_w = g.transpose() * x;
  const Eigen::VectorXd expect_b = g.colwise().sum().transpose();
  CHECK((r.grads.weights[0] - expect_w).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((r.grads.biases[0] - expect_b).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((r.input_grad - g * w).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("rectifier passes zero gradient where pre-activation is negative") {
  MlpParams p;
  p.weights = {Eigen::MatrixXd::Identity(2, 2)};
  p.biases = {Eigen::VectorXd::Zero(2)};
  p.activations = {Activation::Rectifier};

  Eigen::MatrixXd x(1, 2);
  x << 3.0, -2.0;
  const ForwardTrace t = forward(p, x);
  const BackwardResult r = backward(p, t, Eigen::MatrixXd::Ones(1, 2));
  CHECK(r.input_grad(0, 0) == 1.0);
  CHECK(r.input_grad(0, 1) == 0.0);
  CHECK(r.grads.weights[0](1, 1) == 0.0);
}

TEST_CASE("random net gradients match an independent finite-difference sweep") {
  MlpParams p = init_mlp({4, 6, 5, 2}, 21);
  const Eigen::MatrixXd x = testutil::random_matrix(7, 4, 22);

  const auto loss_value = [&]() {
    return forward(p, x).output().squaredNorm();
  };
  const ForwardTrace t = forward(p, x);
  const BackwardResult r = backward(p, t, 2.0 * t.output());

  Gradients analytic = r.grads;
  const double dev = testutil::fd_max_relative_deviation(
      loss_value, param_blocks(p), grad_blocks(analytic), 1e-4);
  CHECK(dev < 1e-4);
}

TEST_CASE("adam first step moves a unit-gradient parameter by the learning rate") {
  MlpParams p = single_linear_layer(Eigen::MatrixXd::Constant(1, 1, 0.5),
                                    Eigen::VectorXd::Zero(1));
  Gradients g = Gradients::zeros_like(p);
  g.weights[0](0, 0) = 1.0;

  AdamState s = AdamState::init(param_blocks(std::as_const(p)));
  adam_step(p, g, s);
  CHECK(s.step_count == 1);
  CHECK(p.weights[0](0, 0) ==
        doctest::Approx(0.5 - 0.001 / (1.0 + 1e-8)).epsilon(1e-12));
}

TEST_CASE("adam leaves parameters alone on zero gradients") {
  MlpParams p = init_mlp({3, 4, 1}, 31);
  const MlpParams before = p;
  AdamState s = AdamState::init(param_blocks(std::as_const(p)));
  adam_step(p, Gradients::zeros_like(p), s);
  CHECK(s.step_count == 1);
  for (std::size_t l = 0; l < p.layer_count(); ++l)
    CHECK(p.weights[l] == before.weights[l]);
}

TEST_CASE("adam accumulates a strictly positive second moment") {
  MlpParams p = single_linear_layer(Eigen::MatrixXd::Constant(1, 1, 0.5),
                                    Eigen::VectorXd::Zero(1));
  Gradients g = Gradients::zeros_like(p);
  g.weights[0](0, 0) = 0.3;
  AdamState s = AdamState::init(param_blocks(std::as_const(p)));
  adam_step(p, g, s);
  adam_step(p, g, s);
  CHECK(s.step_count == 2);
  CHECK(s.second_moment[0][0] > 0.0);
}

TEST_CASE("adam rejects non-finite gradients") {
  MlpParams p = init_mlp({2, 3, 1}, 41);
  Gradients g = Gradients::zeros_like(p);
  g.weights[0](0, 0) = std::numeric_limits<double>::quiet_NaN();
  AdamState s = AdamState::init(param_blocks(std::as_const(p)));
  CHECK_THROWS_AS(adam_step(p, g, s), std::invalid_argument);
}

TEST_CASE("seeded training trajectories are bitwise reproducible") {
  const auto run = [] {
    MlpParams p = init_mlp({3, 5, 2}, 77);
    const Eigen::MatrixXd x = testutil::random_matrix(6, 3, 78);
    AdamState s = AdamState::init(param_blocks(std::as_const(p)));
    for (int i = 0; i < 10; ++i) {
      const ForwardTrace t = forward(p, x);
      adam_step(p, backward(p, t, 2.0 * t.output()).grads, s);
    }
    return p;
  };
  const MlpParams a = run();
  const MlpParams b = run();
  for (std::size_t l = 0; l < a.layer_count(); ++l) {
    CHECK(a.weights[l] == b.weights[l]);
    CHECK(a.biases[l] == b.biases[l]);
  }
}

TEST_CASE("grad_check is near-exact on a quadratic") {
  MlpParams p = init_mlp({3, 4, 2}, 51);
  const auto loss = [](const MlpParams& q) {
    double sum = 0.0;
    for (const auto& w : q.weights) sum += w.squaredNorm();
    for (const auto& b : q.biases) sum += b.squaredNorm();
    return sum;
  };
  Gradients analytic = Gradients::zeros_like(p);
  for (std::size_t l = 0; l < p.layer_count(); ++l) {
    analytic.weights[l] = 2.0 * p.weights[l];
    analytic.biases[l] = 2.0 * p.biases[l];
  }
  CHECK(grad_check(loss, p, analytic, 1e-4) < 1e-8);
}

TEST_CASE("grad_check flags a wrong gradient") {
  MlpParams p = init_mlp({2, 3, 1}, 52);
  const auto loss = [](const MlpParams& q) {
    double sum = 0.0;
    for (const auto& w : q.weights) sum += w.squaredNorm();
    for (const auto& b : q.biases) sum += b.squaredNorm();
    return sum;
  };
  Gradients wrong = Gradients::zeros_like(p);
  CHECK(grad_check(loss, p, wrong, 1e-4) > 0.5);
}
