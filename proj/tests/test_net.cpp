#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mmq/net.hpp"
#include "mmq/rng.hpp"
#include "support/fd_suite.hpp"

using namespace mmq;

namespace {

FeedForwardNet single_layer(const Matrix& w, const Vector& b) {
  FeedForwardNet net;
  net.layer_sizes = {static_cast<int>(w.cols()), static_cast<int>(w.rows())};
  net.weights = {w};
  net.biases = {b};
  return net;
}

}  // namespace

TEST_CASE("net_init shapes, bounds and determinism") {
  std::vector<int> sizes{3, 64, 64, 2};
  FeedForwardNet net = net_init(sizes, 7);
  REQUIRE(net.num_layers() == 3);
  CHECK(net.weights[0].rows() == 64);
  CHECK(net.weights[0].cols() == 3);
  CHECK(net.weights[2].rows() == 2);
  CHECK(net.weights[2].cols() == 64);
  for (int k = 0; k < net.num_layers(); ++k) {
    CHECK(net.biases[k].isZero(0.0));
    double limit =
        std::sqrt(6.0 / static_cast<double>(sizes[k] + sizes[k + 1]));
    CHECK(net.weights[k].cwiseAbs().maxCoeff() <= limit);
    CHECK(net.weights[k].cwiseAbs().maxCoeff() > 0.0);
  }

  FeedForwardNet again = net_init(sizes, 7);
  for (int k = 0; k < net.num_layers(); ++k)
    CHECK(net.weights[k] == again.weights[k]);
  FeedForwardNet other = net_init(sizes, 8);
  CHECK(net.weights[0] != other.weights[0]);
}

TEST_CASE("net_init rejects degenerate layer lists") {
  CHECK_THROWS_AS(net_init({4}, 0), ConfigError);
  CHECK_THROWS_AS(net_init({4, 0, 1}, 0), ConfigError);
  CHECK_THROWS_AS(net_init({4, -2, 1}, 0), ConfigError);
}

TEST_CASE("net_forward linear layer by hand") {
  Matrix w(1, 2);
  w << 1.0, 2.0;
  Vector b(1);
  b << 0.5;
  FeedForwardNet net = single_layer(w, b);
  Vector x(2);
  x << 3.0, 4.0;
  Vector y = net_forward(net, x);
  CHECK(y[0] == doctest::Approx(11.5));
}

TEST_CASE("hidden layers apply ReLU, output stays linear") {
  FeedForwardNet net;
  net.layer_sizes = {1, 1, 1};
  Matrix w0(1, 1), w1(1, 1);
  w0 << -1.0;
  w1 << 5.0;
  Vector b0(1), b1(1);
  b0 << 0.0;
  b1 << 1.0;
  net.weights = {w0, w1};
  net.biases = {b0, b1};

  Vector x(1);
  x << 2.0;  // hidden pre-activation -2 -> ReLU clips to 0
  CHECK(net_forward(net, x)[0] == doctest::Approx(1.0));
  x << -2.0;  // hidden pre-activation +2 passes through
  CHECK(net_forward(net, x)[0] == doctest::Approx(11.0));
}

TEST_CASE("batch forward equals per-column forward") {
  FeedForwardNet net = net_init({3, 8, 8, 2}, 11);
  Rng rng(3);
  Matrix x(3, 5);
  for (Eigen::Index j = 0; j < x.size(); ++j) x.data()[j] = rng.uniform(-1, 1);
  Matrix batch = net_forward(net, x);
  for (int c = 0; c < 5; ++c) {
    Vector single = net_forward(net, Vector(x.col(c)));
    CHECK((batch.col(c) - single).cwiseAbs().maxCoeff() < 1e-15);
  }
}

TEST_CASE("net_forward rejects mismatched input width") {
  FeedForwardNet net = net_init({3, 4, 1}, 0);
  Matrix x(2, 1);
  x.setZero();
  CHECK_THROWS_AS(net_forward(net, x), ShapeError);
}

TEST_CASE("pinball loss values and asymmetry") {
  Vector pred(1), target(1);
  pred << 1.0;
  target << 0.0;
  CHECK(loss_pinball(0.9, pred, target) == doctest::Approx(0.9));
  pred << -1.0;
  CHECK(loss_pinball(0.9, pred, target) == doctest::Approx(0.1));
  pred << 0.0;
  CHECK(loss_pinball(0.9, pred, target) == doctest::Approx(0.0));

  // Sums over dimensions.
  Vector p2(2), t2(2);
  p2 << 1.0, -1.0;
  t2 << 0.0, 0.0;
  CHECK(loss_pinball(0.9, p2, t2) == doctest::Approx(1.0));

  // tau = 0.95 punishes over-prediction 19x harder than under-prediction.
  Vector over(1), under(1);
  over << 2.0;
  under << -2.0;
  CHECK(loss_pinball(0.95, over, target) ==
        doctest::Approx(19.0 * loss_pinball(0.95, under, target)));

  CHECK_THROWS_AS(loss_pinball(0.0, pred, target), ConfigError);
  CHECK_THROWS_AS(loss_pinball(1.0, pred, target), ConfigError);
}

TEST_CASE("gaussian negative log-likelihood values") {
  Vector mean(1), log_var(1), target(1);
  mean << 0.0;
  log_var << 0.0;
  target << 0.0;
  // Unit variance, zero error: 0.5*log(2*pi).
  CHECK(loss_gaussian_nll(mean, log_var, target) == doctest::Approx(0.9189385332));
  target << 1.0;
  CHECK(loss_gaussian_nll(mean, log_var, target) == doctest::Approx(1.4189385332));

  Vector m2(2), lv2(2), t2(2);
  m2.setZero();
  lv2.setZero();
  t2 << 1.0, 1.0;
  CHECK(loss_gaussian_nll(m2, lv2, t2) == doctest::Approx(2.0 * 1.4189385332));

  // Log-variance clamps keep the loss finite for wild head outputs.
  Vector huge(1);
  huge << 40.0;
  Vector expected_at_clamp(1);
  expected_at_clamp << kLogVarMax;
  CHECK(loss_gaussian_nll(mean, huge, target) ==
        doctest::Approx(loss_gaussian_nll(mean, expected_at_clamp, target)));
}

TEST_CASE("mse head: perfect prediction gives zero loss and zero gradients") {
  FeedForwardNet net = net_init({2, 6, 1}, 5);
  Matrix x(2, 3);
  x << 0.3, -0.7, 1.1, 0.9, 0.2, -0.4;
  LossArgs args;
  args.target = net_forward(net, x);
  BackwardResult r = net_backward(net, x, LossHead::Mse, args);
  CHECK(r.loss == doctest::Approx(0.0));
  for (const auto& g : r.grads.weight_grads) CHECK(g.isZero(1e-14));
  for (const auto& g : r.grads.bias_grads) CHECK(g.isZero(1e-14));
}

TEST_CASE("critic chain head: loss is negated batch mean, input grads available") {
  Matrix w(1, 2);
  w << 2.0, -1.0;
  Vector b(1);
  b << 0.0;
  FeedForwardNet net = single_layer(w, b);
  Matrix x(2, 2);
  x << 1.0, 0.0, 0.0, 1.0;  // outputs 2 and -1
  BackwardResult r = net_backward(net, x, LossHead::CriticChain, LossArgs{}, true);
  CHECK(r.loss == doctest::Approx(-0.5));
  REQUIRE(r.grads.input_grad.rows() == 2);
  REQUIRE(r.grads.input_grad.cols() == 2);
  // dL/dx = -W^T / batch for a linear net.
  CHECK(r.grads.input_grad(0, 0) == doctest::Approx(-1.0));
  CHECK(r.grads.input_grad(1, 0) == doctest::Approx(0.5));
}

TEST_CASE("gaussian head rejects odd output width") {
  FeedForwardNet net = net_init({2, 4, 3}, 1);
  Matrix x = Matrix::Zero(2, 1);
  LossArgs args;
  args.target = Matrix::Zero(1, 1);
  CHECK_THROWS_AS(net_backward(net, x, LossHead::GaussianNll, args), ShapeError);
}

TEST_CASE("adam first step moves by learning rate times gradient sign") {
  FeedForwardNet net = net_init({2, 3, 1}, 9);
  AdamState state = adam_init(net, 1e-3);
  GradientBundle grads;
  for (const auto& w : net.weights)
    grads.weight_grads.push_back(Matrix::Constant(w.rows(), w.cols(), 0.25));
  for (const auto& b : net.biases)
    grads.bias_grads.push_back(Vector::Constant(b.size(), -0.5));

  FeedForwardNet before = net;
  adam_step(net, grads, state);
  CHECK(state.step_count == 1);
  // First step: m_hat = g, v_hat = g^2, so delta = -lr * g / (|g| + eps).
  double expected_w = -1e-3 * 0.25 / (0.25 + 1e-8);
  double expected_b = 1e-3 * 0.5 / (0.5 + 1e-8);
  CHECK((net.weights[0] - before.weights[0]).array().abs().maxCoeff() ==
        doctest::Approx(std::abs(expected_w)));
  CHECK(net.weights[0](0, 0) - before.weights[0](0, 0) ==
        doctest::Approx(expected_w));
  CHECK(net.biases[0][0] - before.biases[0][0] == doctest::Approx(expected_b));
}

TEST_CASE("adam second step matches hand-computed moments") {
  Matrix w(1, 1);
  w << 1.0;
  FeedForwardNet net = single_layer(w, Vector::Zero(1));
  AdamState st = adam_init(net, 0.01);
  GradientBundle g;
  g.weight_grads = {Matrix::Constant(1, 1, 0.3)};
  g.bias_grads = {Vector::Zero(1)};
  adam_step(net, g, st);
  g.weight_grads[0](0, 0) = -0.1;
  adam_step(net, g, st);

  // Recompute both steps by hand.
  double m = 0, v = 0, p = 1.0;
  int t = 0;
  for (double grad : {0.3, -0.1}) {
    ++t;
    m = 0.9 * m + 0.1 * grad;
    v = 0.999 * v + 0.001 * grad * grad;
    double mh = m / (1 - std::pow(0.9, t));
    double vh = v / (1 - std::pow(0.999, t));
    p -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
  }
  CHECK(net.weights[0](0, 0) == doctest::Approx(p).epsilon(1e-12));
}

TEST_CASE("adam rejects non-finite gradients and shape mismatches") {
  FeedForwardNet net = net_init({2, 3, 1}, 2);
  AdamState state = adam_init(net);
  GradientBundle bad;
  for (const auto& w : net.weights)
    bad.weight_grads.push_back(Matrix::Zero(w.rows(), w.cols()));
  for (const auto& b : net.biases) bad.bias_grads.push_back(Vector::Zero(b.size()));
  bad.weight_grads[0](0, 0) = std::nan("");
  CHECK_THROWS_AS(adam_step(net, bad, state), NumericError);

  GradientBundle wrong;
  wrong.weight_grads = {Matrix::Zero(1, 1)};
  wrong.bias_grads = {Vector::Zero(1)};
  CHECK_THROWS_AS(adam_step(net, wrong, state), ShapeError);
}

TEST_CASE("soft_update blends toward online net") {
  FeedForwardNet online = net_init({2, 4, 1}, 3);
  FeedForwardNet target = net_init({2, 4, 1}, 4);
  FeedForwardNet stale = target;
  soft_update(target, online, 0.25);
  for (int k = 0; k < online.num_layers(); ++k) {
    Matrix expect = 0.75 * stale.weights[k] + 0.25 * online.weights[k];
    CHECK((target.weights[k] - expect).cwiseAbs().maxCoeff() < 1e-15);
  }
  soft_update(target, online, 1.0);  // mix 1 copies exactly
  for (int k = 0; k < online.num_layers(); ++k)
    CHECK(target.weights[k] == online.weights[k]);

  FeedForwardNet other = net_init({2, 5, 1}, 5);
  CHECK_THROWS_AS(soft_update(other, online, 0.5), ShapeError);
  CHECK_THROWS_AS(soft_update(target, online, 0.0), ConfigError);
  CHECK_THROWS_AS(soft_update(target, online, 1.5), ConfigError);
}

TEST_CASE("analytic gradients match central finite differences on all heads") {
  using namespace mmq::testing;
  FdSettings fd;
  FdSuiteReport report = run_fd_suite(12, /*seed=*/20240815, fd);
  CHECK(report.cases >= 40);
  CHECK(report.input_grad_cases >= 12);
  CHECK(report.deep_cases >= 4);
  CHECK(report.max_rel_err <= fd.rel_tol);
}
