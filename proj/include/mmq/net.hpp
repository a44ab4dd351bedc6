#pragma once
#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "mmq/errors.hpp"

namespace mmq {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Fully connected network: ReLU hidden layers, linear output.
//
// Data layout is column-per-sample throughout: a batch of B inputs of width D
// is a (D x B) matrix, weights[k] is (fan_out x fan_in), and a forward pass is
// a chain of GEMMs.  All learning-rule math (losses, gradients, Adam) is
// written out explicitly below so it can be checked against finite
// differences.
// ---------------------------------------------------------------------------

struct FeedForwardNet {
  std::vector<int> layer_sizes;   // e.g. {4, 64, 64, 1}
  std::vector<Matrix> weights;    // weights[k]: layer_sizes[k+1] x layer_sizes[k]
  std::vector<Vector> biases;     // biases[k]: layer_sizes[k+1]

  int input_dim() const { return layer_sizes.front(); }
  int output_dim() const { return layer_sizes.back(); }
  int num_layers() const { return static_cast<int>(weights.size()); }
  bool congruent_with(const FeedForwardNet& other) const {
    return layer_sizes == other.layer_sizes;
  }
  bool all_finite() const;
  long parameter_count() const;
};

// Xavier-uniform weights (limit sqrt(6/(fan_in+fan_out))), zero biases.
// layer_sizes needs at least an input and an output entry, all positive.
FeedForwardNet net_init(const std::vector<int>& layer_sizes, std::uint64_t seed);

// Forward pass; input rows must equal net.input_dim().
Matrix net_forward(const FeedForwardNet& net, const Matrix& inputs);
Vector net_forward(const FeedForwardNet& net, const Vector& input);

// Forward pass that keeps per-layer activations for a later backprop call.
struct ForwardTrace {
  std::vector<Matrix> pre;  // pre[k]: pre-activation of layer k
  std::vector<Matrix> act;  // act[0] = inputs, act[k+1] = post-activation of layer k
};
Matrix net_forward_trace(const FeedForwardNet& net, const Matrix& inputs,
                         ForwardTrace& trace);

struct GradientBundle {
  std::vector<Matrix> weight_grads;
  std::vector<Vector> bias_grads;
  Matrix input_grad;  // filled only when requested

  bool all_finite() const;
};

// Backpropagate an arbitrary loss gradient w.r.t. the network output.
// output_grad is (out_dim x B), matching the traced forward pass.
GradientBundle net_backprop(const FeedForwardNet& net, const ForwardTrace& trace,
                            const Matrix& output_grad, bool want_input_grad = false);

// ---------------------------------------------------------------------------
// Loss heads.
//
//   Mse          mean squared error over every output element
//   Pinball      quantile regression loss at level args.tau
//   GaussianNll  negative log-likelihood of a diagonal Gaussian; the net's
//                output stacks [means; raw log-variances] so it must have an
//                even output width of 2*D for D-dimensional targets
//   CriticChain  loss = -mean(output); used to ascend a critic's value with
//                gradients chained into a preceding network via input_grad
//
// Heads reduce with a mean over batch columns (and over target dims for Mse /
// Pinball); GaussianNll sums over dims per sample and averages over the batch.
// ---------------------------------------------------------------------------

enum class LossHead { Mse, Pinball, GaussianNll, CriticChain };

struct LossArgs {
  Matrix target;     // unused by CriticChain
  double tau = 0.5;  // Pinball only
};

struct BackwardResult {
  double loss = 0.0;
  GradientBundle grads;
};

BackwardResult net_backward(const FeedForwardNet& net, const Matrix& inputs,
                            LossHead head, const LossArgs& args,
                            bool want_input_grad = false);

// Raw log-variances from a GaussianNll head are clamped to this range before
// exponentiation, keeping the NLL and its gradient finite.
constexpr double kLogVarMin = -10.0;
constexpr double kLogVarMax = 5.0;

// Quantile loss for one prediction vector, summed over dimensions:
//   rho_tau(u) = tau*u if u >= 0 else (tau-1)*u,  u = prediction - target.
double loss_pinball(double tau, const Vector& prediction, const Vector& target);

// Diagonal-Gaussian negative log-likelihood, summed over dimensions.
// log_var is clamped to [kLogVarMin, kLogVarMax].
double loss_gaussian_nll(const Vector& mean, const Vector& log_var,
                         const Vector& target);

// ---------------------------------------------------------------------------
// Optimization.
// ---------------------------------------------------------------------------

struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  long step_count = 0;
  std::vector<Matrix> m_w, v_w;
  std::vector<Vector> m_b, v_b;
};

AdamState adam_init(const FeedForwardNet& net, double learning_rate = 1e-3);

// One Adam update in place.  Throws NumericError if the gradients carry
// NaN/Inf, ShapeError if the bundle does not match the net.
void adam_step(FeedForwardNet& net, const GradientBundle& grads, AdamState& state);

// target <- (1 - mix) * target + mix * online, elementwise.  mix in (0, 1].
void soft_update(FeedForwardNet& target, const FeedForwardNet& online, double mix);

}  // namespace mmq
