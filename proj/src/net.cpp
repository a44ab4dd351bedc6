#include "mmq/net.hpp"

#include <cmath>
#include <string>

#include "mmq/rng.hpp"

namespace mmq {

namespace {

void check_input_rows(const FeedForwardNet& net, const Matrix& inputs) {
  if (inputs.rows() != net.input_dim()) {
    throw ShapeError("net_forward: input has " + std::to_string(inputs.rows()) +
                     " rows, net expects " + std::to_string(net.input_dim()));
  }
}

// rho_tau(u) elementwise and its subgradient; the kink at u = 0 gets slope 0.
inline double pinball_elem(double tau, double u) {
  return u >= 0.0 ? tau * u : (tau - 1.0) * u;
}
inline double pinball_slope(double tau, double u) {
  if (u > 0.0) return tau;
  if (u < 0.0) return tau - 1.0;
  return 0.0;
}

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5*log(2*pi)

}  // namespace

bool FeedForwardNet::all_finite() const {
  for (const auto& w : weights)
    if (!w.allFinite()) return false;
  for (const auto& b : biases)
    if (!b.allFinite()) return false;
  return true;
}

long FeedForwardNet::parameter_count() const {
  long n = 0;
  for (const auto& w : weights) n += w.size();
  for (const auto& b : biases) n += b.size();
  return n;
}

bool GradientBundle::all_finite() const {
  for (const auto& g : weight_grads)
    if (!g.allFinite()) return false;
  for (const auto& g : bias_grads)
    if (!g.allFinite()) return false;
  if (input_grad.size() > 0 && !input_grad.allFinite()) return false;
  return true;
}

FeedForwardNet net_init(const std::vector<int>& layer_sizes, std::uint64_t seed) {
  if (layer_sizes.size() < 2)
    throw ConfigError("net_init: need at least input and output layer sizes");
  for (int s : layer_sizes)
    if (s <= 0) throw ConfigError("net_init: layer sizes must be positive");

  FeedForwardNet net;
  net.layer_sizes = layer_sizes;
  Rng rng(seed);
  for (std::size_t k = 0; k + 1 < layer_sizes.size(); ++k) {
    int fan_in = layer_sizes[k];
    int fan_out = layer_sizes[k + 1];
    double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Matrix w(fan_out, fan_in);
    for (Eigen::Index j = 0; j < w.size(); ++j)
      w.data()[j] = rng.uniform(-limit, limit);
    net.weights.push_back(std::move(w));
    net.biases.push_back(Vector::Zero(fan_out));
  }
  return net;
}

Matrix net_forward_trace(const FeedForwardNet& net, const Matrix& inputs,
                         ForwardTrace& trace) {
  check_input_rows(net, inputs);
  int layers = net.num_layers();
  trace.pre.assign(layers, Matrix());
  trace.act.assign(layers + 1, Matrix());
  trace.act[0] = inputs;
  for (int k = 0; k < layers; ++k) {
    trace.pre[k].noalias() = net.weights[k] * trace.act[k];
    trace.pre[k].colwise() += net.biases[k];
    if (k + 1 < layers)
      trace.act[k + 1] = trace.pre[k].cwiseMax(0.0);
    else
      trace.act[k + 1] = trace.pre[k];
  }
  return trace.act[layers];
}

Matrix net_forward(const FeedForwardNet& net, const Matrix& inputs) {
  check_input_rows(net, inputs);
  int layers = net.num_layers();
  Matrix a = inputs;
  for (int k = 0; k < layers; ++k) {
    Matrix z;
    z.noalias() = net.weights[k] * a;
    z.colwise() += net.biases[k];
    a = (k + 1 < layers) ? z.cwiseMax(0.0).eval() : z;
  }
  return a;
}

Vector net_forward(const FeedForwardNet& net, const Vector& input) {
  Matrix out = net_forward(net, Matrix(input));
  return Vector(out.col(0));
}

GradientBundle net_backprop(const FeedForwardNet& net, const ForwardTrace& trace,
                            const Matrix& output_grad, bool want_input_grad) {
  int layers = net.num_layers();
  if (static_cast<int>(trace.pre.size()) != layers)
    throw ShapeError("net_backprop: trace does not match net");
  if (output_grad.rows() != net.output_dim() ||
      output_grad.cols() != trace.act[0].cols())
    throw ShapeError("net_backprop: output_grad shape mismatch");

  GradientBundle grads;
  grads.weight_grads.assign(layers, Matrix());
  grads.bias_grads.assign(layers, Vector());

  Matrix dz = output_grad;  // output layer is linear
  for (int k = layers - 1; k >= 0; --k) {
    grads.weight_grads[k].noalias() = dz * trace.act[k].transpose();
    grads.bias_grads[k] = dz.rowwise().sum();
    if (k > 0) {
      Matrix da;
      da.noalias() = net.weights[k].transpose() * dz;
      // ReLU passes gradient only where the pre-activation was positive.
      dz = da.cwiseProduct(
          (trace.pre[k - 1].array() > 0.0).cast<double>().matrix());
    } else if (want_input_grad) {
      grads.input_grad.noalias() = net.weights[0].transpose() * dz;
    }
  }
  return grads;
}

double loss_pinball(double tau, const Vector& prediction, const Vector& target) {
  if (tau <= 0.0 || tau >= 1.0)
    throw ConfigError("loss_pinball: tau must lie strictly inside (0, 1)");
  if (prediction.size() != target.size())
    throw ShapeError("loss_pinball: prediction/target size mismatch");
  double total = 0.0;
  for (Eigen::Index d = 0; d < prediction.size(); ++d)
    total += pinball_elem(tau, prediction[d] - target[d]);
  return total;
}

double loss_gaussian_nll(const Vector& mean, const Vector& log_var,
                         const Vector& target) {
  if (mean.size() != target.size() || log_var.size() != target.size())
    throw ShapeError("loss_gaussian_nll: size mismatch");
  double total = 0.0;
  for (Eigen::Index d = 0; d < mean.size(); ++d) {
    double lv = std::clamp(log_var[d], kLogVarMin, kLogVarMax);
    double diff = target[d] - mean[d];
    total += kHalfLog2Pi + 0.5 * lv + 0.5 * diff * diff * std::exp(-lv);
  }
  return total;
}

BackwardResult net_backward(const FeedForwardNet& net, const Matrix& inputs,
                            LossHead head, const LossArgs& args,
                            bool want_input_grad) {
  ForwardTrace trace;
  Matrix out = net_forward_trace(net, inputs, trace);
  const Eigen::Index batch = inputs.cols();
  if (batch == 0) throw ShapeError("net_backward: empty batch");

  double loss = 0.0;
  Matrix dout(out.rows(), out.cols());

  switch (head) {
    case LossHead::Mse: {
      if (args.target.rows() != out.rows() || args.target.cols() != out.cols())
        throw ShapeError("net_backward(Mse): target shape mismatch");
      Matrix diff = out - args.target;
      double denom = static_cast<double>(diff.size());
      loss = diff.squaredNorm() / denom;
      dout = (2.0 / denom) * diff;
      break;
    }
    case LossHead::Pinball: {
      if (args.tau <= 0.0 || args.tau >= 1.0)
        throw ConfigError("net_backward(Pinball): tau outside (0, 1)");
      if (args.target.rows() != out.rows() || args.target.cols() != out.cols())
        throw ShapeError("net_backward(Pinball): target shape mismatch");
      double denom = static_cast<double>(out.size());
      for (Eigen::Index j = 0; j < out.size(); ++j) {
        double u = out.data()[j] - args.target.data()[j];
        loss += pinball_elem(args.tau, u);
        dout.data()[j] = pinball_slope(args.tau, u) / denom;
      }
      loss /= denom;
      break;
    }
    case LossHead::GaussianNll: {
      if (out.rows() % 2 != 0)
        throw ShapeError("net_backward(GaussianNll): output width must be even");
      Eigen::Index dim = out.rows() / 2;
      if (args.target.rows() != dim || args.target.cols() != out.cols())
        throw ShapeError("net_backward(GaussianNll): target shape mismatch");
      double denom = static_cast<double>(batch);
      for (Eigen::Index b = 0; b < batch; ++b) {
        for (Eigen::Index d = 0; d < dim; ++d) {
          double mu = out(d, b);
          double lv_raw = out(dim + d, b);
          double lv = std::clamp(lv_raw, kLogVarMin, kLogVarMax);
          double diff = args.target(d, b) - mu;
          double inv_var = std::exp(-lv);
          loss += kHalfLog2Pi + 0.5 * lv + 0.5 * diff * diff * inv_var;
          dout(d, b) = -diff * inv_var / denom;
          // No gradient through a clamped log-variance.
          bool clamped = lv_raw < kLogVarMin || lv_raw > kLogVarMax;
          dout(dim + d, b) =
              clamped ? 0.0 : 0.5 * (1.0 - diff * diff * inv_var) / denom;
        }
      }
      loss /= denom;
      break;
    }
    case LossHead::CriticChain: {
      loss = -out.sum() / static_cast<double>(batch);
      dout.setConstant(-1.0 / static_cast<double>(batch));
      break;
    }
  }

  BackwardResult result;
  result.loss = loss;
  result.grads = net_backprop(net, trace, dout, want_input_grad);
  return result;
}

AdamState adam_init(const FeedForwardNet& net, double learning_rate) {
  if (learning_rate <= 0.0)
    throw ConfigError("adam_init: learning_rate must be positive");
  AdamState state;
  state.learning_rate = learning_rate;
  for (const auto& w : net.weights) {
    state.m_w.push_back(Matrix::Zero(w.rows(), w.cols()));
    state.v_w.push_back(Matrix::Zero(w.rows(), w.cols()));
  }
  for (const auto& b : net.biases) {
    state.m_b.push_back(Vector::Zero(b.size()));
    state.v_b.push_back(Vector::Zero(b.size()));
  }
  return state;
}

void adam_step(FeedForwardNet& net, const GradientBundle& grads, AdamState& state) {
  int layers = net.num_layers();
  if (static_cast<int>(grads.weight_grads.size()) != layers ||
      static_cast<int>(grads.bias_grads.size()) != layers ||
      static_cast<int>(state.m_w.size()) != layers)
    throw ShapeError("adam_step: gradient bundle/state does not match net");
  for (int k = 0; k < layers; ++k) {
    if (grads.weight_grads[k].rows() != net.weights[k].rows() ||
        grads.weight_grads[k].cols() != net.weights[k].cols() ||
        grads.bias_grads[k].size() != net.biases[k].size())
      throw ShapeError("adam_step: gradient shapes do not match net layer " +
                       std::to_string(k));
  }
  if (!grads.all_finite())
    throw NumericError("adam_step: non-finite gradient");

  state.step_count += 1;
  double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
  double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));

  auto update = [&](auto& param, const auto& grad, auto& m, auto& v) {
    m = state.beta1 * m + (1.0 - state.beta1) * grad;
    v = state.beta2 * v.array().matrix() +
        (1.0 - state.beta2) * grad.cwiseProduct(grad);
    auto m_hat = (m / bc1).array();
    auto v_hat = (v / bc2).array();
    param.array() -= state.learning_rate * m_hat / (v_hat.sqrt() + state.epsilon);
  };
  for (int k = 0; k < layers; ++k) {
    update(net.weights[k], grads.weight_grads[k], state.m_w[k], state.v_w[k]);
    update(net.biases[k], grads.bias_grads[k], state.m_b[k], state.v_b[k]);
  }
  if (!net.all_finite())
    throw NumericError("adam_step: parameters became non-finite");
}

void soft_update(FeedForwardNet& target, const FeedForwardNet& online, double mix) {
  if (!target.congruent_with(online))
    throw ShapeError("soft_update: architecture mismatch");
  if (mix <= 0.0 || mix > 1.0)
    throw ConfigError("soft_update: mix must lie in (0, 1]");
  for (int k = 0; k < target.num_layers(); ++k) {
    target.weights[k] = (1.0 - mix) * target.weights[k] + mix * online.weights[k];
    target.biases[k] = (1.0 - mix) * target.biases[k] + mix * online.biases[k];
  }
}

}  // namespace mmq
