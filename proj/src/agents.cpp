#include "mmq/agents.hpp"

#include <algorithm>
#include <cmath>

#include "mmq/envs.hpp"

namespace mmq {

namespace {

std::vector<int> layer_plan(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> sizes;
  sizes.push_back(in);
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(out);
  return sizes;
}

Matrix vstack(const Matrix& top, const Matrix& bottom) {
  Matrix out(top.rows() + bottom.rows(), top.cols());
  out << top, bottom;
  return out;
}

// Inverse standard-normal CDF (Acklam's rational approximation, ~1e-9
// absolute error); used to turn quantile levels into z-scores for the
// Gaussian candidate sampler.
double inverse_normal_cdf(double p) {
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double p_low = 0.02425, p_high = 1 - p_low;
  if (p <= 0.0 || p >= 1.0)
    throw ConfigError("inverse_normal_cdf: p outside (0, 1)");
  if (p < p_low) {
    double q = std::sqrt(-2 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  if (p <= p_high) {
    double q = p - 0.5, r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) *
           q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
  }
  double q = std::sqrt(-2 * std::log(1 - p));
  return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
         ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
}

}  // namespace

void AgentConfig::validate() const {
  if (hidden.empty()) throw ConfigError("config: need at least one hidden layer");
  for (int h : hidden)
    if (h <= 0) throw ConfigError("config: hidden layer sizes must be positive");
  if (learning_rate <= 0) throw ConfigError("config: learning_rate must be positive");
  if (gamma <= 0.0 || gamma >= 1.0)
    throw ConfigError("config: gamma must lie strictly inside (0, 1)");
  if (batch_size <= 0) throw ConfigError("config: batch_size must be positive");
  if (buffer_capacity < batch_size)
    throw ConfigError("config: buffer_capacity must hold at least one batch");
  if (pretrain_steps < 0) throw ConfigError("config: pretrain_steps must be >= 0");
  if (epsilon < 0.0 || epsilon > 1.0)
    throw ConfigError("config: epsilon must lie in [0, 1]");
  if (explore_sigma < 0.0) throw ConfigError("config: explore_sigma must be >= 0");
  if (critic_ratio < 1) throw ConfigError("config: critic_ratio must be >= 1");
  if (target_mix <= 0.0 || target_mix > 1.0)
    throw ConfigError("config: target_mix must lie in (0, 1]");
  if (num_candidates < 0) throw ConfigError("config: num_candidates must be >= 0");
  if (!(tau_low > 0.0 && tau_low < tau_high && tau_high < 1.0))
    throw ConfigError("config: need 0 < tau_low < tau_high < 1");
  if (beta <= 0.0 || beta > 1.0)
    throw ConfigError("config: beta must lie in (0, 1]");
}

// ---------------------------------------------------------------------------
// ActorCriticLearner
// ---------------------------------------------------------------------------

ActorCriticLearner::ActorCriticLearner(AgentConfig cfg, int state_dim,
                                       int action_dim, std::uint64_t seed)
    : cfg_(std::move(cfg)),
      state_dim_(state_dim),
      action_dim_(action_dim),
      rng_(seed),
      buffer_(cfg_.buffer_capacity, state_dim, action_dim) {
  cfg_.validate();
  actor_ = net_init(layer_plan(state_dim_, cfg_.hidden, action_dim_),
                    rng_.next_u64());
  critic_ = net_init(layer_plan(state_dim_ + action_dim_, cfg_.hidden, 1),
                     rng_.next_u64());
  actor_target_ = actor_;
  critic_target_ = critic_;
  actor_opt_ = adam_init(actor_, cfg_.learning_rate);
  critic_opt_ = adam_init(critic_, cfg_.learning_rate);
}

Matrix ActorCriticLearner::policy(const FeedForwardNet& actor,
                                  const Matrix& states) const {
  return net_forward(actor, states).array().tanh();
}

Vector ActorCriticLearner::greedy_action(const Vector& state) const {
  return net_forward(actor_, state).array().tanh();
}

Vector ActorCriticLearner::act(const Vector& state) {
  Vector action(action_dim_);
  if (steps_seen_ < cfg_.pretrain_steps) {
    for (int d = 0; d < action_dim_; ++d) action[d] = rng_.uniform(-1.0, 1.0);
    return action;
  }
  if (cfg_.explore == ExploreMode::Replace) {
    if (rng_.uniform01() < cfg_.epsilon) {
      for (int d = 0; d < action_dim_; ++d) action[d] = rng_.uniform(-1.0, 1.0);
      return action;
    }
    return greedy_action(state);
  }
  action = greedy_action(state);
  for (int d = 0; d < action_dim_; ++d)
    action[d] = std::clamp(action[d] + cfg_.explore_sigma * rng_.normal(), -1.0, 1.0);
  return action;
}

void ActorCriticLearner::observe(const Vector& state, const Vector& action,
                                 double reward, const Vector& next_state) {
  buffer_.push(state, action, reward - cfg_.reward_shift, next_state);
  ++steps_seen_;
}

double ActorCriticLearner::actor_step(const Matrix& states) {
  // Ascend the online critic's value at the policy's actions: backpropagate
  // -mean(Q(s, tanh(actor(s)))) through the critic's inputs into the actor.
  ForwardTrace trace;
  Matrix pre = net_forward_trace(actor_, states, trace);
  Matrix actions = pre.array().tanh();
  BackwardResult chained = net_backward(critic_, vstack(states, actions),
                                        LossHead::CriticChain, LossArgs{}, true);
  Matrix d_action = chained.grads.input_grad.bottomRows(action_dim_);
  Matrix d_pre = d_action.cwiseProduct((1.0 - actions.array().square()).matrix());
  GradientBundle actor_grads = net_backprop(actor_, trace, d_pre);
  adam_step(actor_, actor_grads, actor_opt_);
  return chained.loss;
}

void ActorCriticLearner::soft_update_targets() {
  soft_update(critic_target_, critic_, cfg_.target_mix);
  soft_update(actor_target_, actor_, cfg_.target_mix);
}

// ---------------------------------------------------------------------------
// MMQAgent
// ---------------------------------------------------------------------------

MMQAgent::MMQAgent(AgentConfig cfg, int state_dim, int action_dim,
                   Vector state_lower, Vector state_upper, std::uint64_t seed)
    : ActorCriticLearner(std::move(cfg), state_dim, action_dim, seed),
      state_lower_(std::move(state_lower)),
      state_upper_(std::move(state_upper)) {
  if (state_lower_.size() != state_dim_ || state_upper_.size() != state_dim_)
    throw ShapeError("MMQAgent: state bounds must match state_dim");
  // Seeds continue the stream the base class started; the order is fixed so
  // runs reproduce exactly.
  g_low_ = net_init(layer_plan(state_dim_ + action_dim_, cfg_.hidden, state_dim_),
                    rng_.next_u64());
  g_high_ = net_init(layer_plan(state_dim_ + action_dim_, cfg_.hidden, state_dim_),
                     rng_.next_u64());
  gaussian_ = net_init(
      layer_plan(state_dim_ + action_dim_, cfg_.hidden, 2 * state_dim_),
      rng_.next_u64());
  reward_ = net_init(layer_plan(2 * state_dim_, cfg_.hidden, 1), rng_.next_u64());
  g_low_opt_ = adam_init(g_low_, cfg_.learning_rate);
  g_high_opt_ = adam_init(g_high_, cfg_.learning_rate);
  gaussian_opt_ = adam_init(gaussian_, cfg_.learning_rate);
  reward_opt_ = adam_init(reward_, cfg_.learning_rate);
}

void MMQAgent::envelope(const Matrix& states, const Matrix& actions,
                        Matrix& lower, Matrix& upper) const {
  Matrix sa = vstack(states, actions);
  if (!cfg_.gaussian_model) {
    Matrix lo = net_forward(g_low_, sa);
    Matrix hi = net_forward(g_high_, sa);
    // Crossed quantile outputs are reordered dimension-wise.
    lower = lo.cwiseMin(hi);
    upper = lo.cwiseMax(hi);
    return;
  }
  Matrix out = net_forward(gaussian_, sa);
  Matrix mu = out.topRows(state_dim_);
  Matrix sigma = out.bottomRows(state_dim_)
                     .array()
                     .min(kLogVarMax)
                     .max(kLogVarMin)
                     .exp()
                     .sqrt()
                     .matrix();
  double z = inverse_normal_cdf(cfg_.tau_high);
  lower = mu - z * sigma;
  upper = mu + z * sigma;
}

Matrix MMQAgent::candidate_block(const Matrix& states, const Matrix& actions,
                                 const Matrix& next_states) {
  const int B = static_cast<int>(states.cols());
  const int K = cfg_.num_candidates + 1;
  Matrix lower, upper;
  envelope(states, actions, lower, upper);
  Matrix candidates(state_dim_, B * K);
  for (int b = 0; b < B; ++b) {
    candidates.col(b * K) = next_states.col(b);  // the observed next state
    for (int j = 1; j < K; ++j) {
      for (int d = 0; d < state_dim_; ++d) {
        double v = rng_.uniform(lower(d, b), upper(d, b));
        candidates(d, b * K + j) = std::clamp(v, state_lower_[d], state_upper_[d]);
      }
    }
  }
  return candidates;
}

Matrix MMQAgent::batch_targets(const ReplayBuffer::Batch& batch) {
  const int B = static_cast<int>(batch.states.cols());
  const int K = cfg_.num_candidates + 1;
  Matrix candidates = candidate_block(batch.states, batch.actions, batch.next_states);

  Matrix states_rep(state_dim_, B * K);
  for (int b = 0; b < B; ++b)
    states_rep.middleCols(b * K, K).colwise() = batch.states.col(b);

  // Everything below is a constant w.r.t. the online critic: the learned
  // reward, the target actor and the target critic never receive gradients
  // from the critic loss.
  Matrix rhat = net_forward(reward_, vstack(states_rep, candidates));
  Matrix next_actions = policy(actor_target_, candidates);
  Matrix q_next = net_forward(critic_target_, vstack(candidates, next_actions));

  Matrix targets(1, B);
  for (int b = 0; b < B; ++b) {
    double best = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < K; ++k) {
      double y = rhat(0, b * K + k) + cfg_.gamma * q_next(0, b * K + k);
      if (y > best) best = y;  // ties keep the earliest candidate
    }
    targets(0, b) = best;
  }
  return targets;
}

std::vector<Vector> MMQAgent::sample_candidates(const Vector& state,
                                                const Vector& action,
                                                const Vector& next_state) {
  Matrix block = candidate_block(Matrix(state), Matrix(action), Matrix(next_state));
  std::vector<Vector> out;
  out.reserve(block.cols());
  for (Eigen::Index k = 0; k < block.cols(); ++k) out.emplace_back(block.col(k));
  return out;
}

double MMQAgent::compute_target(const Vector& state,
                                const std::vector<Vector>& candidates) const {
  if (candidates.empty())
    throw ConfigError("compute_target: candidate set must not be empty");
  const int K = static_cast<int>(candidates.size());
  Matrix block(state_dim_, K);
  for (int k = 0; k < K; ++k) {
    if (candidates[k].size() != state_dim_)
      throw ShapeError("compute_target: candidate dimension mismatch");
    block.col(k) = candidates[k];
  }
  Matrix states_rep = state.replicate(1, K);
  Matrix rhat = net_forward(reward_, vstack(states_rep, block));
  Matrix next_actions = policy(actor_target_, block);
  Matrix q_next = net_forward(critic_target_, vstack(block, next_actions));
  double best = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < K; ++k) {
    double y = rhat(0, k) + cfg_.gamma * q_next(0, k);
    if (y > best) best = y;
  }
  return best;
}

double MMQAgent::coverage_statistic(const Matrix& states, const Matrix& actions,
                                    const Matrix& next_states) const {
  Matrix lower, upper;
  envelope(states, actions, lower, upper);
  long contained = ((next_states.array() >= lower.array()) &&
                    (next_states.array() <= upper.array()))
                       .count();
  return 100.0 * static_cast<double>(contained) /
         static_cast<double>(next_states.size());
}

double MMQAgent::held_out_coverage(int batch_size, Rng& rng) const {
  ReplayBuffer::Batch batch = buffer_.sample(batch_size, rng);
  return coverage_statistic(batch.states, batch.actions, batch.next_states);
}

double MMQAgent::mean_bound_width(int batch_size, Rng& rng) const {
  ReplayBuffer::Batch batch = buffer_.sample(batch_size, rng);
  Matrix lower, upper;
  envelope(batch.states, batch.actions, lower, upper);
  return (upper - lower).mean();
}

TriggerDiagnostics MMQAgent::train_trigger() {
  TriggerDiagnostics diag;
  if (steps_seen_ <= cfg_.pretrain_steps || buffer_.size() < cfg_.batch_size)
    return diag;

  ReplayBuffer::Batch batch = buffer_.sample(cfg_.batch_size, rng_);
  Matrix sa = vstack(batch.states, batch.actions);

  // 1. Next-state model.
  if (!cfg_.gaussian_model) {
    LossArgs args;
    args.target = batch.next_states;
    args.tau = cfg_.tau_low;
    BackwardResult low = net_backward(g_low_, sa, LossHead::Pinball, args);
    adam_step(g_low_, low.grads, g_low_opt_);
    args.tau = cfg_.tau_high;
    BackwardResult high = net_backward(g_high_, sa, LossHead::Pinball, args);
    adam_step(g_high_, high.grads, g_high_opt_);
    diag.quantile_loss_low = low.loss;
    diag.quantile_loss_high = high.loss;
  } else {
    LossArgs args;
    args.target = batch.next_states;
    BackwardResult fit = net_backward(gaussian_, sa, LossHead::GaussianNll, args);
    adam_step(gaussian_, fit.grads, gaussian_opt_);
    diag.quantile_loss_low = fit.loss;
    diag.quantile_loss_high = fit.loss;
  }

  // 2. Critic, against optimistic targets built from the fresh model.
  if (cfg_.resample_critic_batches) {
    for (int k = 0; k < cfg_.critic_ratio; ++k) {
      ReplayBuffer::Batch cb = buffer_.sample(cfg_.batch_size, rng_);
      LossArgs args;
      args.target = batch_targets(cb);
      BackwardResult step = net_backward(critic_, vstack(cb.states, cb.actions),
                                         LossHead::Mse, args);
      adam_step(critic_, step.grads, critic_opt_);
      diag.critic_loss = step.loss;
    }
  } else {
    LossArgs args;
    args.target = batch_targets(batch);
    for (int k = 0; k < cfg_.critic_ratio; ++k) {
      BackwardResult step = net_backward(critic_, sa, LossHead::Mse, args);
      adam_step(critic_, step.grads, critic_opt_);
      diag.critic_loss = step.loss;
    }
  }

  // 3. Reward model on observed (s, s') pairs.
  {
    LossArgs args;
    args.target = batch.rewards;
    BackwardResult fit = net_backward(
        reward_, vstack(batch.states, batch.next_states), LossHead::Mse, args);
    adam_step(reward_, fit.grads, reward_opt_);
    diag.reward_model_loss = fit.loss;
  }

  // 4. Delayed actor ascent on the same batch's states.
  diag.actor_loss = actor_step(batch.states);

  // 5. Target nets trail the online nets.
  soft_update_targets();

  // Envelope health on this batch, after the model update.
  diag.coverage =
      coverage_statistic(batch.states, batch.actions, batch.next_states);
  Matrix lower, upper;
  envelope(batch.states, batch.actions, lower, upper);
  diag.bound_width = (upper - lower).mean();
  diag.updated = true;
  return diag;
}

std::vector<std::pair<std::string, FeedForwardNet*>> MMQAgent::nets() {
  return {{"actor", &actor_},          {"actor_target", &actor_target_},
          {"critic", &critic_},        {"critic_target", &critic_target_},
          {"quantile_low", &g_low_},   {"quantile_high", &g_high_},
          {"gaussian", &gaussian_},    {"reward", &reward_}};
}

// ---------------------------------------------------------------------------
// DdpgAgent
// ---------------------------------------------------------------------------

DdpgAgent::DdpgAgent(AgentConfig cfg, int state_dim, int action_dim,
                     std::uint64_t seed)
    : ActorCriticLearner(std::move(cfg), state_dim, action_dim, seed) {}

std::string DdpgAgent::algo() const {
  return cfg_.beta < 1.0 ? "hyddpg" : "iddpg";
}

Matrix DdpgAgent::batch_targets(const ReplayBuffer::Batch& batch) const {
  Matrix next_actions = policy(actor_target_, batch.next_states);
  Matrix q_next =
      net_forward(critic_target_, vstack(batch.next_states, next_actions));
  return batch.rewards + cfg_.gamma * q_next;
}

double hysteretic_critic_gradients(const FeedForwardNet& critic,
                                   const Matrix& states_actions,
                                   const Matrix& targets, double beta,
                                   GradientBundle& out) {
  const double B = static_cast<double>(states_actions.cols());
  ForwardTrace trace;
  Matrix q = net_forward_trace(critic, states_actions, trace);
  if (targets.rows() != q.rows() || targets.cols() != q.cols())
    throw ShapeError("hysteretic_critic_gradients: target shape mismatch");
  Matrix err = q - targets;  // err > 0 means the TD error is negative
  double loss = 0.0;
  Matrix dq(1, err.cols());
  for (Eigen::Index b = 0; b < err.cols(); ++b) {
    double w = err(0, b) > 0.0 ? beta : 1.0;
    loss += w * err(0, b) * err(0, b);
    dq(0, b) = 2.0 * w * err(0, b) / B;
  }
  out = net_backprop(critic, trace, dq);
  return loss / B;
}

TriggerDiagnostics DdpgAgent::train_trigger() {
  TriggerDiagnostics diag;
  if (steps_seen_ <= cfg_.pretrain_steps || buffer_.size() < cfg_.batch_size)
    return diag;

  ReplayBuffer::Batch batch = buffer_.sample(cfg_.batch_size, rng_);

  // Critic regression toward the bootstrap target; updates driven by a
  // negative TD error are scaled by beta (no-op at beta = 1).
  auto critic_step = [&](const ReplayBuffer::Batch& cb, const Matrix& targets) {
    GradientBundle grads;
    double loss = hysteretic_critic_gradients(
        critic_, vstack(cb.states, cb.actions), targets, cfg_.beta, grads);
    adam_step(critic_, grads, critic_opt_);
    return loss;
  };

  if (cfg_.resample_critic_batches) {
    for (int k = 0; k < cfg_.critic_ratio; ++k) {
      ReplayBuffer::Batch cb = buffer_.sample(cfg_.batch_size, rng_);
      diag.critic_loss = critic_step(cb, batch_targets(cb));
    }
  } else {
    Matrix targets = batch_targets(batch);
    for (int k = 0; k < cfg_.critic_ratio; ++k)
      diag.critic_loss = critic_step(batch, targets);
  }

  diag.actor_loss = actor_step(batch.states);

  soft_update_targets();
  diag.updated = true;
  return diag;
}

std::vector<std::pair<std::string, FeedForwardNet*>> DdpgAgent::nets() {
  return {{"actor", &actor_},
          {"actor_target", &actor_target_},
          {"critic", &critic_},
          {"critic_target", &critic_target_}};
}

// ---------------------------------------------------------------------------
// Factory
// ---------------------------------------------------------------------------

std::unique_ptr<Learner> make_learner(const std::string& algo, AgentConfig cfg,
                                      int state_dim, int action_dim,
                                      const Vector& state_lower,
                                      const Vector& state_upper,
                                      std::uint64_t seed) {
  if (algo == "mmq")
    return std::make_unique<MMQAgent>(std::move(cfg), state_dim, action_dim,
                                      state_lower, state_upper, seed);
  if (algo == "iddpg") {
    cfg.beta = 1.0;
    return std::make_unique<DdpgAgent>(std::move(cfg), state_dim, action_dim, seed);
  }
  if (algo == "hyddpg")
    return std::make_unique<DdpgAgent>(std::move(cfg), state_dim, action_dim, seed);
  throw ConfigError("make_learner: unknown algorithm '" + algo + "'");
}

// ---------------------------------------------------------------------------
// Tabular learners
// ---------------------------------------------------------------------------

TabularResult tabular_matrix_learn(TabularRule rule, int episodes,
                                   double learning_rate, double explore_prob,
                                   Rng& rng, const std::array<double, 3>* q_init) {
  if (episodes <= 0) throw ConfigError("tabular_matrix_learn: episodes <= 0");
  if (learning_rate <= 0 || learning_rate > 1)
    throw ConfigError("tabular_matrix_learn: learning_rate outside (0, 1]");
  if (explore_prob < 0 || explore_prob > 1)
    throw ConfigError("tabular_matrix_learn: explore_prob outside [0, 1]");

  std::array<double, 3> q1 = q_init ? *q_init : std::array<double, 3>{};
  std::array<double, 3> q2 = q_init ? *q_init : std::array<double, 3>{};
  auto greedy = [](const std::array<double, 3>& q) {
    int best = 0;
    for (int a = 1; a < kMatrixActions; ++a)
      if (q[a] > q[best]) best = a;  // first index wins ties
    return best;
  };
  auto pick = [&](const std::array<double, 3>& q) {
    return rng.uniform01() < explore_prob ? rng.uniform_int(kMatrixActions)
                                          : greedy(q);
  };
  auto learn = [&](std::array<double, 3>& q, int action, double payoff) {
    if (rule == TabularRule::OptimisticMax && payoff < q[action]) return;
    q[action] += learning_rate * (payoff - q[action]);
  };

  for (int e = 0; e < episodes; ++e) {
    int a1 = pick(q1);
    int a2 = pick(q2);
    double payoff = matrix_payoff(a1, a2);
    learn(q1, a1, payoff);
    learn(q2, a2, payoff);
  }

  TabularResult result;
  result.q1 = q1;
  result.q2 = q2;
  result.greedy1 = greedy(q1);
  result.greedy2 = greedy(q2);
  return result;
}

}  // namespace mmq
