#pragma once
#include <array>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "mmq/net.hpp"
#include "mmq/replay.hpp"
#include "mmq/rng.hpp"

namespace mmq {

// ---------------------------------------------------------------------------
// Shared learner configuration (defaults follow the reference setup).
// ---------------------------------------------------------------------------

enum class ExploreMode { Replace, Additive };

struct AgentConfig {
  std::vector<int> hidden{256, 256};
  double learning_rate = 1e-3;
  double gamma = 0.99;
  int batch_size = 100;
  long buffer_capacity = 550000;
  long pretrain_steps = 20000;  // uniform play while the buffer fills
  double epsilon = 0.1;
  ExploreMode explore = ExploreMode::Replace;
  double explore_sigma = 0.1;  // Additive mode only
  int critic_ratio = 10;       // critic steps per trigger (actor gets one)
  double target_mix = 0.01;
  double reward_shift = 0.0;  // subtracted from rewards as they are stored

  // Optimistic-target machinery (ignored by the plain actor-critic learners).
  int num_candidates = 15;  // synthetic next states per transition (M)
  double tau_low = 0.05;
  double tau_high = 0.95;
  bool gaussian_model = false;  // sample candidates from a Gaussian model
                                // instead of quantile bounds

  // Hysteretic critic: weight applied to updates whose TD error is negative.
  // 1.0 recovers the symmetric rule.
  double beta = 1.0;

  // When true each critic step resamples its own batch (and target); when
  // false one batch and one target serve all critic steps of a trigger.
  bool resample_critic_batches = false;

  void validate() const;  // throws ConfigError on nonsense
};

struct TriggerDiagnostics {
  bool updated = false;
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  double reward_model_loss = 0.0;
  double quantile_loss_low = 0.0;
  double quantile_loss_high = 0.0;
  double coverage = 0.0;     // % of next-state dims inside predicted bounds
  double bound_width = 0.0;  // mean upper-lower gap over the batch
};

// ---------------------------------------------------------------------------
// Learner interface used by the harness.  Each agent is fully decentralized:
// it sees the shared state, its own action and the team reward, never the
// other agents' actions or parameters.
// ---------------------------------------------------------------------------

class Learner {
 public:
  virtual ~Learner() = default;
  virtual std::string algo() const = 0;
  virtual int state_dim() const = 0;
  virtual int action_dim() const = 0;
  virtual Vector act(const Vector& state) = 0;  // exploration policy
  virtual Vector greedy_action(const Vector& state) const = 0;
  virtual void observe(const Vector& state, const Vector& action, double reward,
                       const Vector& next_state) = 0;
  virtual TriggerDiagnostics train_trigger() = 0;
  virtual long transitions_seen() const = 0;
  // Named parameter tensors for checkpointing, in a stable order.
  virtual std::vector<std::pair<std::string, FeedForwardNet*>> nets() = 0;
};

// ---------------------------------------------------------------------------
// Common actor-critic plumbing: replay, exploration, the delayed actor and
// target-network bookkeeping.
// ---------------------------------------------------------------------------

class ActorCriticLearner : public Learner {
 public:
  int state_dim() const override { return state_dim_; }
  int action_dim() const override { return action_dim_; }
  Vector act(const Vector& state) override;
  Vector greedy_action(const Vector& state) const override;
  void observe(const Vector& state, const Vector& action, double reward,
               const Vector& next_state) override;
  long transitions_seen() const override { return steps_seen_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  const AgentConfig& config() const { return cfg_; }
  const FeedForwardNet& critic_net() const { return critic_; }
  const FeedForwardNet& actor_net() const { return actor_; }
  long critic_update_count() const { return critic_opt_.step_count; }
  long actor_update_count() const { return actor_opt_.step_count; }

 protected:
  ActorCriticLearner(AgentConfig cfg, int state_dim, int action_dim,
                     std::uint64_t seed);

  Matrix policy(const FeedForwardNet& actor, const Matrix& states) const;
  // One gradient-ascent step of the actor against the online critic on the
  // given states; returns the negated batch value.
  double actor_step(const Matrix& states);
  void soft_update_targets();

  AgentConfig cfg_;
  int state_dim_, action_dim_;
  Rng rng_;
  FeedForwardNet actor_, actor_target_, critic_, critic_target_;
  AdamState actor_opt_, critic_opt_;
  ReplayBuffer buffer_;
  long steps_seen_ = 0;
};

// ---------------------------------------------------------------------------
// Optimistic learner with a learned transition envelope.
//
// Per trigger (after the pretrain phase) it: samples a batch; fits the
// next-state quantile models; builds, per transition, a candidate set of the
// observed next state plus M synthetic states drawn inside the predicted
// envelope; bootstraps each critic target from the best candidate (learned
// reward plus discounted target-critic value, both treated as constants);
// then takes the usual delayed actor step and target updates.
// ---------------------------------------------------------------------------

class MMQAgent final : public ActorCriticLearner {
 public:
  // state_lower/upper bound the state box candidates are clamped into.
  MMQAgent(AgentConfig cfg, int state_dim, int action_dim, Vector state_lower,
           Vector state_upper, std::uint64_t seed);

  std::string algo() const override { return "mmq"; }
  TriggerDiagnostics train_trigger() override;
  std::vector<std::pair<std::string, FeedForwardNet*>> nets() override;

  // Observed next state first, then M draws from the model envelope.
  std::vector<Vector> sample_candidates(const Vector& state, const Vector& action,
                                        const Vector& next_state);
  // Best candidate backup: max over the set of learned reward plus
  // discounted target-critic value.
  double compute_target(const Vector& state,
                        const std::vector<Vector>& candidates) const;

  // Percentage of next-state dimensions that fall inside the predicted
  // envelope, over a batch.
  double coverage_statistic(const Matrix& states, const Matrix& actions,
                            const Matrix& next_states) const;
  // Coverage on a batch sampled fresh from the replay buffer.
  double held_out_coverage(int batch_size, Rng& rng) const;
  // Mean envelope width on a sampled batch.
  double mean_bound_width(int batch_size, Rng& rng) const;

  const FeedForwardNet& reward_net() const { return reward_; }
  FeedForwardNet& quantile_low() { return g_low_; }
  FeedForwardNet& quantile_high() { return g_high_; }
  FeedForwardNet& gaussian_net() { return gaussian_; }

 private:
  // Reordered (lower <= upper) envelope for a batch of (state, action) pairs.
  void envelope(const Matrix& states, const Matrix& actions, Matrix& lower,
                Matrix& upper) const;
  // Candidate tensor for a batch: column b*(M+1) is the observed next state
  // of transition b, followed by its M synthetic draws.
  Matrix candidate_block(const Matrix& states, const Matrix& actions,
                         const Matrix& next_states);
  // Per-transition optimistic targets for a batch (constants w.r.t. the
  // online critic).
  Matrix batch_targets(const ReplayBuffer::Batch& batch);

  Vector state_lower_, state_upper_;
  FeedForwardNet g_low_, g_high_;   // quantile envelope nets
  FeedForwardNet gaussian_;         // mean/log-variance net (alternative sampler)
  FeedForwardNet reward_;           // learned reward of (s, s') pairs
  AdamState g_low_opt_, g_high_opt_, gaussian_opt_, reward_opt_;
};

// ---------------------------------------------------------------------------
// Independent DDPG, optionally hysteretic.
//
// beta = 1 is the plain independent learner; beta < 1 shrinks critic updates
// whose TD error is negative, imitating the optimism of distributed
// Q-learning in continuous spaces.
// ---------------------------------------------------------------------------

class DdpgAgent final : public ActorCriticLearner {
 public:
  DdpgAgent(AgentConfig cfg, int state_dim, int action_dim, std::uint64_t seed);

  std::string algo() const override;
  TriggerDiagnostics train_trigger() override;
  std::vector<std::pair<std::string, FeedForwardNet*>> nets() override;

  // Standard bootstrap target through the target actor and critic.
  Matrix batch_targets(const ReplayBuffer::Batch& batch) const;
};

// Critic regression gradient with per-sample optimism weights: samples whose
// target exceeds the current prediction get weight 1, the rest get beta.
// Returns the weighted loss and fills the gradient bundle.
double hysteretic_critic_gradients(const FeedForwardNet& critic,
                                   const Matrix& states_actions,
                                   const Matrix& targets, double beta,
                                   GradientBundle& out);

// Builds a learner by algorithm name: "mmq", "iddpg" or "hyddpg".
std::unique_ptr<Learner> make_learner(const std::string& algo, AgentConfig cfg,
                                      int state_dim, int action_dim,
                                      const Vector& state_lower,
                                      const Vector& state_upper,
                                      std::uint64_t seed);

// ---------------------------------------------------------------------------
// Tabular learners for the one-shot matrix game.
// ---------------------------------------------------------------------------

enum class TabularRule {
  Average,        // Q steps toward every observed payoff
  OptimisticMax,  // Q steps toward a payoff only when it is not below Q
};

struct TabularResult {
  std::array<double, 3> q1{}, q2{};  // final action values per player
  int greedy1 = 0, greedy2 = 0;      // argmax with first-index tie break
};

// Both players learn their own action values from joint play.  explore_prob
// is the chance of a uniform action instead of the current greedy one.
TabularResult tabular_matrix_learn(TabularRule rule, int episodes,
                                   double learning_rate, double explore_prob,
                                   Rng& rng,
                                   const std::array<double, 3>* q_init = nullptr);

}  // namespace mmq
