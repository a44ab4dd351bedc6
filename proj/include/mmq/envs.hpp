#pragma once
#include <array>
#include <memory>
#include <string>
#include <vector>

#include "mmq/net.hpp"
#include "mmq/rng.hpp"

namespace mmq {

// ---------------------------------------------------------------------------
// Common environment surface.
//
// States are flat vectors shared by all agents (fully observed), actions are
// per-agent boxes [-1, 1]^action_dim, episodes end on a fixed step count.
// state_lower/upper give a bounding box that every reachable state satisfies;
// model-based samplers clamp synthetic states into it.
// ---------------------------------------------------------------------------

struct StepResult {
  Vector next_state;
  double reward = 0.0;
  bool done = false;
};

struct NoiseConfig {
  double sigma_state = 0.0;   // additive Gaussian on the state transition
  double sigma_reward = 0.0;  // additive Gaussian on the reward
};

class Env {
 public:
  virtual ~Env() = default;
  virtual std::string name() const = 0;
  virtual int num_agents() const = 0;
  virtual int state_dim() const = 0;
  virtual int action_dim() const = 0;  // per agent
  virtual int episode_length() const = 0;
  virtual const Vector& state_lower() const = 0;
  virtual const Vector& state_upper() const = 0;
  virtual Vector reset(Rng& rng) = 0;
  // joint_action stacks per-agent actions: size num_agents() * action_dim().
  // Components outside [-1, 1] are clamped before the dynamics apply.
  virtual StepResult step(const Vector& joint_action, Rng& rng) = 0;
  virtual std::unique_ptr<Env> clone() const = 0;
};

// ---------------------------------------------------------------------------
// Differential game: N agents on a line segment.
// ---------------------------------------------------------------------------

// Root-mean-square style distance of the team from the origin, scaled so the
// two-agent case reduces to the Euclidean norm.
double dg_location_metric(const Vector& positions);

// Piecewise reward over the location metric: an optimal cosine bump of height
// 2a at the center, a zero plateau, and a suboptimal bump of height 2b around
// l = 0.8.  The zero-reward gap between the bumps widens with more agents.
double dg_reward(double location, int num_agents);

// Width of the central optimal region for an N-agent game.
double dg_inner_radius(int num_agents);

class DiffGame final : public Env {
 public:
  explicit DiffGame(int num_agents, NoiseConfig noise = {});
  std::string name() const override { return "dg"; }
  int num_agents() const override { return n_; }
  int state_dim() const override { return n_; }
  int action_dim() const override { return 1; }
  int episode_length() const override { return 25; }
  const Vector& state_lower() const override { return lower_; }
  const Vector& state_upper() const override { return upper_; }
  Vector reset(Rng& rng) override;
  StepResult step(const Vector& joint_action, Rng& rng) override;
  std::unique_ptr<Env> clone() const override;

 private:
  int n_;
  NoiseConfig noise_;
  Vector lower_, upper_;
  Vector state_;
  int steps_ = 0;
};

// ---------------------------------------------------------------------------
// Particle tasks on a 2-D arena.
//
// Agents are velocity-damped point masses steered by acceleration commands.
// Rewards revolve around disk-shaped targets and follow a three-case rule:
// everyone inside the disk earns the inside reward, nobody inside earns the
// outside reward, and a partial visit earns the outside reward minus a
// penalty.  The variants change targets, radii, speeds and constants.
// ---------------------------------------------------------------------------

enum class MpeVariant {
  CooperativeNavigation,  // one target
  MorePenalty,            // CN with a steeper solo-entry penalty
  HeterogeneousTargets,   // two targets worth different rewards
  HeterogeneousAgents,    // CN with differing agent sizes and speeds
  SequentialTask,         // pick up at target B, then deliver to target A
  PredatorPrey,           // the target is a fleeing prey
};

struct MpeTaskSpec {
  MpeVariant variant = MpeVariant::CooperativeNavigation;
  int num_agents = 2;
  std::vector<double> agent_radius;  // per agent
  std::vector<double> speed_mult;    // per agent
  double target_radius = 0.05;
  double alpha = 0.2;       // widens the scoring disk: disk radius = target_radius + alpha
  double penalty = 0.2;     // solo-entry penalty p
  double prey_speed = 1.3;  // PredatorPrey only
  int episode_len = 25;

  int num_targets() const;
  double disk_radius() const { return target_radius + alpha; }
  double outside_reward() const { return -3.0 * (disk_radius() + 0.15); }
};

// Canonical task parameterizations.
MpeTaskSpec mpe_task(MpeVariant variant, int num_agents = 2);

// State layout: [x_i, y_i, vx_i, vy_i] per agent, then [x, y] per target,
// then a 0/1 cargo flag for the sequential task.
int mpe_state_dim(const MpeTaskSpec& spec);
Eigen::Vector2d mpe_agent_pos(const MpeTaskSpec& spec, const Vector& state, int agent);
Eigen::Vector2d mpe_agent_vel(const MpeTaskSpec& spec, const Vector& state, int agent);
Eigen::Vector2d mpe_target_pos(const MpeTaskSpec& spec, const Vector& state, int target);
double mpe_cargo(const MpeTaskSpec& spec, const Vector& state);

// Team reward for a (post-transition) state.
double mpe_reward(const MpeTaskSpec& spec, const Vector& state);

// Scripted prey: accelerate away from the nearest predator (ties broken by
// the lowest agent index), reflecting the flight direction off nearby walls.
Eigen::Vector2d pp_prey_action(const MpeTaskSpec& spec, const Vector& state);

class MpeEnv final : public Env {
 public:
  explicit MpeEnv(MpeTaskSpec spec, NoiseConfig noise = {});
  std::string name() const override;
  int num_agents() const override { return spec_.num_agents; }
  int state_dim() const override { return mpe_state_dim(spec_); }
  int action_dim() const override { return 2; }
  int episode_length() const override { return spec_.episode_len; }
  const Vector& state_lower() const override { return lower_; }
  const Vector& state_upper() const override { return upper_; }
  Vector reset(Rng& rng) override;
  StepResult step(const Vector& joint_action, Rng& rng) override;
  std::unique_ptr<Env> clone() const override;
  const MpeTaskSpec& task() const { return spec_; }

 private:
  MpeTaskSpec spec_;
  NoiseConfig noise_;
  Vector lower_, upper_;
  Vector state_;
  Eigen::Vector2d prey_vel_{0.0, 0.0};
  int steps_ = 0;
};

// Arena half-width: positions live in [-kMpeArena, kMpeArena]^2.
constexpr double kMpeArena = 1.5;

// ---------------------------------------------------------------------------
// 3x3 one-shot matrix game.
//
// Both players choosing action 0 pays the jackpot; pairing action 0 with
// anything else is heavily punished; the remaining pairs are neutral.  The
// game is the minimal example of the miscoordination trap: under an averaging
// update the jackpot action looks bad unless the other player already
// commits to it.
// ---------------------------------------------------------------------------

constexpr int kMatrixActions = 3;

double matrix_payoff(int action1, int action2);

// Expected payoff of each own action against a mixed opponent strategy.
std::array<double, 3> matrix_expected_q(const std::array<double, 3>& opponent_probs);

// Opponent commitment level q at which the jackpot action's expected payoff
// overtakes the safe actions, found by bisection on
// opponent = (q, (1-q)/2, (1-q)/2).
double matrix_crossover_threshold();

// ---------------------------------------------------------------------------
// Factory.
// ---------------------------------------------------------------------------

struct EnvParams {
  std::string name = "dg";  // dg, cn, cn_more_penalty, ht, ha, seq, pp
  int num_agents = 2;
  NoiseConfig noise;
};

std::unique_ptr<Env> make_env(const EnvParams& params);

}  // namespace mmq
