#include "mmq/envs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mmq {

namespace {

inline double clip(double v, double lo, double hi) {
  return std::min(std::max(v, lo), hi);
}

}  // namespace

// ---------------------------------------------------------------------------
// Differential game.
// ---------------------------------------------------------------------------

double dg_location_metric(const Vector& positions) {
  double n = static_cast<double>(positions.size());
  return std::sqrt(2.0 / n * positions.squaredNorm());
}

double dg_inner_radius(int num_agents) {
  return 0.13 * (num_agents - 1);
}

double dg_reward(double location, int num_agents) {
  constexpr double a = 0.5, b = 0.15;
  double m = dg_inner_radius(num_agents);
  if (location <= m) return a * (std::cos(location * M_PI / m) + 1.0);
  if (location <= 0.6) return 0.0;
  if (location <= 1.0) return b * (std::cos(5.0 * M_PI * (location - 0.8)) + 1.0);
  return 0.0;
}

DiffGame::DiffGame(int num_agents, NoiseConfig noise) : n_(num_agents), noise_(noise) {
  if (num_agents < 2) throw ConfigError("DiffGame: need at least 2 agents");
  lower_ = Vector::Constant(n_, -1.0);
  upper_ = Vector::Constant(n_, 1.0);
  state_ = Vector::Zero(n_);
}

Vector DiffGame::reset(Rng& rng) {
  for (int i = 0; i < n_; ++i) state_[i] = rng.uniform(-1.0, 1.0);
  steps_ = 0;
  return state_;
}

StepResult DiffGame::step(const Vector& joint_action, Rng& rng) {
  if (joint_action.size() != n_)
    throw ShapeError("DiffGame::step: joint action size mismatch");
  for (int i = 0; i < n_; ++i) {
    double a = clip(joint_action[i], -1.0, 1.0);
    double x = state_[i] + 0.1 * a;
    if (noise_.sigma_state > 0.0) x += noise_.sigma_state * rng.normal();
    state_[i] = clip(x, -1.0, 1.0);
  }
  StepResult result;
  result.reward = dg_reward(dg_location_metric(state_), n_);
  if (noise_.sigma_reward > 0.0) result.reward += noise_.sigma_reward * rng.normal();
  result.next_state = state_;
  result.done = ++steps_ >= episode_length();
  return result;
}

std::unique_ptr<Env> DiffGame::clone() const {
  return std::make_unique<DiffGame>(*this);
}

// ---------------------------------------------------------------------------
// Particle tasks.
// ---------------------------------------------------------------------------

int MpeTaskSpec::num_targets() const {
  switch (variant) {
    case MpeVariant::HeterogeneousTargets:
    case MpeVariant::SequentialTask:
      return 2;
    default:
      return 1;
  }
}

MpeTaskSpec mpe_task(MpeVariant variant, int num_agents) {
  if (num_agents < 2) throw ConfigError("mpe_task: need at least 2 agents");
  MpeTaskSpec spec;
  spec.variant = variant;
  spec.num_agents = num_agents;
  spec.agent_radius.assign(num_agents, 0.15);
  spec.speed_mult.assign(num_agents, 1.0);
  switch (variant) {
    case MpeVariant::CooperativeNavigation:
      spec.penalty = 0.2;
      break;
    case MpeVariant::MorePenalty:
      spec.penalty = 0.5;
      break;
    case MpeVariant::HeterogeneousTargets:
      spec.penalty = 0.5;  // applies to the high-value target
      break;
    case MpeVariant::HeterogeneousAgents:
      spec.penalty = 0.2;
      spec.agent_radius = {0.15, 0.20};
      spec.speed_mult = {1.0, 0.7};
      if (num_agents != 2)
        throw ConfigError("mpe_task: the heterogeneous-agent task is two-agent");
      break;
    case MpeVariant::SequentialTask:
      spec.penalty = 0.5;
      spec.episode_len = 50;
      break;
    case MpeVariant::PredatorPrey:
      spec.alpha = 0.3;
      spec.penalty = 0.5;
      break;
  }
  return spec;
}

int mpe_state_dim(const MpeTaskSpec& spec) {
  int dim = 4 * spec.num_agents + 2 * spec.num_targets();
  if (spec.variant == MpeVariant::SequentialTask) dim += 1;
  return dim;
}

Eigen::Vector2d mpe_agent_pos(const MpeTaskSpec&, const Vector& state, int agent) {
  return state.segment<2>(4 * agent);
}

Eigen::Vector2d mpe_agent_vel(const MpeTaskSpec&, const Vector& state, int agent) {
  return state.segment<2>(4 * agent + 2);
}

Eigen::Vector2d mpe_target_pos(const MpeTaskSpec& spec, const Vector& state,
                               int target) {
  return state.segment<2>(4 * spec.num_agents + 2 * target);
}

double mpe_cargo(const MpeTaskSpec& spec, const Vector& state) {
  if (spec.variant != MpeVariant::SequentialTask) return 0.0;
  return state[state.size() - 1];
}

namespace {

// How many agents sit inside the scoring disk of the given target.
int agents_inside(const MpeTaskSpec& spec, const Vector& state, int target) {
  Eigen::Vector2d t = mpe_target_pos(spec, state, target);
  int count = 0;
  for (int i = 0; i < spec.num_agents; ++i) {
    double reach = spec.agent_radius[i] + spec.disk_radius();
    if ((mpe_agent_pos(spec, state, i) - t).norm() <= reach) ++count;
  }
  return count;
}

double min_dist_to_target(const MpeTaskSpec& spec, const Vector& state, int target) {
  Eigen::Vector2d t = mpe_target_pos(spec, state, target);
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < spec.num_agents; ++i)
    best = std::min(best, (mpe_agent_pos(spec, state, i) - t).norm());
  return best;
}

// The three-case rule shared by every target.
double three_case(int inside, int total, double r_out, double r_in, double p) {
  if (inside == total) return r_in;
  if (inside == 0) return r_out;
  return r_out - p;
}

}  // namespace

double mpe_reward(const MpeTaskSpec& spec, const Vector& state) {
  if (state.size() != mpe_state_dim(spec))
    throw ShapeError("mpe_reward: state size mismatch");
  int n = spec.num_agents;
  switch (spec.variant) {
    case MpeVariant::CooperativeNavigation:
    case MpeVariant::MorePenalty:
    case MpeVariant::HeterogeneousAgents:
    case MpeVariant::PredatorPrey: {
      int inside = agents_inside(spec, state, 0);
      double r_in = -3.0 * min_dist_to_target(spec, state, 0);
      return three_case(inside, n, spec.outside_reward(), r_in, spec.penalty);
    }
    case MpeVariant::HeterogeneousTargets: {
      // Two targets of unequal worth; the team scores its best configuration.
      int in_a = agents_inside(spec, state, 0);
      int in_b = agents_inside(spec, state, 1);
      double via_a = three_case(in_a, n, -3.0, 0.0, spec.penalty);
      double via_b = three_case(in_b, n, -3.0, -2.5, 0.0);
      return std::max(via_a, via_b);
    }
    case MpeVariant::SequentialTask: {
      int in_a = agents_inside(spec, state, 0);
      bool cargo = mpe_cargo(spec, state) > 0.5;
      double r_in = cargo ? -0.5 : -3.0;
      return three_case(in_a, n, -6.0, r_in, spec.penalty);
    }
  }
  throw ConfigError("mpe_reward: unknown variant");
}

Eigen::Vector2d pp_prey_action(const MpeTaskSpec& spec, const Vector& state) {
  Eigen::Vector2d prey = mpe_target_pos(spec, state, 0);
  int nearest = 0;
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < spec.num_agents; ++i) {
    double d = (mpe_agent_pos(spec, state, i) - prey).norm();
    if (d < best) {  // ties keep the lowest index
      best = d;
      nearest = i;
    }
  }
  Eigen::Vector2d dir = prey - mpe_agent_pos(spec, state, nearest);
  if (dir.norm() < 1e-12) dir = Eigen::Vector2d(1.0, 0.0);
  dir.normalize();
  // Flee, but do not run into a wall: flip any component pointing at a wall
  // the prey is already close to.
  constexpr double margin = 0.1;
  for (int ax = 0; ax < 2; ++ax) {
    if (prey[ax] > kMpeArena - margin && dir[ax] > 0.0) dir[ax] = -dir[ax];
    if (prey[ax] < -(kMpeArena - margin) && dir[ax] < 0.0) dir[ax] = -dir[ax];
  }
  return dir;
}

MpeEnv::MpeEnv(MpeTaskSpec spec, NoiseConfig noise)
    : spec_(std::move(spec)), noise_(noise) {
  if (static_cast<int>(spec_.agent_radius.size()) != spec_.num_agents ||
      static_cast<int>(spec_.speed_mult.size()) != spec_.num_agents)
    throw ConfigError("MpeEnv: per-agent parameter lists must match num_agents");
  int dim = mpe_state_dim(spec_);
  lower_ = Vector::Constant(dim, -kMpeArena);
  upper_ = Vector::Constant(dim, kMpeArena);
  for (int i = 0; i < spec_.num_agents; ++i) {
    // Damped integrator's top speed: accel * gain / damping.
    double vmax = 2.0 * spec_.speed_mult[i];
    lower_.segment<2>(4 * i + 2).setConstant(-vmax);
    upper_.segment<2>(4 * i + 2).setConstant(vmax);
  }
  if (spec_.variant == MpeVariant::SequentialTask) {
    lower_[dim - 1] = 0.0;
    upper_[dim - 1] = 1.0;
  }
  state_ = Vector::Zero(dim);
}

std::string MpeEnv::name() const {
  switch (spec_.variant) {
    case MpeVariant::CooperativeNavigation: return "cn";
    case MpeVariant::MorePenalty: return "cn_more_penalty";
    case MpeVariant::HeterogeneousTargets: return "ht";
    case MpeVariant::HeterogeneousAgents: return "ha";
    case MpeVariant::SequentialTask: return "seq";
    case MpeVariant::PredatorPrey: return "pp";
  }
  return "mpe";
}

Vector MpeEnv::reset(Rng& rng) {
  state_.setZero();
  for (int t = 0; t < spec_.num_targets(); ++t) {
    state_[4 * spec_.num_agents + 2 * t] = rng.uniform(-1.0, 1.0);
    state_[4 * spec_.num_agents + 2 * t + 1] = rng.uniform(-1.0, 1.0);
  }
  for (int i = 0; i < spec_.num_agents; ++i) {
    // Spawn outside every scoring disk so episodes never start solved.
    for (int attempt = 0; attempt < 200; ++attempt) {
      Eigen::Vector2d pos(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
      bool clear = true;
      for (int t = 0; t < spec_.num_targets(); ++t) {
        double reach = spec_.agent_radius[i] + spec_.disk_radius();
        if ((pos - mpe_target_pos(spec_, state_, t)).norm() <= reach) clear = false;
      }
      state_.segment<2>(4 * i) = pos;
      if (clear) break;
    }
    state_.segment<2>(4 * i + 2).setZero();
  }
  prey_vel_.setZero();
  steps_ = 0;
  return state_;
}

StepResult MpeEnv::step(const Vector& joint_action, Rng& rng) {
  if (joint_action.size() != 2 * spec_.num_agents)
    throw ShapeError("MpeEnv::step: joint action size mismatch");

  // All movers decide simultaneously, so the prey reacts to the pre-move state.
  Eigen::Vector2d prey_accel = Eigen::Vector2d::Zero();
  if (spec_.variant == MpeVariant::PredatorPrey)
    prey_accel = pp_prey_action(spec_, state_);

  for (int i = 0; i < spec_.num_agents; ++i) {
    Eigen::Vector2d a(clip(joint_action[2 * i], -1.0, 1.0),
                      clip(joint_action[2 * i + 1], -1.0, 1.0));
    Eigen::Vector2d v = mpe_agent_vel(spec_, state_, i);
    v = 0.75 * v + 0.5 * spec_.speed_mult[i] * a;
    Eigen::Vector2d x = mpe_agent_pos(spec_, state_, i) + 0.1 * v;
    if (noise_.sigma_state > 0.0) {
      x[0] += noise_.sigma_state * rng.normal();
      x[1] += noise_.sigma_state * rng.normal();
    }
    x[0] = clip(x[0], -kMpeArena, kMpeArena);
    x[1] = clip(x[1], -kMpeArena, kMpeArena);
    state_.segment<2>(4 * i) = x;
    state_.segment<2>(4 * i + 2) = v;
  }

  if (spec_.variant == MpeVariant::PredatorPrey) {
    prey_vel_ = 0.75 * prey_vel_ + 0.5 * spec_.prey_speed * prey_accel;
    Eigen::Vector2d prey = mpe_target_pos(spec_, state_, 0) + 0.1 * prey_vel_;
    prey[0] = clip(prey[0], -kMpeArena, kMpeArena);
    prey[1] = clip(prey[1], -kMpeArena, kMpeArena);
    state_.segment<2>(4 * spec_.num_agents) = prey;
  }

  if (spec_.variant == MpeVariant::SequentialTask &&
      mpe_cargo(spec_, state_) < 0.5) {
    // Cargo is picked up the first time the whole team covers target B.
    if (agents_inside(spec_, state_, 1) == spec_.num_agents)
      state_[state_.size() - 1] = 1.0;
  }

  StepResult result;
  result.reward = mpe_reward(spec_, state_);
  if (noise_.sigma_reward > 0.0) result.reward += noise_.sigma_reward * rng.normal();
  result.next_state = state_;
  result.done = ++steps_ >= episode_length();
  return result;
}

std::unique_ptr<Env> MpeEnv::clone() const {
  return std::make_unique<MpeEnv>(*this);
}

// ---------------------------------------------------------------------------
// Matrix game.
// ---------------------------------------------------------------------------

double matrix_payoff(int action1, int action2) {
  if (action1 < 0 || action1 >= kMatrixActions || action2 < 0 ||
      action2 >= kMatrixActions)
    throw ConfigError("matrix_payoff: action out of range");
  static const double table[3][3] = {
      {3.0, -6.0, -6.0},
      {-6.0, 0.0, 0.0},
      {-6.0, 0.0, 0.0},
  };
  return table[action1][action2];
}

std::array<double, 3> matrix_expected_q(const std::array<double, 3>& opponent_probs) {
  std::array<double, 3> q{};
  for (int a = 0; a < kMatrixActions; ++a)
    for (int b = 0; b < kMatrixActions; ++b)
      q[a] += opponent_probs[b] * matrix_payoff(a, b);
  return q;
}

double matrix_crossover_threshold() {
  auto advantage = [](double q) {
    std::array<double, 3> probs{q, (1.0 - q) / 2.0, (1.0 - q) / 2.0};
    std::array<double, 3> values = matrix_expected_q(probs);
    return values[0] - std::max(values[1], values[2]);
  };
  double lo = 0.0, hi = 1.0;
  for (int iter = 0; iter < 200; ++iter) {
    double mid = 0.5 * (lo + hi);
    (advantage(mid) < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// ---------------------------------------------------------------------------
// Factory.
// ---------------------------------------------------------------------------

std::unique_ptr<Env> make_env(const EnvParams& params) {
  if (params.name == "dg")
    return std::make_unique<DiffGame>(params.num_agents, params.noise);
  MpeVariant variant;
  if (params.name == "cn")
    variant = MpeVariant::CooperativeNavigation;
  else if (params.name == "cn_more_penalty")
    variant = MpeVariant::MorePenalty;
  else if (params.name == "ht")
    variant = MpeVariant::HeterogeneousTargets;
  else if (params.name == "ha")
    variant = MpeVariant::HeterogeneousAgents;
  else if (params.name == "seq")
    variant = MpeVariant::SequentialTask;
  else if (params.name == "pp")
    variant = MpeVariant::PredatorPrey;
  else
    throw ConfigError("make_env: unknown environment '" + params.name + "'");
  return std::make_unique<MpeEnv>(mpe_task(variant, params.num_agents), params.noise);
}

}  // namespace mmq
