#pragma once

#include <vector>

#include "mmq/rng.hpp"

namespace mmq {

// Finite two-agent MDP with a deterministic joint transition table and a
// reward that depends only on (state, next state). Small enough to brute
// force, which is the whole point: the fixed-point claims about the
// double-max backup are checked here exactly.
struct FiniteJointMdp {
  int num_states = 0;
  int actions1 = 0;  // agent 1 action count
  int actions2 = 0;  // agent 2 action count
  double gamma = 0.9;
  std::vector<int> transition;  // [s][a1][a2] -> s', flattened
  std::vector<double> reward;   // [s][s'] -> r, flattened

  int next_state(int s, int a1, int a2) const;
  double reward_at(int s, int next) const;
  int num_joint_actions() const { return actions1 * actions2; }
  // Throws ConfigError on shape mismatch, out-of-range transition entries,
  // non-finite rewards, or gamma outside [0, 1).
  void validate() const;
};

// Uniformly random transition table, rewards drawn U(-1, 1).
FiniteJointMdp random_mdp(int num_states, int actions1, int actions2,
                          double gamma, Rng& rng);

// Exact set of states reachable from (s, a_i) as the other agent's action
// ranges over its full set. Entry [s * A_i + a_i] is sorted and unique.
// agent is 0 or 1.
std::vector<std::vector<int>> reachable_sets(const FiniteJointMdp& mdp,
                                             int agent);

struct JointValueResult {
  std::vector<double> q;  // [s][a1*A2+a2] joint optimal Q
  std::vector<double> v;  // optimal state values
  int sweeps = 0;
};

// Value iteration on the joint MDP. Throws NumericError if the sup-norm
// change has not dropped below tol within max_sweeps sweeps.
JointValueResult joint_value_iteration(const FiniteJointMdp& mdp,
                                       double tol = 1e-13,
                                       int max_sweeps = 100000);

// Whether a backup selects the best or the worst next state in its set.
enum class PickRule { Best, Worst };

// One sweep of the per-agent backup over explicit candidate sets:
//   (T q)(s, a_i) = pick_{s' in sets[s * A_i + a_i]} (R(s, s') +
//                    gamma * max_{a'} q(s', a'))
// q is the agent's table flattened [s][a_i]. sets entries must be nonempty.
std::vector<double> apply_agent_operator(
    const FiniteJointMdp& mdp, int agent,
    const std::vector<std::vector<int>>& sets, const std::vector<double>& q,
    PickRule pick = PickRule::Best);

struct IndividualFixedPoint {
  std::vector<double> q;  // [s][a_i]
  int sweeps = 0;
};

// Fixed point of the best-pick operator over the exact reachable sets.
// Same convergence contract as joint_value_iteration.
IndividualFixedPoint individual_fixed_point(const FiniteJointMdp& mdp,
                                            int agent, double tol = 1e-13,
                                            int max_sweeps = 100000);

struct AlignmentReport {
  std::vector<double> joint_v;     // max_a Q*(s, a)
  std::vector<double> projected1;  // max_{a1} Q_1(s, a1)
  std::vector<double> projected2;  // max_{a2} Q_2(s, a2)
  double max_gap = 0.0;            // worst |projected - joint_v| anywhere
};

// Solves the joint MDP and both individual fixed points (exact reachable
// sets) and reports how far the max-projected individual tables sit from
// the joint optimum. For deterministic MDPs the gap is zero up to solver
// tolerance.
AlignmentReport alignment_check(const FiniteJointMdp& mdp);

// How candidate sets are drawn for contraction trials.
enum class SubsetRule { Reachable, RandomNonempty, FullSet };

// Sup-norm distances around one application of the operator to two tables.
struct OperatorResult {
  double input_distance = 0.0;
  double output_distance = 0.0;
  // output/input, or 0 when the inputs coincide.
  double ratio() const;
};

// Applies the best-pick operator with one drawn set family to a random
// pair of Q tables.
OperatorResult contraction_trial(const FiniteJointMdp& mdp, int agent,
                                 SubsetRule rule, Rng& rng);

// Max observed ratio over trials (both agents). Always <= gamma for the
// sup-norm contraction to hold.
double contraction_check(const FiniteJointMdp& mdp, SubsetRule rule,
                         int trials, Rng& rng);

struct MinDistanceResult {
  double empirical_mean = 0.0;
  double standard_error = 0.0;
  double closed_form = 0.0;  // (u/(M+1)) * (1 + (|c|/u)^(M+1))
  double bound = 0.0;        // 2u/(M+1)
};

// Draws num_samples points uniformly from [-u, u] per trial and averages
// the distance from c to the nearest draw. Preconditions: u > 0, |c| <= u,
// num_samples >= 1, trials >= 1 (ConfigError otherwise).
MinDistanceResult mc_min_distance_experiment(double u, double c,
                                             int num_samples, int trials,
                                             Rng& rng);

struct EpsilonGapPoint {
  double epsilon = 0.0;
  double gap = 0.0;  // sup-norm distance to the unperturbed fixed point
};

// Degradation of the best-pick fixed point when the selected next state is
// replaced adversarially: states sit on an integer line (state index =
// position), and for each (s, a_i) the backup is forced to the worst-value
// candidate within distance epsilon of the unperturbed optimum's choice.
// Larger balls can only hurt, so the gap is nondecreasing in epsilon and
// zero below unit spacing.
std::vector<EpsilonGapPoint> epsilon_gap_experiment(
    const FiniteJointMdp& mdp, const std::vector<double>& epsilons);

}  // namespace mmq
