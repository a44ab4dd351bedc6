#include "mmq/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "mmq/errors.hpp"

namespace mmq {

namespace {

double sup_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d = std::max(d, std::abs(a[i] - b[i]));
  }
  return d;
}

double row_max(const std::vector<double>& q, int row, int width) {
  double m = q[static_cast<std::size_t>(row) * width];
  for (int j = 1; j < width; ++j) {
    m = std::max(m, q[static_cast<std::size_t>(row) * width + j]);
  }
  return m;
}

}  // namespace

int FiniteJointMdp::next_state(int s, int a1, int a2) const {
  return transition[static_cast<std::size_t>(s * actions1 + a1) * actions2 + a2];
}

double FiniteJointMdp::reward_at(int s, int next) const {
  return reward[static_cast<std::size_t>(s) * num_states + next];
}

void FiniteJointMdp::validate() const {
  if (num_states < 1 || actions1 < 1 || actions2 < 1) {
    throw ConfigError("mdp dimensions must be positive");
  }
  if (!(gamma >= 0.0 && gamma < 1.0)) {
    throw ConfigError("mdp gamma must lie in [0, 1)");
  }
  if (transition.size() != static_cast<std::size_t>(num_states) * actions1 * actions2) {
    throw ConfigError("mdp transition table has wrong size");
  }
  if (reward.size() != static_cast<std::size_t>(num_states) * num_states) {
    throw ConfigError("mdp reward table has wrong size");
  }
  for (int t : transition) {
    if (t < 0 || t >= num_states) {
      throw ConfigError("mdp transition entry out of range");
    }
  }
  for (double r : reward) {
    if (!std::isfinite(r)) throw ConfigError("mdp reward entry not finite");
  }
}

FiniteJointMdp random_mdp(int num_states, int actions1, int actions2,
                          double gamma, Rng& rng) {
  FiniteJointMdp mdp;
  mdp.num_states = num_states;
  mdp.actions1 = actions1;
  mdp.actions2 = actions2;
  mdp.gamma = gamma;
  mdp.transition.resize(static_cast<std::size_t>(num_states) * actions1 * actions2);
  for (int& t : mdp.transition) t = rng.uniform_int(num_states);
  mdp.reward.resize(static_cast<std::size_t>(num_states) * num_states);
  for (double& r : mdp.reward) r = rng.uniform(-1.0, 1.0);
  mdp.validate();
  return mdp;
}

std::vector<std::vector<int>> reachable_sets(const FiniteJointMdp& mdp, int agent) {
  if (agent != 0 && agent != 1) throw ConfigError("agent index must be 0 or 1");
  const int own = agent == 0 ? mdp.actions1 : mdp.actions2;
  const int other = agent == 0 ? mdp.actions2 : mdp.actions1;
  std::vector<std::vector<int>> sets(static_cast<std::size_t>(mdp.num_states) * own);
  for (int s = 0; s < mdp.num_states; ++s) {
    for (int a = 0; a < own; ++a) {
      auto& set = sets[static_cast<std::size_t>(s) * own + a];
      for (int b = 0; b < other; ++b) {
        set.push_back(agent == 0 ? mdp.next_state(s, a, b)
                                 : mdp.next_state(s, b, a));
      }
      std::sort(set.begin(), set.end());
      set.erase(std::unique(set.begin(), set.end()), set.end());
    }
  }
  return sets;
}

JointValueResult joint_value_iteration(const FiniteJointMdp& mdp, double tol,
                                       int max_sweeps) {
  mdp.validate();
  const int na = mdp.num_joint_actions();
  JointValueResult out;
  out.q.assign(static_cast<std::size_t>(mdp.num_states) * na, 0.0);
  out.v.assign(mdp.num_states, 0.0);
  std::vector<double> q_next(out.q.size(), 0.0);
  for (int sweep = 1; sweep <= max_sweeps; ++sweep) {
    for (int s = 0; s < mdp.num_states; ++s) {
      for (int a1 = 0; a1 < mdp.actions1; ++a1) {
        for (int a2 = 0; a2 < mdp.actions2; ++a2) {
          const int next = mdp.next_state(s, a1, a2);
          q_next[static_cast<std::size_t>(s) * na + a1 * mdp.actions2 + a2] =
              mdp.reward_at(s, next) + mdp.gamma * out.v[next];
        }
      }
    }
    const double change = sup_distance(out.q, q_next);
    out.q = q_next;
    for (int s = 0; s < mdp.num_states; ++s) out.v[s] = row_max(out.q, s, na);
    out.sweeps = sweep;
    if (change < tol) return out;
  }
  throw NumericError("joint value iteration did not converge in " +
                     std::to_string(max_sweeps) + " sweeps");
}

std::vector<double> apply_agent_operator(
    const FiniteJointMdp& mdp, int agent,
    const std::vector<std::vector<int>>& sets, const std::vector<double>& q,
    PickRule pick) {
  const int own = agent == 0 ? mdp.actions1 : mdp.actions2;
  if (sets.size() != static_cast<std::size_t>(mdp.num_states) * own) {
    throw ShapeError("candidate set family has wrong size");
  }
  if (q.size() != sets.size()) throw ShapeError("q table has wrong size");
  std::vector<double> out(q.size(), 0.0);
  for (int s = 0; s < mdp.num_states; ++s) {
    for (int a = 0; a < own; ++a) {
      const auto& set = sets[static_cast<std::size_t>(s) * own + a];
      if (set.empty()) throw ConfigError("empty candidate set");
      double best = pick == PickRule::Best
                        ? -std::numeric_limits<double>::infinity()
                        : std::numeric_limits<double>::infinity();
      for (int next : set) {
        const double val =
            mdp.reward_at(s, next) + mdp.gamma * row_max(q, next, own);
        best = pick == PickRule::Best ? std::max(best, val) : std::min(best, val);
      }
      out[static_cast<std::size_t>(s) * own + a] = best;
    }
  }
  return out;
}

namespace {

// Iterates the backup to its fixed point; shared by the best-pick solve
// and the adversarial epsilon sweep.
IndividualFixedPoint solve_fixed_point(const FiniteJointMdp& mdp, int agent,
                                       const std::vector<std::vector<int>>& sets,
                                       PickRule pick, double tol,
                                       int max_sweeps) {
  IndividualFixedPoint out;
  out.q.assign(sets.size(), 0.0);
  for (int sweep = 1; sweep <= max_sweeps; ++sweep) {
    std::vector<double> next = apply_agent_operator(mdp, agent, sets, out.q, pick);
    const double change = sup_distance(out.q, next);
    out.q = std::move(next);
    out.sweeps = sweep;
    if (change < tol) return out;
  }
  throw NumericError("agent fixed point did not converge in " +
                     std::to_string(max_sweeps) + " sweeps");
}

}  // namespace

IndividualFixedPoint individual_fixed_point(const FiniteJointMdp& mdp, int agent,
                                            double tol, int max_sweeps) {
  mdp.validate();
  return solve_fixed_point(mdp, agent, reachable_sets(mdp, agent),
                           PickRule::Best, tol, max_sweeps);
}

AlignmentReport alignment_check(const FiniteJointMdp& mdp) {
  AlignmentReport report;
  const JointValueResult joint = joint_value_iteration(mdp);
  report.joint_v = joint.v;
  const IndividualFixedPoint fp1 = individual_fixed_point(mdp, 0);
  const IndividualFixedPoint fp2 = individual_fixed_point(mdp, 1);
  report.projected1.resize(mdp.num_states);
  report.projected2.resize(mdp.num_states);
  for (int s = 0; s < mdp.num_states; ++s) {
    report.projected1[s] = row_max(fp1.q, s, mdp.actions1);
    report.projected2[s] = row_max(fp2.q, s, mdp.actions2);
    report.max_gap =
        std::max(report.max_gap, std::abs(report.projected1[s] - joint.v[s]));
    report.max_gap =
        std::max(report.max_gap, std::abs(report.projected2[s] - joint.v[s]));
  }
  return report;
}

double OperatorResult::ratio() const {
  return input_distance > 0.0 ? output_distance / input_distance : 0.0;
}

namespace {

std::vector<std::vector<int>> draw_sets(const FiniteJointMdp& mdp, int agent,
                                        SubsetRule rule, Rng& rng) {
  if (rule == SubsetRule::Reachable) return reachable_sets(mdp, agent);
  const int own = agent == 0 ? mdp.actions1 : mdp.actions2;
  std::vector<std::vector<int>> sets(static_cast<std::size_t>(mdp.num_states) * own);
  for (auto& set : sets) {
    if (rule == SubsetRule::FullSet) {
      set.resize(mdp.num_states);
      for (int s = 0; s < mdp.num_states; ++s) set[s] = s;
      continue;
    }
    // Random nonempty subset: each state joins with probability 1/2, plus
    // one forced member so the set is never empty.
    for (int s = 0; s < mdp.num_states; ++s) {
      if (rng.uniform01() < 0.5) set.push_back(s);
    }
    if (set.empty()) set.push_back(rng.uniform_int(mdp.num_states));
  }
  return sets;
}

}  // namespace

OperatorResult contraction_trial(const FiniteJointMdp& mdp, int agent,
                                 SubsetRule rule, Rng& rng) {
  const int own = agent == 0 ? mdp.actions1 : mdp.actions2;
  const std::vector<std::vector<int>> sets = draw_sets(mdp, agent, rule, rng);
  std::vector<double> q1(static_cast<std::size_t>(mdp.num_states) * own);
  std::vector<double> q2(q1.size());
  for (double& v : q1) v = rng.uniform(-10.0, 10.0);
  for (double& v : q2) v = rng.uniform(-10.0, 10.0);
  OperatorResult out;
  out.input_distance = sup_distance(q1, q2);
  out.output_distance = sup_distance(apply_agent_operator(mdp, agent, sets, q1),
                                     apply_agent_operator(mdp, agent, sets, q2));
  return out;
}

double contraction_check(const FiniteJointMdp& mdp, SubsetRule rule, int trials,
                         Rng& rng) {
  mdp.validate();
  if (trials < 1) throw ConfigError("contraction_check needs trials >= 1");
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    worst = std::max(worst, contraction_trial(mdp, 0, rule, rng).ratio());
    worst = std::max(worst, contraction_trial(mdp, 1, rule, rng).ratio());
  }
  return worst;
}

MinDistanceResult mc_min_distance_experiment(double u, double c, int num_samples,
                                             int trials, Rng& rng) {
  if (!(u > 0.0)) throw ConfigError("mc_min_distance_experiment needs u > 0");
  if (std::abs(c) > u) {
    throw ConfigError("mc_min_distance_experiment needs |c| <= u");
  }
  if (num_samples < 1 || trials < 1) {
    throw ConfigError("mc_min_distance_experiment needs positive counts");
  }
  double sum = 0.0;
  double sum_sq = 0.0;
  for (int t = 0; t < trials; ++t) {
    double best = std::numeric_limits<double>::infinity();
    for (int k = 0; k < num_samples; ++k) {
      best = std::min(best, std::abs(c - rng.uniform(-u, u)));
    }
    sum += best;
    sum_sq += best * best;
  }
  MinDistanceResult out;
  out.empirical_mean = sum / trials;
  const double var =
      std::max(0.0, sum_sq / trials - out.empirical_mean * out.empirical_mean);
  out.standard_error = std::sqrt(var / trials);
  out.closed_form = u / (num_samples + 1) *
                    (1.0 + std::pow(std::abs(c) / u, num_samples + 1));
  out.bound = 2.0 * u / (num_samples + 1);
  return out;
}

std::vector<EpsilonGapPoint> epsilon_gap_experiment(
    const FiniteJointMdp& mdp, const std::vector<double>& epsilons) {
  mdp.validate();
  for (double eps : epsilons) {
    if (!(eps >= 0.0)) throw ConfigError("epsilon values must be >= 0");
  }
  std::vector<EpsilonGapPoint> curve(epsilons.size());
  for (std::size_t i = 0; i < epsilons.size(); ++i) curve[i].epsilon = epsilons[i];

  for (int agent = 0; agent < 2; ++agent) {
    const int own = agent == 0 ? mdp.actions1 : mdp.actions2;
    const auto sets = reachable_sets(mdp, agent);
    const IndividualFixedPoint exact = individual_fixed_point(mdp, agent);

    // Freeze the unperturbed optimum's selection at each (s, a).
    std::vector<int> chosen(sets.size(), 0);
    for (std::size_t i = 0; i < sets.size(); ++i) {
      const int s = static_cast<int>(i) / own;
      double best = -std::numeric_limits<double>::infinity();
      for (int next : sets[i]) {
        const double val =
            mdp.reward_at(s, next) + mdp.gamma * row_max(exact.q, next, own);
        if (val > best) {
          best = val;
          chosen[i] = next;
        }
      }
    }

    for (std::size_t e = 0; e < epsilons.size(); ++e) {
      // Candidates within epsilon of the frozen choice; the worst one wins,
      // so growing the ball can only lower the fixed point.
      std::vector<std::vector<int>> balls(sets.size());
      for (std::size_t i = 0; i < sets.size(); ++i) {
        for (int next : sets[i]) {
          if (std::abs(next - chosen[i]) <= epsilons[e]) balls[i].push_back(next);
        }
      }
      const IndividualFixedPoint perturbed =
          solve_fixed_point(mdp, agent, balls, PickRule::Worst, 1e-13, 100000);
      curve[e].gap = std::max(curve[e].gap, sup_distance(perturbed.q, exact.q));
    }
  }
  return curve;
}

}  // namespace mmq
