#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "mmq/envs.hpp"
#include "mmq/errors.hpp"
#include "mmq/theory.hpp"

using namespace mmq;

namespace {

// Two states, gamma 0.5. From state 0 the next state is (a1 + a2) mod 2;
// from state 1 it is a1 regardless of a2. Rewards indexed by (s, s').
FiniteJointMdp small_mdp() {
  FiniteJointMdp mdp;
  mdp.num_states = 2;
  mdp.actions1 = 2;
  mdp.actions2 = 2;
  mdp.gamma = 0.5;
  mdp.transition = {0, 1, 1, 0,   // s=0: (a1+a2) mod 2
                    0, 0, 1, 1};  // s=1: a1
  mdp.reward = {1.0, 2.0,   // from s=0
                3.0, 4.0};  // from s=1
  return mdp;
}

// One state per joint outcome; every state transitions to the outcome of
// the chosen pair, gamma 0, reward = payoff of the outcome entered.
FiniteJointMdp matrix_game_mdp() {
  FiniteJointMdp mdp;
  mdp.num_states = 9;
  mdp.actions1 = 3;
  mdp.actions2 = 3;
  mdp.gamma = 0.0;
  mdp.transition.resize(9 * 9);
  mdp.reward.resize(9 * 9);
  for (int s = 0; s < 9; ++s) {
    for (int a1 = 0; a1 < 3; ++a1) {
      for (int a2 = 0; a2 < 3; ++a2) {
        mdp.transition[static_cast<std::size_t>(s * 3 + a1) * 3 + a2] = a1 * 3 + a2;
      }
    }
    for (int o = 0; o < 9; ++o) {
      mdp.reward[static_cast<std::size_t>(s) * 9 + o] = matrix_payoff(o / 3, o % 3);
    }
  }
  return mdp;
}

// Test-local brute force: best- and worst-selection fixed points computed
// straight from the transition table with plain sweeps, no library calls.
double brute_force_worst_gap(const FiniteJointMdp& mdp) {
  double gap = 0.0;
  for (int agent = 0; agent < 2; ++agent) {
    const int own = agent == 0 ? mdp.actions1 : mdp.actions2;
    const int other = agent == 0 ? mdp.actions2 : mdp.actions1;
    auto solve = [&](bool take_worst) {
      std::vector<double> q(static_cast<std::size_t>(mdp.num_states) * own, 0.0);
      for (int sweep = 0; sweep < 5000; ++sweep) {
        std::vector<double> nq(q.size());
        for (int s = 0; s < mdp.num_states; ++s) {
          for (int a = 0; a < own; ++a) {
            double pick = take_worst ? std::numeric_limits<double>::infinity()
                                     : -std::numeric_limits<double>::infinity();
            for (int b = 0; b < other; ++b) {
              const int next = agent == 0 ? mdp.next_state(s, a, b)
                                          : mdp.next_state(s, b, a);
              double tail = q[static_cast<std::size_t>(next) * own];
              for (int j = 1; j < own; ++j) {
                tail = std::max(tail, q[static_cast<std::size_t>(next) * own + j]);
              }
              const double val = mdp.reward_at(s, next) + mdp.gamma * tail;
              pick = take_worst ? std::min(pick, val) : std::max(pick, val);
            }
            nq[static_cast<std::size_t>(s) * own + a] = pick;
          }
        }
        q = nq;
      }
      return q;
    };
    const std::vector<double> best = solve(false);
    const std::vector<double> worst = solve(true);
    for (std::size_t i = 0; i < best.size(); ++i) {
      gap = std::max(gap, std::abs(best[i] - worst[i]));
    }
  }
  return gap;
}

}  // namespace

// ---------------------------------------------------------------------------
// Model validation and reachable sets.
// ---------------------------------------------------------------------------

TEST_CASE("mdp validation rejects malformed tables") {
  FiniteJointMdp mdp = small_mdp();
  CHECK_NOTHROW(mdp.validate());

  FiniteJointMdp bad = small_mdp();
  bad.transition[2] = 5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = small_mdp();
  bad.reward.pop_back();
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = small_mdp();
  bad.gamma = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = small_mdp();
  bad.gamma = -0.1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = small_mdp();
  bad.reward[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = small_mdp();
  bad.num_states = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("reachable sets enumerate the other agent's influence") {
  const FiniteJointMdp mdp = small_mdp();

  const auto sets1 = reachable_sets(mdp, 0);
  REQUIRE(sets1.size() == 4);
  CHECK(sets1[0] == std::vector<int>{0, 1});  // s=0, a1=0
  CHECK(sets1[1] == std::vector<int>{0, 1});  // s=0, a1=1
  CHECK(sets1[2] == std::vector<int>{0});     // s=1, a1=0 pins next=0
  CHECK(sets1[3] == std::vector<int>{1});     // s=1, a1=1 pins next=1

  // Agent 2 never controls the outcome from state 1.
  const auto sets2 = reachable_sets(mdp, 1);
  CHECK(sets2[0] == std::vector<int>{0, 1});
  CHECK(sets2[1] == std::vector<int>{0, 1});
  CHECK(sets2[2] == std::vector<int>{0, 1});
  CHECK(sets2[3] == std::vector<int>{0, 1});

  CHECK_THROWS_AS(reachable_sets(mdp, 2), ConfigError);
}

// ---------------------------------------------------------------------------
// Backup operator and value iteration.
// ---------------------------------------------------------------------------

TEST_CASE("agent backup matches a hand-worked table") {
  const FiniteJointMdp mdp = small_mdp();
  const auto sets = reachable_sets(mdp, 0);
  const std::vector<double> q = {1.0, 2.0, 3.0, 4.0};
  // Row maxes are 2 (state 0) and 4 (state 1), so candidate values from
  // state 0 are 1+0.5*2=2 (next=0) and 2+0.5*4=4 (next=1); from state 1
  // they are 3+0.5*2=4 (next=0) and 4+0.5*4=6 (next=1).
  const std::vector<double> best = apply_agent_operator(mdp, 0, sets, q);
  CHECK(best[0] == doctest::Approx(4.0));
  CHECK(best[1] == doctest::Approx(4.0));
  CHECK(best[2] == doctest::Approx(4.0));
  CHECK(best[3] == doctest::Approx(6.0));

  const std::vector<double> worst =
      apply_agent_operator(mdp, 0, sets, q, PickRule::Worst);
  CHECK(worst[0] == doctest::Approx(2.0));
  CHECK(worst[1] == doctest::Approx(2.0));
  CHECK(worst[2] == doctest::Approx(4.0));
  CHECK(worst[3] == doctest::Approx(6.0));

  std::vector<std::vector<int>> empty_sets(4);
  CHECK_THROWS_AS(apply_agent_operator(mdp, 0, empty_sets, q), ConfigError);
  CHECK_THROWS_AS(apply_agent_operator(mdp, 0, sets, {1.0, 2.0}), ShapeError);
}

TEST_CASE("joint value iteration solves an absorbing chain exactly") {
  FiniteJointMdp mdp;
  mdp.num_states = 2;
  mdp.actions1 = 2;
  mdp.actions2 = 2;
  mdp.gamma = 0.5;
  mdp.transition = {1, 1, 1, 1, 1, 1, 1, 1};  // everything leads to state 1
  mdp.reward = {0.0, 1.0, 0.0, 0.0};
  const JointValueResult res = joint_value_iteration(mdp);
  // State 1 absorbs with zero reward, so V(1)=0 and V(0)=1+0.5*0.
  CHECK(res.v[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(res.v[1] == doctest::Approx(0.0).epsilon(1e-12));
  for (int a = 0; a < 4; ++a) CHECK(res.q[a] == doctest::Approx(1.0));
  CHECK(res.sweeps > 1);

  // A rewarding absorbing state keeps the backup moving for ~250 sweeps at
  // this tolerance, so a two-sweep cap must fail.
  mdp.reward = {0.0, 1.0, 0.0, 1.0};
  CHECK_THROWS_AS(joint_value_iteration(mdp, 1e-13, 2), NumericError);
  CHECK_NOTHROW(joint_value_iteration(mdp));
}

TEST_CASE("constant rewards give the geometric-series value everywhere") {
  Rng rng(41);
  FiniteJointMdp mdp = random_mdp(5, 2, 2, 0.8, rng);
  std::fill(mdp.reward.begin(), mdp.reward.end(), 0.7);
  const JointValueResult res = joint_value_iteration(mdp);
  for (double v : res.v) CHECK(v == doctest::Approx(0.7 / 0.2).epsilon(1e-10));
  const AlignmentReport report = alignment_check(mdp);
  CHECK(report.max_gap < 1e-8);
}

// ---------------------------------------------------------------------------
// Optimality alignment.
// ---------------------------------------------------------------------------

TEST_CASE("matrix game embeds as a one-shot mdp with aligned optima") {
  const FiniteJointMdp mdp = matrix_game_mdp();

  // With gamma 0 the joint optimum is the best payoff entry.
  const JointValueResult joint = joint_value_iteration(mdp);
  for (int s = 0; s < 9; ++s) CHECK(joint.v[s] == doctest::Approx(3.0));

  // Best-case backup per own action: action 0 reaches the +3 outcome,
  // actions 1 and 2 top out at 0.
  const IndividualFixedPoint fp = individual_fixed_point(mdp, 0);
  for (int s = 0; s < 9; ++s) {
    CHECK(fp.q[s * 3 + 0] == doctest::Approx(3.0));
    CHECK(fp.q[s * 3 + 1] == doctest::Approx(0.0));
    CHECK(fp.q[s * 3 + 2] == doctest::Approx(0.0));
  }

  const AlignmentReport report = alignment_check(mdp);
  CHECK(report.max_gap < 1e-8);
  for (int s = 0; s < 9; ++s) {
    CHECK(report.projected1[s] == doctest::Approx(3.0));
    CHECK(report.projected2[s] == doctest::Approx(3.0));
  }
}

TEST_CASE("alignment holds on random mdps across sizes and discounts") {
  const double gammas[] = {0.5, 0.9, 0.99};
  Rng rng(1234);
  for (int i = 0; i < 12; ++i) {
    const int states = 3 + rng.uniform_int(8);
    const FiniteJointMdp mdp = random_mdp(states, 2, 2, gammas[i % 3], rng);
    const AlignmentReport report = alignment_check(mdp);
    CAPTURE(i);
    CHECK(report.max_gap < 1e-8);
  }
}

// ---------------------------------------------------------------------------
// Contraction.
// ---------------------------------------------------------------------------

TEST_CASE("backup is a sup-norm contraction under every subset rule") {
  Rng rng(7);
  const FiniteJointMdp mdp = random_mdp(6, 2, 2, 0.9, rng);
  for (SubsetRule rule :
       {SubsetRule::Reachable, SubsetRule::RandomNonempty, SubsetRule::FullSet}) {
    Rng trial_rng(100 + static_cast<int>(rule));
    const double worst = contraction_check(mdp, rule, 100, trial_rng);
    CHECK(worst <= 0.9 + 1e-12);
    CHECK(worst > 0.0);  // random tables never tie
  }
}

TEST_CASE("zero discount collapses the backup to rewards only") {
  Rng rng(8);
  const FiniteJointMdp mdp = random_mdp(6, 2, 2, 0.0, rng);
  Rng trial_rng(9);
  CHECK(contraction_check(mdp, SubsetRule::RandomNonempty, 50, trial_rng) == 0.0);

  OperatorResult degenerate;
  CHECK(degenerate.ratio() == 0.0);  // identical inputs are skipped, not 0/0
  CHECK_THROWS_AS(contraction_check(mdp, SubsetRule::FullSet, 0, trial_rng),
                  ConfigError);
}

// ---------------------------------------------------------------------------
// Nearest-sample distance experiment.
// ---------------------------------------------------------------------------

TEST_CASE("closed form for the nearest-draw distance is exact") {
  Rng rng(11);
  // Centered: E[min] = u/(M+1).
  MinDistanceResult r = mc_min_distance_experiment(1.0, 0.0, 1, 1, rng);
  CHECK(r.closed_form == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(r.bound == doctest::Approx(1.0).epsilon(1e-15));
  r = mc_min_distance_experiment(1.0, 0.0, 15, 1, rng);
  CHECK(r.closed_form == doctest::Approx(1.0 / 16).epsilon(1e-15));
  CHECK(r.bound == doctest::Approx(2.0 / 16).epsilon(1e-15));
  // Off-center hand integral for M=2, c=0.5:
  //   int_0^{1/2} (1-t)^2 dt = 7/24 and int_{1/2}^{3/2} (1-(t+1/2)/2)^2 dt
  //   = 2/24, so E = 9/24 = 0.375 = (1/3)(1 + 0.5^3).
  r = mc_min_distance_experiment(1.0, 0.5, 2, 1, rng);
  CHECK(r.closed_form == doctest::Approx(0.375).epsilon(1e-15));
  // Boundary center: closed form meets the bound exactly.
  r = mc_min_distance_experiment(1.0, 1.0, 1, 1, rng);
  CHECK(r.closed_form == doctest::Approx(r.bound).epsilon(1e-15));
  // Scale invariance in u.
  r = mc_min_distance_experiment(2.0, 0.0, 1, 1, rng);
  CHECK(r.closed_form == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("empirical nearest-draw distance matches the closed form") {
  Rng rng(12);
  for (int m : {1, 5, 15}) {
    for (double c : {0.0, 0.5, 0.9}) {
      const MinDistanceResult r =
          mc_min_distance_experiment(1.0, c, m, 100000, rng);
      CAPTURE(m);
      CAPTURE(c);
      CHECK(std::abs(r.empirical_mean - r.closed_form) <= 3.0 * r.standard_error);
      CHECK(r.empirical_mean < r.bound);
      CHECK(r.standard_error > 0.0);
      CHECK(r.standard_error < 5e-3);
    }
  }
}

TEST_CASE("nearest-draw experiment rejects bad parameters") {
  Rng rng(13);
  CHECK_THROWS_AS(mc_min_distance_experiment(0.0, 0.0, 1, 1, rng), ConfigError);
  CHECK_THROWS_AS(mc_min_distance_experiment(-1.0, 0.0, 1, 1, rng), ConfigError);
  CHECK_THROWS_AS(mc_min_distance_experiment(1.0, 1.5, 1, 1, rng), ConfigError);
  CHECK_THROWS_AS(mc_min_distance_experiment(1.0, 0.0, 0, 1, rng), ConfigError);
  CHECK_THROWS_AS(mc_min_distance_experiment(1.0, 0.0, 1, 0, rng), ConfigError);
}

// ---------------------------------------------------------------------------
// Adversarial selection gap.
// ---------------------------------------------------------------------------

TEST_CASE("selection gap is zero below unit spacing and grows monotonically") {
  Rng rng(21);
  const FiniteJointMdp mdp = random_mdp(8, 2, 2, 0.9, rng);
  const std::vector<double> eps = {0.0, 0.5, 1.0, 2.0, 4.0, 7.0};
  const auto curve = epsilon_gap_experiment(mdp, eps);
  REQUIRE(curve.size() == eps.size());

  CHECK(curve[0].gap < 1e-9);  // exact choice still available
  CHECK(curve[1].gap < 1e-9);  // no other state within half a spacing
  for (std::size_t i = 1; i < curve.size(); ++i) {
    CHECK(curve[i].gap >= curve[i - 1].gap - 1e-9);
  }

  // A ball spanning the whole line lets the adversary force the worst
  // candidate everywhere; brute force that fixed point independently.
  CHECK(curve.back().gap > 0.1);
  CHECK(curve.back().gap == doctest::Approx(brute_force_worst_gap(mdp)).epsilon(1e-8));

  CHECK_THROWS_AS(epsilon_gap_experiment(mdp, {-1.0}), ConfigError);
}

TEST_CASE("selection gap curve is reproducible across random models") {
  Rng rng(22);
  for (int i = 0; i < 4; ++i) {
    const FiniteJointMdp mdp = random_mdp(6, 2, 2, 0.8, rng);
    const auto curve = epsilon_gap_experiment(mdp, {0.0, 1.0, 2.0, 5.0});
    CHECK(curve.front().gap < 1e-9);
    for (std::size_t j = 1; j < curve.size(); ++j) {
      CHECK(curve[j].gap >= curve[j - 1].gap - 1e-9);
    }
    CHECK(curve.back().gap ==
          doctest::Approx(brute_force_worst_gap(mdp)).epsilon(1e-8));
  }
}

// ---------------------------------------------------------------------------
// Determinism.
// ---------------------------------------------------------------------------

TEST_CASE("random models and checks reproduce bit for bit from the seed") {
  Rng a(33);
  Rng b(33);
  const FiniteJointMdp ma = random_mdp(7, 2, 2, 0.9, a);
  const FiniteJointMdp mb = random_mdp(7, 2, 2, 0.9, b);
  CHECK(ma.transition == mb.transition);
  CHECK(ma.reward == mb.reward);

  Rng ta(44);
  Rng tb(44);
  CHECK(contraction_check(ma, SubsetRule::RandomNonempty, 20, ta) ==
        contraction_check(mb, SubsetRule::RandomNonempty, 20, tb));

  Rng sa(55);
  Rng sb(55);
  const MinDistanceResult ra = mc_min_distance_experiment(1.0, 0.3, 5, 1000, sa);
  const MinDistanceResult rb = mc_min_distance_experiment(1.0, 0.3, 5, 1000, sb);
  CHECK(ra.empirical_mean == rb.empirical_mean);
  CHECK(ra.standard_error == rb.standard_error);
}
