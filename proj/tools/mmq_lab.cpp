// Command-line front end: train experiments, replay checkpoints, run the
// analysis suite, and summarize result directories.
#include <CLI11.hpp>

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "mmq/config.hpp"
#include "mmq/envs.hpp"
#include "mmq/errors.hpp"
#include "mmq/harness.hpp"
#include "mmq/theory.hpp"

namespace {

using namespace mmq;

// ---------------------------------------------------------------------------
// theory: run every analysis oracle and report pass/fail plus raw numbers.
// ---------------------------------------------------------------------------

void report(bool pass, const std::string& label, const std::string& detail,
            bool& all_pass) {
  std::cout << (pass ? "[PASS] " : "[FAIL] ") << std::left << std::setw(38)
            << label << detail << "\n";
  if (!pass) all_pass = false;
}

FiniteJointMdp sample_mdp(int index, Rng& rng) {
  static const double gammas[] = {0.5, 0.9, 0.99};
  const int states = 3 + static_cast<int>(rng.uniform_int(8));
  return random_mdp(states, 2, 2, gammas[index % 3], rng);
}

int run_theory() {
  bool all_pass = true;
  std::cout << "analysis suite\n==============\n";

  {  // Individual fixed points project onto the joint optimum.
    Rng rng(101);
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
      const FiniteJointMdp mdp = sample_mdp(i, rng);
      worst = std::max(worst, alignment_check(mdp).max_gap);
    }
    std::ostringstream detail;
    detail << "max gap " << std::scientific << std::setprecision(2) << worst
           << " over 20 models (tol 1e-8)";
    report(worst < 1e-8, "joint/individual value alignment", detail.str(),
           all_pass);
  }

  {  // The per-agent backup contracts at rate gamma under any candidate sets.
    Rng rng(202);
    double worst_excess = -1.0;
    double worst_ratio = 0.0, worst_gamma = 0.0;
    for (int i = 0; i < 20; ++i) {
      const FiniteJointMdp mdp = sample_mdp(i, rng);
      for (SubsetRule rule : {SubsetRule::Reachable, SubsetRule::RandomNonempty,
                              SubsetRule::FullSet}) {
        const double ratio = contraction_check(mdp, rule, 100, rng);
        if (ratio - mdp.gamma > worst_excess) {
          worst_excess = ratio - mdp.gamma;
          worst_ratio = ratio;
          worst_gamma = mdp.gamma;
        }
      }
    }
    std::ostringstream detail;
    detail << "tightest ratio " << std::fixed << std::setprecision(6)
           << worst_ratio << " vs gamma " << worst_gamma << " (60 checks)";
    report(worst_excess <= 1e-12, "candidate backup contraction", detail.str(),
           all_pass);
  }

  {  // Expected distance to the nearest of M uniform draws.
    Rng rng(303);
    bool ok = true;
    std::cout << "       nearest-draw distance, u=1, 1e5 trials per cell\n"
              << "         M      c      mean    closed     bound      |z|\n";
    for (int m : {1, 5, 15, 50}) {
      for (double c : {0.0, 0.5, 0.9}) {
        const MinDistanceResult r =
            mc_min_distance_experiment(1.0, c, m, 100000, rng);
        const double z =
            std::abs(r.empirical_mean - r.closed_form) / r.standard_error;
        ok = ok && r.empirical_mean < r.bound && z <= 3.0;
        std::cout << "      " << std::setw(4) << m << "   " << std::fixed
                  << std::setprecision(2) << c << "  " << std::setprecision(6)
                  << std::setw(8) << r.empirical_mean << "  " << std::setw(8)
                  << r.closed_form << "  " << std::setw(8) << r.bound << "  "
                  << std::setprecision(2) << std::setw(6) << z << "\n";
      }
    }
    report(ok, "nearest-candidate distance bound",
           "strict bound + closed form within 3 SE, 12 cells", all_pass);
  }

  {  // Matrix-game expected payoffs cross at exactly 2/5.
    const double threshold = matrix_crossover_threshold();
    const auto below = matrix_expected_q({0.39, 0.305, 0.305});
    const auto above = matrix_expected_q({0.41, 0.295, 0.295});
    const bool ok = std::abs(threshold - 0.4) < 1e-12 &&
                    below[0] < std::max(below[1], below[2]) &&
                    above[0] > std::max(above[1], above[2]);
    std::ostringstream detail;
    detail << "analytic threshold " << std::setprecision(17) << threshold;
    report(ok, "matrix-game expected-payoff crossover", detail.str(),
           all_pass);
  }

  {  // Adversarial candidate substitution degrades values monotonically.
    Rng rng(505);
    const FiniteJointMdp mdp = random_mdp(8, 2, 2, 0.9, rng);
    const std::vector<double> epsilons = {0.0, 0.5, 1.0, 2.0, 4.0, 8.0};
    const auto curve = epsilon_gap_experiment(mdp, epsilons);
    bool ok = std::abs(curve.front().gap) < 1e-9;
    std::ostringstream detail;
    detail << "gap by radius:";
    for (std::size_t i = 0; i < curve.size(); ++i) {
      if (i > 0) ok = ok && curve[i].gap >= curve[i - 1].gap - 1e-9;
      detail << " " << std::setprecision(3) << std::fixed << curve[i].gap;
    }
    ok = ok && curve.back().gap > 1e-6;
    report(ok, "adversarial substitution gap", detail.str(), all_pass);
  }

  std::cout << (all_pass ? "all checks passed\n" : "CHECK FAILURES\n");
  return all_pass ? 0 : 2;
}

// ---------------------------------------------------------------------------
// matrix: expected-payoff sweep plus tabular learning outcomes.
// ---------------------------------------------------------------------------

int run_matrix() {
  std::cout << "expected payoffs vs opponent's weight p on action A\n"
            << "(remaining probability split evenly across B and C)\n\n"
            << "     p     EQ(A)    EQ(B)    EQ(C)  best\n";
  const double threshold = matrix_crossover_threshold();
  std::vector<double> grid;
  for (int i = 0; i <= 20; ++i) grid.push_back(i * 0.05);
  grid.push_back(threshold);
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end(),
                         [](double a, double b) { return std::abs(a - b) < 1e-9; }),
             grid.end());
  for (double p : grid) {
    const double rest = (1.0 - p) / 2.0;
    const auto q = matrix_expected_q({p, rest, rest});
    const double top = std::max({q[0], q[1], q[2]});
    std::string best;
    if (std::abs(q[0] - top) < 1e-12) best += "A";
    if (std::abs(q[1] - top) < 1e-12) best += "B";
    if (std::abs(q[2] - top) < 1e-12) best += "C";
    std::cout << std::fixed << std::setprecision(3) << std::setw(6) << p
              << "  " << std::setprecision(4) << std::setw(8) << q[0] << " "
              << std::setw(8) << q[1] << " " << std::setw(8) << q[2] << "  "
              << best << (std::abs(p - threshold) < 1e-12 ? "   <- crossover" : "")
              << "\n";
  }
  std::cout << "\nanalytic crossover: p = " << std::setprecision(17)
            << threshold << " (exactly 2/5)\n\n";

  std::cout << "tabular learners, 8 seeds, 20000 episodes, lr 0.01, "
               "uniform exploration\n";
  for (TabularRule rule : {TabularRule::Average, TabularRule::OptimisticMax}) {
    int optimal = 0;
    std::ostringstream joints;
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
      Rng rng(seed);
      const TabularResult result =
          tabular_matrix_learn(rule, 20000, 0.01, 1.0, rng);
      if (result.greedy1 == 0 && result.greedy2 == 0) ++optimal;
      const char names[] = {'A', 'B', 'C'};
      joints << " (" << names[result.greedy1] << "," << names[result.greedy2]
             << ")";
    }
    std::cout << (rule == TabularRule::Average ? "  averaging:     "
                                               : "  optimistic-max:")
              << joints.str() << "  -> optimal joint in " << optimal
              << "/8 seeds\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// train / eval / summarize.
// ---------------------------------------------------------------------------

int run_train(const std::string& config_path, const std::string& outdir) {
  ExperimentConfig config = load_config(config_path);
  if (!outdir.empty()) config.run.outdir = outdir;
  std::cout << "training " << config.algo << " on " << config.env.name
            << ": " << config.run.seeds.size() << " seed(s) x "
            << config.run.total_steps << " steps -> " << config.run.outdir
            << "\n";
  const std::vector<RunRecord> records = run_experiment(config);
  bool any_error = false;
  for (const RunRecord& record : records) {
    if (!record.error.empty()) {
      any_error = true;
      std::cerr << "seed " << record.seed << " aborted: " << record.error
                << "\n";
    } else {
      std::cout << "seed " << record.seed << ": final return "
                << std::setprecision(6) << std::fixed << record.final_score()
                << " over " << record.points.size() << " eval points\n";
    }
  }
  try {
    std::cout << "\n" << render_summary({summarize(records)});
  } catch (const ConfigError&) {
    std::cout << "(no summary: need at least two completed seeds)\n";
  }
  return any_error ? 1 : 0;
}

int run_eval(const std::string& checkpoint_prefix,
             const std::string& config_path, int episodes,
             std::uint64_t seed) {
  const ExperimentConfig config = load_config(config_path);
  EnvParams eval_params = config.env;
  eval_params.noise = NoiseConfig{};
  const std::unique_ptr<Env> env = make_env(eval_params);

  std::vector<std::unique_ptr<Learner>> agents;
  for (int i = 0; i < env->num_agents(); ++i) {
    agents.push_back(make_learner(config.algo, config.agent, env->state_dim(),
                                  env->action_dim(), env->state_lower(),
                                  env->state_upper(), 1000 + i));
    const std::string stem =
        checkpoint_prefix + "_agent" + std::to_string(i);
    load_checkpoint(*agents.back(), stem + ".bin", stem + ".txt");
  }

  const int count = episodes > 0 ? episodes : config.run.eval_episodes;
  Rng rng(seed);
  const double mean_return = evaluate_greedy(*env, agents, count, rng);
  std::cout << "env=" << env->name() << " algo=" << config.algo
            << " episodes=" << count << " mean_return="
            << std::setprecision(17) << mean_return << "\n";
  return 0;
}

int run_summarize(const std::string& dir) {
  const std::vector<SummaryRow> rows = summarize_directory(dir);
  if (rows.empty()) {
    std::cerr << "no result groups with >= 2 seeds under " << dir << "\n";
    return 1;
  }
  std::cout << render_summary(rows);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"decentralized multi-agent RL laboratory"};
  app.require_subcommand(1);

  std::string train_config, train_outdir;
  CLI::App* train = app.add_subcommand(
      "train", "run a seeded multi-run experiment from a config file");
  train->add_option("config", train_config, "key=value config file")
      ->required();
  train->add_option("--outdir", train_outdir, "override run.outdir");

  std::string eval_prefix, eval_config;
  int eval_episodes = 0;
  std::uint64_t eval_seed = 0;
  CLI::App* eval = app.add_subcommand(
      "eval", "replay greedy episodes from saved checkpoints");
  eval->add_option("checkpoint", eval_prefix,
                   "checkpoint path prefix (expects <prefix>_agent<i>.bin/.txt)")
      ->required();
  eval->add_option("config", eval_config, "key=value config file")->required();
  eval->add_option("--episodes", eval_episodes,
                   "episode count (default: run.eval_episodes)");
  eval->add_option("--seed", eval_seed, "evaluation seed");

  CLI::App* theory = app.add_subcommand(
      "theory", "run the full analysis suite and report pass/fail");

  CLI::App* matrix = app.add_subcommand(
      "matrix", "matrix-game payoff sweep and tabular learning outcomes");

  std::string summarize_dir;
  CLI::App* summarize_cmd = app.add_subcommand(
      "summarize", "aggregate result CSVs from a directory");
  summarize_cmd->add_option("dir", summarize_dir, "results directory")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return 64;
  }

  try {
    if (train->parsed()) return run_train(train_config, train_outdir);
    if (eval->parsed())
      return run_eval(eval_prefix, eval_config, eval_episodes, eval_seed);
    if (theory->parsed()) return run_theory();
    if (matrix->parsed()) return run_matrix();
    if (summarize_cmd->parsed()) return run_summarize(summarize_dir);
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 64;
}
