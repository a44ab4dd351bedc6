#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "mmq/agents.hpp"
#include "mmq/config.hpp"
#include "mmq/envs.hpp"

namespace mmq {

struct EvalPoint {
  long env_step = 0;
  double mean_return = 0.0;
};

// Per-agent training diagnostics captured at one eval point. The held-out
// fields are -1 for learners without a next-state model.
struct DiagPoint {
  long env_step = 0;
  int agent = 0;
  TriggerDiagnostics trigger;
  double held_out_coverage = -1.0;
  double held_out_width = -1.0;
};

struct RunRecord {
  std::uint64_t seed = 0;
  std::string env_name;
  std::string algo;
  std::vector<EvalPoint> points;
  std::vector<DiagPoint> diagnostics;
  std::string error;  // nonempty when the seed aborted early

  // Mean of the last five eval returns (fewer if the run is shorter).
  double final_score() const;
};

struct TrainResult {
  RunRecord record;
  std::vector<std::unique_ptr<Learner>> agents;
  std::unique_ptr<Env> env;
};

// Runs greedy episodes (no exploration, rewards taken straight from the
// env) and returns the mean episode return. The env should be noise-free
// for evaluation; rng drives the episode resets.
double evaluate_greedy(Env& env,
                       const std::vector<std::unique_ptr<Learner>>& agents,
                       int episodes, Rng& rng);

// Trains one seed: fresh env and agents, one exploration step per agent
// per env step, a train trigger each step, greedy evaluation every
// eval_interval steps and at the final step. Rows are appended (and
// flushed) to csv_path/diag_path as they are produced when the paths are
// nonempty. All randomness derives from seed. A numeric failure stops the
// loop and leaves its message in record.error instead of propagating.
TrainResult train_seed(const ExperimentConfig& config, std::uint64_t seed,
                       const std::string& csv_path = "",
                       const std::string& diag_path = "");

// Canonical per-seed output file name, "<env>_<algo>_seed<k>.csv".
std::string run_csv_name(const std::string& env_name, const std::string& algo,
                         std::uint64_t seed);

// Trains every seed in config.run.seeds across a small thread pool (one
// seed per task; MMQ_WORKERS overrides the worker count). Writes per-seed
// CSVs, a resolved config copy, summary.txt, and optional checkpoints into
// config.run.outdir. Failed seeds keep their partial records; the rest
// proceed.
std::vector<RunRecord> run_experiment(const ExperimentConfig& config);

// Checkpoints: a text manifest ("name rows cols" per tensor, in nets()
// order, weights then bias per layer) plus a flat binary of the tensor
// payloads as consecutive little-endian doubles in storage order.
void save_checkpoint(Learner& learner, const std::string& bin_path,
                     const std::string& manifest_path);
// Restores tensors in place; ConfigError on unreadable files, ShapeError
// when the manifest disagrees with the learner's architecture.
void load_checkpoint(Learner& learner, const std::string& bin_path,
                     const std::string& manifest_path);

// Two-sided 95% Student-t quantile (0.975 point) for the given degrees of
// freedom; normal beyond df 30. ConfigError for df < 1.
double t_quantile_975(int df);

struct SummaryRow {
  std::string env_name;
  std::string algo;
  int num_seeds = 0;
  double mean = 0.0;        // across-seed mean of final scores
  double half_width = 0.0;  // t-based 95% confidence half-width
  double seed_sd = 0.0;     // sample standard deviation of final scores
};

// Final-window statistics over the valid records (nonempty points, no
// error). ConfigError when fewer than two seeds qualify.
SummaryRow summarize(const std::vector<RunRecord>& records);

// Reads every per-seed CSV in dir, groups by (env, algo), and summarizes
// each group. Groups with a single seed are skipped.
std::vector<SummaryRow> summarize_directory(const std::string& dir);

// Aligned table plus one "#row ..." machine-readable line per entry.
std::string render_summary(const std::vector<SummaryRow>& rows);

}  // namespace mmq
