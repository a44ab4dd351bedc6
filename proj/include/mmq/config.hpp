#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mmq/agents.hpp"
#include "mmq/envs.hpp"

namespace mmq {

// Experiment orchestration knobs, separate from the per-agent learning
// parameters in AgentConfig.
struct RunParams {
  long total_steps = 500000;
  long eval_interval = 2000;   // environment steps between eval points
  int eval_episodes = 10;      // greedy episodes averaged per eval point
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4, 5, 6, 7};
  std::string outdir = "runs";
  int workers = 0;  // 0 = one per hardware thread (capped by seed count)
  bool save_checkpoints = false;
};

struct ExperimentConfig {
  EnvParams env;
  std::string algo = "mmq";  // mmq, iddpg, hyddpg
  AgentConfig agent;
  RunParams run;

  // Throws ConfigError on out-of-range values (delegates agent fields to
  // AgentConfig::validate).
  void validate() const;
};

// Parses the flat key=value format: one assignment per line, `#` starts a
// comment, blank lines are skipped, keys are dotted (env.*, algo.*, run.*).
// Unknown keys, duplicate keys, and malformed values are ConfigErrors that
// name the offending line. Missing keys keep their defaults.
ExperimentConfig parse_config_text(const std::string& text);

// parse_config_text over the contents of path; the path is prepended to
// error messages.
ExperimentConfig load_config(const std::string& path);

// Serializes every key in a fixed order; parsing the result reproduces the
// config. Used to persist the resolved config beside run outputs.
std::string config_to_text(const ExperimentConfig& config);

}  // namespace mmq
