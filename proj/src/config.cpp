#include "mmq/config.hpp"

#include <algorithm>
#include <climits>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "mmq/errors.hpp"

namespace mmq {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

long parse_long(const std::string& value) {
  std::size_t used = 0;
  long out = 0;
  try {
    out = std::stol(value, &used);
  } catch (const std::exception&) {
    throw ConfigError("expected an integer, got '" + value + "'");
  }
  if (used != value.size()) {
    throw ConfigError("trailing characters after integer '" + value + "'");
  }
  return out;
}

int parse_int(const std::string& value) {
  const long v = parse_long(value);
  if (v < INT_MIN || v > INT_MAX) throw ConfigError("integer out of range: " + value);
  return static_cast<int>(v);
}

double parse_double(const std::string& value) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(value, &used);
  } catch (const std::exception&) {
    throw ConfigError("expected a number, got '" + value + "'");
  }
  if (used != value.size()) {
    throw ConfigError("trailing characters after number '" + value + "'");
  }
  if (!std::isfinite(out)) throw ConfigError("number must be finite: " + value);
  return out;
}

bool parse_bool(const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("expected true/false, got '" + value + "'");
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> parts;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) parts.push_back(trim(item));
  if (parts.empty()) throw ConfigError("expected a comma-separated list");
  return parts;
}

using Setter = std::function<void(ExperimentConfig&, const std::string&)>;

const std::map<std::string, Setter>& key_table() {
  static const std::map<std::string, Setter> table = {
      {"env.name", [](auto& c, const auto& v) { c.env.name = v; }},
      {"env.num_agents",
       [](auto& c, const auto& v) { c.env.num_agents = parse_int(v); }},
      {"env.sigma_state",
       [](auto& c, const auto& v) { c.env.noise.sigma_state = parse_double(v); }},
      {"env.sigma_reward",
       [](auto& c, const auto& v) { c.env.noise.sigma_reward = parse_double(v); }},
      {"algo.name", [](auto& c, const auto& v) { c.algo = v; }},
      {"algo.hidden",
       [](auto& c, const auto& v) {
         c.agent.hidden.clear();
         for (const auto& part : split_list(v)) c.agent.hidden.push_back(parse_int(part));
       }},
      {"algo.learning_rate",
       [](auto& c, const auto& v) { c.agent.learning_rate = parse_double(v); }},
      {"algo.gamma", [](auto& c, const auto& v) { c.agent.gamma = parse_double(v); }},
      {"algo.batch_size",
       [](auto& c, const auto& v) { c.agent.batch_size = parse_int(v); }},
      {"algo.buffer_capacity",
       [](auto& c, const auto& v) { c.agent.buffer_capacity = parse_long(v); }},
      {"algo.pretrain_steps",
       [](auto& c, const auto& v) { c.agent.pretrain_steps = parse_long(v); }},
      {"algo.epsilon",
       [](auto& c, const auto& v) { c.agent.epsilon = parse_double(v); }},
      {"algo.explore",
       [](auto& c, const auto& v) {
         if (v == "replace") {
           c.agent.explore = ExploreMode::Replace;
         } else if (v == "additive") {
           c.agent.explore = ExploreMode::Additive;
         } else {
           throw ConfigError("expected replace or additive, got '" + v + "'");
         }
       }},
      {"algo.explore_sigma",
       [](auto& c, const auto& v) { c.agent.explore_sigma = parse_double(v); }},
      {"algo.critic_ratio",
       [](auto& c, const auto& v) { c.agent.critic_ratio = parse_int(v); }},
      {"algo.target_mix",
       [](auto& c, const auto& v) { c.agent.target_mix = parse_double(v); }},
      {"algo.reward_shift",
       [](auto& c, const auto& v) { c.agent.reward_shift = parse_double(v); }},
      {"algo.M",
       [](auto& c, const auto& v) { c.agent.num_candidates = parse_int(v); }},
      {"algo.tau_low",
       [](auto& c, const auto& v) { c.agent.tau_low = parse_double(v); }},
      {"algo.tau_high",
       [](auto& c, const auto& v) { c.agent.tau_high = parse_double(v); }},
      {"algo.gaussian_model",
       [](auto& c, const auto& v) { c.agent.gaussian_model = parse_bool(v); }},
      {"algo.beta", [](auto& c, const auto& v) { c.agent.beta = parse_double(v); }},
      {"algo.resample_critic_batches",
       [](auto& c, const auto& v) { c.agent.resample_critic_batches = parse_bool(v); }},
      {"run.total_steps",
       [](auto& c, const auto& v) { c.run.total_steps = parse_long(v); }},
      {"run.eval_interval",
       [](auto& c, const auto& v) { c.run.eval_interval = parse_long(v); }},
      {"run.eval_episodes",
       [](auto& c, const auto& v) { c.run.eval_episodes = parse_int(v); }},
      {"run.seeds",
       [](auto& c, const auto& v) {
         c.run.seeds.clear();
         for (const auto& part : split_list(v)) {
           const long seed = parse_long(part);
           if (seed < 0) throw ConfigError("seeds must be nonnegative");
           c.run.seeds.push_back(static_cast<std::uint64_t>(seed));
         }
       }},
      {"run.outdir", [](auto& c, const auto& v) { c.run.outdir = v; }},
      {"run.workers", [](auto& c, const auto& v) { c.run.workers = parse_int(v); }},
      {"run.save_checkpoints",
       [](auto& c, const auto& v) { c.run.save_checkpoints = parse_bool(v); }},
  };
  return table;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (algo != "mmq" && algo != "iddpg" && algo != "hyddpg") {
    throw ConfigError("unknown algorithm '" + algo + "'");
  }
  agent.validate();
  if (env.num_agents < 1) throw ConfigError("env.num_agents must be positive");
  if (env.noise.sigma_state < 0.0 || env.noise.sigma_reward < 0.0) {
    throw ConfigError("noise levels must be nonnegative");
  }
  if (run.total_steps < 1) throw ConfigError("run.total_steps must be positive");
  if (run.eval_interval < 1 || run.eval_interval > run.total_steps) {
    throw ConfigError("run.eval_interval must lie in [1, total_steps]");
  }
  if (run.eval_episodes < 1) throw ConfigError("run.eval_episodes must be positive");
  if (run.seeds.empty()) throw ConfigError("run.seeds must not be empty");
  std::set<std::uint64_t> unique(run.seeds.begin(), run.seeds.end());
  if (unique.size() != run.seeds.size()) {
    throw ConfigError("run.seeds must be distinct");
  }
  if (run.workers < 0) throw ConfigError("run.workers must be nonnegative");
  if (run.outdir.empty()) throw ConfigError("run.outdir must not be empty");
}

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig config;
  std::set<std::string> seen;
  std::stringstream ss(text);
  std::string line;
  int line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) +
                        ": expected key=value, got '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    }
    const auto it = key_table().find(key);
    if (it == key_table().end()) {
      throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" +
                        key + "'");
    }
    if (!seen.insert(key).second) {
      throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" +
                        key + "'");
    }
    try {
      it->second(config, value);
    } catch (const ConfigError& err) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + key + ": " +
                        err.what());
    }
  }
  config.validate();
  return config;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    return parse_config_text(buffer.str());
  } catch (const ConfigError& err) {
    throw ConfigError(path + ": " + err.what());
  }
}

std::string config_to_text(const ExperimentConfig& config) {
  std::ostringstream out;
  out.precision(17);
  const auto join = [](const auto& values) {
    std::ostringstream s;
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (i > 0) s << ',';
      s << values[i];
    }
    return s.str();
  };
  out << "env.name=" << config.env.name << '\n'
      << "env.num_agents=" << config.env.num_agents << '\n'
      << "env.sigma_state=" << config.env.noise.sigma_state << '\n'
      << "env.sigma_reward=" << config.env.noise.sigma_reward << '\n'
      << "algo.name=" << config.algo << '\n'
      << "algo.hidden=" << join(config.agent.hidden) << '\n'
      << "algo.learning_rate=" << config.agent.learning_rate << '\n'
      << "algo.gamma=" << config.agent.gamma << '\n'
      << "algo.batch_size=" << config.agent.batch_size << '\n'
      << "algo.buffer_capacity=" << config.agent.buffer_capacity << '\n'
      << "algo.pretrain_steps=" << config.agent.pretrain_steps << '\n'
      << "algo.epsilon=" << config.agent.epsilon << '\n'
      << "algo.explore="
      << (config.agent.explore == ExploreMode::Replace ? "replace" : "additive")
      << '\n'
      << "algo.explore_sigma=" << config.agent.explore_sigma << '\n'
      << "algo.critic_ratio=" << config.agent.critic_ratio << '\n'
      << "algo.target_mix=" << config.agent.target_mix << '\n'
      << "algo.reward_shift=" << config.agent.reward_shift << '\n'
      << "algo.M=" << config.agent.num_candidates << '\n'
      << "algo.tau_low=" << config.agent.tau_low << '\n'
      << "algo.tau_high=" << config.agent.tau_high << '\n'
      << "algo.gaussian_model=" << (config.agent.gaussian_model ? "true" : "false")
      << '\n'
      << "algo.beta=" << config.agent.beta << '\n'
      << "algo.resample_critic_batches="
      << (config.agent.resample_critic_batches ? "true" : "false") << '\n'
      << "run.total_steps=" << config.run.total_steps << '\n'
      << "run.eval_interval=" << config.run.eval_interval << '\n'
      << "run.eval_episodes=" << config.run.eval_episodes << '\n'
      << "run.seeds=" << join(config.run.seeds) << '\n'
      << "run.outdir=" << config.run.outdir << '\n'
      << "run.workers=" << config.run.workers << '\n'
      << "run.save_checkpoints="
      << (config.run.save_checkpoints ? "true" : "false") << '\n';
  return out.str();
}

}  // namespace mmq
