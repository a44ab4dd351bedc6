#include "mmq/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <thread>

#include "mmq/errors.hpp"

namespace mmq {

namespace {

namespace fs = std::filesystem;

// Appends rows with full double precision and flushes each one, so partial
// runs still leave well-formed files.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::string& header) {
    if (path.empty()) return;
    out_.open(path, std::ios::binary | std::ios::trunc);
    if (!out_) throw ConfigError("cannot open output file '" + path + "'");
    out_ << header << '\n';
    out_.flush();
  }

  template <typename... Fields>
  void row(const Fields&... fields) {
    if (!out_.is_open()) return;
    out_ << std::setprecision(17);
    bool first = true;
    ((out_ << (first ? "" : ",") << fields, first = false), ...);
    out_ << '\n';
    out_.flush();
  }

  void comment(const std::string& text) {
    if (!out_.is_open()) return;
    out_ << "# " << text << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

constexpr char kCsvHeader[] = "seed,env_step,mean_return";
constexpr char kDiagHeader[] =
    "seed,env_step,agent,updated,critic_loss,actor_loss,reward_model_loss,"
    "quantile_low,quantile_high,coverage,bound_width,heldout_coverage,"
    "heldout_width";

}  // namespace

double RunRecord::final_score() const {
  if (points.empty()) throw ConfigError("run record has no eval points");
  const std::size_t window = std::min<std::size_t>(5, points.size());
  double sum = 0.0;
  for (std::size_t i = points.size() - window; i < points.size(); ++i) {
    sum += points[i].mean_return;
  }
  return sum / static_cast<double>(window);
}

double evaluate_greedy(Env& env,
                       const std::vector<std::unique_ptr<Learner>>& agents,
                       int episodes, Rng& rng) {
  if (episodes < 1) throw ConfigError("evaluation needs episodes >= 1");
  const int adim = env.action_dim();
  double total = 0.0;
  for (int ep = 0; ep < episodes; ++ep) {
    Vector state = env.reset(rng);
    double ret = 0.0;
    for (int t = 0; t < env.episode_length(); ++t) {
      Vector joint(static_cast<Eigen::Index>(agents.size()) * adim);
      for (std::size_t i = 0; i < agents.size(); ++i) {
        joint.segment(static_cast<Eigen::Index>(i) * adim, adim) =
            agents[i]->greedy_action(state);
      }
      const StepResult res = env.step(joint, rng);
      ret += res.reward;
      state = res.next_state;
    }
    total += ret;
  }
  return total / episodes;
}

TrainResult train_seed(const ExperimentConfig& config, std::uint64_t seed,
                       const std::string& csv_path,
                       const std::string& diag_path) {
  config.validate();
  TrainResult out;
  out.env = make_env(config.env);
  Env& env = *out.env;

  EnvParams eval_params = config.env;
  eval_params.noise = NoiseConfig{};
  const std::unique_ptr<Env> eval_env = make_env(eval_params);

  Rng base(seed);
  Rng env_rng = base.fork(1);
  const int n = env.num_agents();
  for (int i = 0; i < n; ++i) {
    out.agents.push_back(make_learner(config.algo, config.agent, env.state_dim(),
                                      env.action_dim(), env.state_lower(),
                                      env.state_upper(),
                                      base.fork(100 + i).seed()));
  }

  RunRecord& record = out.record;
  record.seed = seed;
  record.env_name = env.name();
  record.algo = out.agents.front()->algo();

  CsvWriter csv(csv_path, kCsvHeader);
  CsvWriter diag(diag_path, kDiagHeader);

  std::vector<TriggerDiagnostics> last_trigger(n);
  const int adim = env.action_dim();
  try {
    Vector state = env.reset(env_rng);
    int step_in_episode = 0;
    long next_eval = config.run.eval_interval;
    long eval_index = 0;
    for (long step = 1; step <= config.run.total_steps; ++step) {
      Vector joint(static_cast<Eigen::Index>(n) * adim);
      for (int i = 0; i < n; ++i) {
        joint.segment(static_cast<Eigen::Index>(i) * adim, adim) =
            out.agents[i]->act(state);
      }
      const StepResult res = env.step(joint, env_rng);
      for (int i = 0; i < n; ++i) {
        out.agents[i]->observe(
            state, joint.segment(static_cast<Eigen::Index>(i) * adim, adim),
            res.reward, res.next_state);
        last_trigger[i] = out.agents[i]->train_trigger();
      }
      state = res.next_state;
      if (++step_in_episode == env.episode_length()) {
        state = env.reset(env_rng);
        step_in_episode = 0;
      }

      if (step == next_eval || step == config.run.total_steps) {
        Rng eval_rng = base.fork(20000 + eval_index);
        const double mean_return = evaluate_greedy(
            *eval_env, out.agents, config.run.eval_episodes, eval_rng);
        record.points.push_back({step, mean_return});
        csv.row(seed, step, mean_return);
        for (int i = 0; i < n; ++i) {
          DiagPoint point;
          point.env_step = step;
          point.agent = i;
          point.trigger = last_trigger[i];
          if (auto* mmq = dynamic_cast<MMQAgent*>(out.agents[i].get());
              mmq != nullptr &&
              mmq->transitions_seen() >= config.agent.batch_size) {
            // 5x a training batch: the envelope is judged by a percentage
            // near 90, where a 100-sample estimate carries ~3% noise.
            const int holdout_size = 5 * config.agent.batch_size;
            Rng held_out_rng = base.fork(40000 + eval_index * n + i);
            point.held_out_coverage =
                mmq->held_out_coverage(holdout_size, held_out_rng);
            point.held_out_width =
                mmq->mean_bound_width(holdout_size, held_out_rng);
          }
          record.diagnostics.push_back(point);
          diag.row(seed, step, i, point.trigger.updated ? 1 : 0,
                   point.trigger.critic_loss, point.trigger.actor_loss,
                   point.trigger.reward_model_loss,
                   point.trigger.quantile_loss_low,
                   point.trigger.quantile_loss_high, point.trigger.coverage,
                   point.trigger.bound_width, point.held_out_coverage,
                   point.held_out_width);
        }
        ++eval_index;
        while (next_eval <= step) next_eval += config.run.eval_interval;
      }
    }
  } catch (const std::exception& err) {
    record.error = err.what();
    diag.comment(std::string("seed aborted: ") + err.what());
  }
  return out;
}

std::string run_csv_name(const std::string& env_name, const std::string& algo,
                         std::uint64_t seed) {
  return env_name + "_" + algo + "_seed" + std::to_string(seed) + ".csv";
}

std::vector<RunRecord> run_experiment(const ExperimentConfig& config) {
  config.validate();
  const fs::path outdir(config.run.outdir);
  fs::create_directories(outdir);
  if (config.run.save_checkpoints) fs::create_directories(outdir / "checkpoints");
  {
    std::ofstream cfg(outdir / "config.txt", std::ios::binary);
    cfg << config_to_text(config);
  }

  unsigned workers = config.run.workers > 0
                         ? static_cast<unsigned>(config.run.workers)
                         : std::max(1u, std::thread::hardware_concurrency());
  if (const char* env_workers = std::getenv("MMQ_WORKERS")) {
    const int parsed = std::atoi(env_workers);
    if (parsed > 0) workers = static_cast<unsigned>(parsed);
  }
  workers = std::min<unsigned>(workers,
                               static_cast<unsigned>(config.run.seeds.size()));

  std::vector<RunRecord> records(config.run.seeds.size());
  std::atomic<std::size_t> cursor{0};
  const auto worker = [&]() {
    while (true) {
      const std::size_t k = cursor.fetch_add(1);
      if (k >= config.run.seeds.size()) break;
      const std::uint64_t seed = config.run.seeds[k];
      try {
        TrainResult result = train_seed(
            config, seed, (outdir / run_csv_name(config.env.name, config.algo, seed)).string(),
            (outdir / (config.env.name + "_" + config.algo + "_seed" +
                       std::to_string(seed) + "_diag.csv"))
                .string());
        if (config.run.save_checkpoints) {
          for (std::size_t i = 0; i < result.agents.size(); ++i) {
            const std::string stem = config.env.name + "_" + config.algo +
                                     "_seed" + std::to_string(seed) + "_agent" +
                                     std::to_string(i);
            save_checkpoint(*result.agents[i],
                            (outdir / "checkpoints" / (stem + ".bin")).string(),
                            (outdir / "checkpoints" / (stem + ".txt")).string());
          }
        }
        records[k] = std::move(result.record);
      } catch (const std::exception& err) {
        records[k].seed = seed;
        records[k].error = err.what();
      }
    }
  };

  std::vector<std::thread> pool;
  for (unsigned w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& thread : pool) thread.join();

  std::ofstream summary(outdir / "summary.txt", std::ios::binary);
  try {
    summary << render_summary({summarize(records)});
  } catch (const ConfigError&) {
    summary << "no summary: need at least two completed seeds\n";
    for (const RunRecord& record : records) {
      if (!record.points.empty()) {
        summary << "seed " << record.seed << " final " << std::setprecision(17)
                << record.final_score() << '\n';
      }
    }
  }
  for (const RunRecord& record : records) {
    if (!record.error.empty()) {
      summary << "# seed " << record.seed << " aborted: " << record.error << '\n';
    }
  }
  return records;
}

void save_checkpoint(Learner& learner, const std::string& bin_path,
                     const std::string& manifest_path) {
  std::ofstream manifest(manifest_path, std::ios::binary);
  std::ofstream bin(bin_path, std::ios::binary);
  if (!manifest || !bin) {
    throw ConfigError("cannot open checkpoint files for writing");
  }
  for (const auto& [name, net] : learner.nets()) {
    for (std::size_t layer = 0; layer < net->weights.size(); ++layer) {
      const Matrix& w = net->weights[layer];
      const Vector& b = net->biases[layer];
      manifest << name << ".w" << layer << ' ' << w.rows() << ' ' << w.cols()
               << '\n';
      bin.write(reinterpret_cast<const char*>(w.data()),
                static_cast<std::streamsize>(sizeof(double) * w.size()));
      manifest << name << ".b" << layer << ' ' << b.rows() << " 1\n";
      bin.write(reinterpret_cast<const char*>(b.data()),
                static_cast<std::streamsize>(sizeof(double) * b.size()));
    }
  }
}

void load_checkpoint(Learner& learner, const std::string& bin_path,
                     const std::string& manifest_path) {
  std::ifstream manifest(manifest_path, std::ios::binary);
  std::ifstream bin(bin_path, std::ios::binary);
  if (!manifest || !bin) throw ConfigError("cannot open checkpoint files");

  const auto read_tensor = [&](const std::string& want_name, double* dst,
                               long want_rows, long want_cols) {
    std::string name;
    long rows = 0;
    long cols = 0;
    if (!(manifest >> name >> rows >> cols)) {
      throw ShapeError("checkpoint manifest ended early at " + want_name);
    }
    if (name != want_name || rows != want_rows || cols != want_cols) {
      throw ShapeError("checkpoint tensor mismatch: manifest has " + name +
                       ", learner expects " + want_name);
    }
    const std::streamsize bytes =
        static_cast<std::streamsize>(sizeof(double)) * rows * cols;
    if (!bin.read(reinterpret_cast<char*>(dst), bytes)) {
      throw ShapeError("checkpoint payload ended early at " + want_name);
    }
  };

  for (const auto& [name, net] : learner.nets()) {
    for (std::size_t layer = 0; layer < net->weights.size(); ++layer) {
      Matrix& w = net->weights[layer];
      Vector& b = net->biases[layer];
      read_tensor(name + ".w" + std::to_string(layer), w.data(), w.rows(),
                  w.cols());
      read_tensor(name + ".b" + std::to_string(layer), b.data(), b.rows(), 1);
    }
  }
  std::string extra;
  if (manifest >> extra) {
    throw ShapeError("checkpoint manifest has extra tensor " + extra);
  }
  char byte = 0;
  if (bin.read(&byte, 1)) throw ShapeError("checkpoint payload has extra bytes");
}

double t_quantile_975(int df) {
  // Standard two-sided 95% critical values; the normal limit past df 30.
  static const double table[30] = {
      12.706205, 4.302653, 3.182446, 2.776445, 2.570582, 2.446912,
      2.364624,  2.306004, 2.262157, 2.228139, 2.200985, 2.178813,
      2.160369,  2.144787, 2.131450, 2.119905, 2.109816, 2.100922,
      2.093024,  2.085963, 2.079614, 2.073873, 2.068658, 2.063899,
      2.059539,  2.055529, 2.051831, 2.048407, 2.045230, 2.042272};
  if (df < 1) throw ConfigError("t quantile needs df >= 1");
  return df <= 30 ? table[df - 1] : 1.959964;
}

SummaryRow summarize(const std::vector<RunRecord>& records) {
  std::vector<const RunRecord*> valid;
  for (const RunRecord& record : records) {
    if (record.error.empty() && !record.points.empty()) valid.push_back(&record);
  }
  if (valid.size() < 2) {
    throw ConfigError("summary needs at least two completed seeds");
  }
  SummaryRow row;
  row.env_name = valid.front()->env_name;
  row.algo = valid.front()->algo;
  row.num_seeds = static_cast<int>(valid.size());
  double sum = 0.0;
  for (const RunRecord* record : valid) sum += record->final_score();
  row.mean = sum / row.num_seeds;
  double ss = 0.0;
  for (const RunRecord* record : valid) {
    const double d = record->final_score() - row.mean;
    ss += d * d;
  }
  row.seed_sd = std::sqrt(ss / (row.num_seeds - 1));
  row.half_width =
      t_quantile_975(row.num_seeds - 1) * row.seed_sd / std::sqrt(row.num_seeds);
  return row;
}

std::vector<SummaryRow> summarize_directory(const std::string& dir) {
  // Group per-seed CSVs by their "<env>_<algo>_seed<k>.csv" name.
  std::map<std::pair<std::string, std::string>, std::vector<RunRecord>> groups;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string file = entry.path().filename().string();
    if (entry.path().extension() != ".csv") continue;
    const auto seed_pos = file.rfind("_seed");
    if (seed_pos == std::string::npos) continue;
    const std::string stem = file.substr(0, seed_pos);
    const std::string tail = file.substr(seed_pos + 5);
    if (tail.find("_diag") != std::string::npos) continue;
    const auto algo_pos = stem.rfind('_');
    if (algo_pos == std::string::npos) continue;

    std::ifstream in(entry.path());
    std::string line;
    if (!std::getline(in, line) || line != kCsvHeader) continue;
    RunRecord record;
    record.env_name = stem.substr(0, algo_pos);
    record.algo = stem.substr(algo_pos + 1);
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      std::stringstream row(line);
      std::string seed_field;
      std::string step_field;
      std::string return_field;
      if (!std::getline(row, seed_field, ',') ||
          !std::getline(row, step_field, ',') ||
          !std::getline(row, return_field)) {
        throw ConfigError(file + ": malformed csv row '" + line + "'");
      }
      record.seed = std::stoull(seed_field);
      record.points.push_back({std::stol(step_field), std::stod(return_field)});
    }
    if (!record.points.empty()) {
      groups[{record.env_name, record.algo}].push_back(std::move(record));
    }
  }
  std::vector<SummaryRow> rows;
  for (const auto& [key, records] : groups) {
    if (records.size() < 2) continue;
    rows.push_back(summarize(records));
  }
  return rows;
}

std::string render_summary(const std::vector<SummaryRow>& rows) {
  std::ostringstream out;
  out << std::left << std::setw(18) << "env" << std::setw(10) << "algo"
      << std::setw(7) << "seeds" << std::setw(14) << "mean" << std::setw(14)
      << "ci95" << std::setw(14) << "seed_sd" << '\n';
  for (const SummaryRow& row : rows) {
    out << std::left << std::setw(18) << row.env_name << std::setw(10)
        << row.algo << std::setw(7) << row.num_seeds << std::setprecision(6)
        << std::fixed << std::setw(14) << row.mean << std::setw(14)
        << row.half_width << std::setw(14) << row.seed_sd << '\n';
    out.unsetf(std::ios::fixed);
  }
  for (const SummaryRow& row : rows) {
    out << "#row env=" << row.env_name << " algo=" << row.algo
        << " seeds=" << row.num_seeds << std::setprecision(17)
        << " mean=" << row.mean << " ci95=" << row.half_width
        << " sd=" << row.seed_sd << '\n';
  }
  return out.str();
}

}  // namespace mmq
