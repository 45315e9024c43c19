#pragma once

// Run configuration, evaluation protocol, metrics files and the result
// tables built from them.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "qrsrm/agent.hpp"
#include "qrsrm/environment.hpp"

namespace qrsrm {

/// Malformed or out-of-range configuration; the message carries the line
/// number when it comes from a file.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::string name = "default";
  EnvConfig env;
  TrainConfig train;
  /// Unset means the environment's default length.
  std::optional<long> timesteps;
  std::vector<std::uint64_t> seeds{1};
  long eval_episodes = 10000;
  std::vector<std::string> metrics{"mean"};
  std::string output_dir = "runs";
  /// Off by default so that reruns write byte-identical metrics files.
  bool record_wall_time = false;
};

/// 100k for cliff and put, 150k for meanrev, 20k for fixtures.
long default_timesteps(const std::string& env_name);

/// Fills in everything left to defaults and checks the ranges. gamma
/// defaults to 0.99 for every named environment (cliff included) and to the
/// model's own value for fixtures. Throws ConfigError.
RunConfig resolve(RunConfig config);

/// "key=value" lines, '#' comments. Keys before the first "[run.<name>]"
/// header apply to every run; without headers the file is a single run
/// named "default". An empty file gives one run with all defaults. Each
/// returned run is resolved.
std::vector<RunConfig> parse_config(std::string_view text);
std::vector<RunConfig> load_config(const std::filesystem::path& path);
/// Applies one key to `config`; throws ConfigError on an unknown key or a
/// bad value. Shared by the file parser and the CLI overrides.
void apply_setting(RunConfig& config, std::string_view key, std::string_view value);

/// Every key, in a form parse_config reads back to the same config.
void write_config(std::ostream& out, const RunConfig& config);

/// Splits "mean,cvar:0.1,wscvar:0.1,1@0.8,0.2" into metric specs; a piece
/// that does not start with a family name continues the previous spec.
std::vector<std::string> split_metrics(std::string_view text);

struct MetricValue {
  std::string metric;
  double value;
};

struct Evaluation {
  std::vector<double> returns;
  std::vector<MetricValue> metrics;
};

/// Greedy rollouts of a frozen agent. Episode k resets the environment with
/// derive_seed(seed, eval stream, k), so every episode is reproducible on
/// its own. Each metric is its SRM on the empirical return distribution.
Evaluation evaluate(const Agent& agent, long episodes, const std::vector<std::string>& metrics,
                    std::uint64_t seed);
/// Metrics of a given set of returns.
std::vector<MetricValue> return_metrics(const std::vector<double>& returns, const std::vector<std::string>& metrics);

struct MetricsRow {
  std::uint64_t seed = 0;
  std::string model;
  std::string spectrum;
  std::string metric;
  double value = 0.0;
  long episodes = 0;
  double wall_seconds = 0.0;
};

/// RFC-4180 field: quoted when it contains a comma, quote or newline.
std::string csv_field(std::string_view text);
/// Splits one CSV record; throws std::invalid_argument on a broken quote.
std::vector<std::string> csv_split(std::string_view line);

void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows, bool header = true);
std::vector<MetricsRow> read_metrics_csv(std::istream& in);

struct TableRow {
  std::string model;
  std::string spectrum;
  std::size_t seeds = 0;
  /// Aligned with Table::metrics.
  std::vector<double> mean;
  std::vector<double> stddev;
};

struct Table {
  std::vector<std::string> metrics;
  std::vector<TableRow> rows;
};

/// Mean and sample standard deviation across seeds per (model, spectrum),
/// rows in first-seen order. An empty `metrics` takes every metric present.
Table aggregate(const std::vector<MetricsRow>& rows, const std::vector<std::string>& metrics = {});
/// model,spectrum,seeds then "<metric> mean" and "<metric> std" per metric.
void write_table_csv(std::ostream& out, const Table& table);

/// Files written by one (run, seed) training job.
struct RunArtifacts {
  std::filesystem::path checkpoint;
  std::filesystem::path config;
  std::filesystem::path train_log;
  std::filesystem::path metrics;
};

/// Paths used for `config` and `seed` under config.output_dir.
RunArtifacts artifact_paths(const RunConfig& config, std::uint64_t seed);

/// The agent a resolved config describes, untrained.
Agent make_agent(const RunConfig& config, std::uint64_t seed);

/// Trains, evaluates, and writes the checkpoint, its sidecar config (the
/// resolved run with this seed only), the training log and the metrics CSV.
RunArtifacts train_run(const RunConfig& config, std::uint64_t seed);

/// The sidecar config next to a checkpoint: same stem, ".cfg".
std::filesystem::path sidecar_path(const std::filesystem::path& checkpoint);
/// Rebuilds the agent from a checkpoint and its sidecar config.
Agent load_agent(const std::filesystem::path& checkpoint, RunConfig* config = nullptr);

struct SweepJob {
  RunConfig config;
  std::uint64_t seed;
};

/// Every (run, seed) pair, runs in file order.
std::vector<SweepJob> sweep_jobs(const std::vector<RunConfig>& runs);
/// Runs the jobs on `threads` workers, each owning its agent and
/// environment, then concatenates the per-job metrics files in job order
/// into `merged`. Rethrows the first failure after all workers stop.
std::vector<RunArtifacts> run_sweep(const std::vector<SweepJob>& jobs, int threads,
                                    const std::filesystem::path& merged);

}  // namespace qrsrm
