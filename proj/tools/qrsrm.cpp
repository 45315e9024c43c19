// Command-line front end: train, eval, decompose, sweep, table.
// Exit status 1 for configuration and I/O errors, 2 for numeric failures.

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "qrsrm/approximator.hpp"
#include "qrsrm/decomposition.hpp"
#include "qrsrm/harness.hpp"
#include "qrsrm/text.hpp"

namespace fs = std::filesystem;
using namespace qrsrm;

namespace {

struct TrainArgs {
  std::string config;
  std::string run;
  std::string env;
  std::string algo;
  std::optional<std::uint64_t> seed;
  std::optional<long> steps;
  std::optional<double> gamma;
  std::optional<long> episodes;
  std::string metrics;
  std::string out;
  std::vector<std::string> set;
};

struct EvalArgs {
  std::string ckpt;
  std::optional<long> episodes;
  std::string metrics;
  std::optional<std::uint64_t> seed;
  std::string out;
};

struct DecomposeArgs {
  std::string ckpt;
  std::string env;
  std::uint64_t seed = 0;
  std::string out;
};

struct SweepArgs {
  std::string config;
  int jobs = 0;
  std::string out;
};

struct TableArgs {
  std::string in;
  std::string metrics;
  std::string out;
};

void override(RunConfig& c, std::string_view key, const std::string& value) {
  if (!value.empty()) apply_setting(c, key, value);
}

RunConfig train_config(const TrainArgs& a) {
  RunConfig run;
  if (!a.config.empty()) {
    const auto runs = load_config(a.config);
    if (a.run.empty()) {
      if (runs.size() != 1) throw ConfigError(a.config + ": several runs; choose one with --run");
      run = runs[0];
    } else {
      const auto it = std::find_if(runs.begin(), runs.end(), [&](const RunConfig& r) { return r.name == a.run; });
      if (it == runs.end()) throw ConfigError(a.config + ": no run named '" + a.run + "'");
      run = *it;
    }
  }
  // Fields derived from the environment are re-derived after overrides.
  if (!a.env.empty() || a.gamma) run.env.gamma.reset();
  if (!a.env.empty() || a.steps) run.timesteps.reset();
  override(run, "env", a.env);
  override(run, "algorithm", a.algo);
  if (a.gamma) apply_setting(run, "gamma", format_number(*a.gamma));
  if (a.steps) run.timesteps = *a.steps;
  if (a.episodes) run.eval_episodes = *a.episodes;
  override(run, "metrics", a.metrics);
  override(run, "output_dir", a.out);
  for (const auto& kv : a.set) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    apply_setting(run, kv.substr(0, eq), kv.substr(eq + 1));
  }
  return resolve(run);
}

std::ofstream open_file(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

int train(const TrainArgs& a) {
  const RunConfig run = train_config(a);
  const std::uint64_t seed = a.seed ? *a.seed : run.seeds.front();
  const RunArtifacts paths = train_run(run, seed);
  std::cout << paths.checkpoint.string() << '\n' << paths.metrics.string() << '\n';
  return 0;
}

int eval(const EvalArgs& a) {
  RunConfig run;
  const Agent agent = load_agent(a.ckpt, &run);
  if (a.episodes) run.eval_episodes = *a.episodes;
  override(run, "metrics", a.metrics);
  run = resolve(run);
  const std::uint64_t seed = a.seed ? *a.seed : run.seeds.front();
  const Evaluation result = evaluate(agent, run.eval_episodes, run.metrics, seed);
  std::vector<MetricsRow> rows;
  for (const auto& m : result.metrics)
    rows.push_back({seed, run.train.algorithm.model_name(), run.train.algorithm.spectrum_name(), m.metric, m.value,
                    run.eval_episodes, 0.0});
  if (a.out.empty()) {
    write_metrics_csv(std::cout, rows);
  } else {
    auto out = open_file(a.out);
    write_metrics_csv(out, rows);
  }
  return 0;
}

int decompose(const DecomposeArgs& a) {
  RunConfig run = load_config(sidecar_path(a.ckpt)).at(0);
  if (!a.env.empty() && a.env != run.env.name) {
    run.env.gamma.reset();
    apply_setting(run, "env", a.env);
  }
  Agent agent = make_agent(run, run.seeds.front());
  try {
    agent.load(read_checkpoint(a.ckpt));
  } catch (const std::runtime_error& e) {
    throw ConfigError(a.ckpt + " does not fit environment '" + run.env.name + "': " + e.what());
  }
  const auto steps = trajectory_report(agent, a.seed);
  if (a.out.empty()) {
    write_trajectory_csv(std::cout, steps);
  } else {
    auto out = open_file(a.out);
    write_trajectory_csv(out, steps);
  }
  return 0;
}

int sweep(const SweepArgs& a) {
  auto runs = load_config(a.config);
  if (!a.out.empty())
    for (auto& r : runs) r.output_dir = a.out;
  const int threads = a.jobs > 0 ? a.jobs : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  const fs::path merged = fs::path(runs.front().output_dir) / "metrics.csv";
  run_sweep(sweep_jobs(runs), threads, merged);
  std::cout << merged.string() << '\n';
  return 0;
}

// A directory contributes its per-job "*-metrics.csv" files, never the
// merged sweep file, so rows are not counted twice.
std::vector<MetricsRow> read_rows(const fs::path& in) {
  std::vector<fs::path> files;
  if (fs::is_directory(in)) {
    for (const auto& entry : fs::recursive_directory_iterator(in)) {
      const std::string name = entry.path().filename().string();
      if (entry.is_regular_file() && name.size() > 12 && name.ends_with("-metrics.csv")) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
  } else {
    files.push_back(in);
  }
  if (files.empty()) throw ConfigError(in.string() + ": no metrics files");
  std::vector<MetricsRow> rows;
  for (const auto& f : files) {
    std::ifstream stream(f, std::ios::binary);
    if (!stream) throw ConfigError("cannot read " + f.string());
    try {
      const auto part = read_metrics_csv(stream);
      rows.insert(rows.end(), part.begin(), part.end());
    } catch (const std::invalid_argument& e) {
      throw ConfigError(f.string() + ": " + e.what());
    }
  }
  return rows;
}

int table(const TableArgs& a) {
  const auto rows = read_rows(a.in);
  const Table t = aggregate(rows, a.metrics.empty() ? std::vector<std::string>{} : split_metrics(a.metrics));
  if (a.out.empty()) {
    write_table_csv(std::cout, t);
  } else {
    auto out = open_file(a.out);
    write_table_csv(out, t);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quantile-regression agents for spectral risk measures"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "train one (config, seed) run and evaluate it");
  train_cmd->add_option("--config", ta.config, "config file");
  train_cmd->add_option("--run", ta.run, "run section to use when the config has several");
  train_cmd->add_option("--env", ta.env, "cliff, put, meanrev or fixture:<path>");
  train_cmd->add_option("--algo", ta.algo, "qrdqn, qrcvar:<a>, qricvar:<a> or qrsrm:<spectrum>");
  train_cmd->add_option("--seed", ta.seed, "seed (default: first seed of the run)");
  train_cmd->add_option("--steps", ta.steps, "training timesteps");
  train_cmd->add_option("--gamma", ta.gamma, "discount factor");
  train_cmd->add_option("--episodes", ta.episodes, "evaluation episodes");
  train_cmd->add_option("--metrics", ta.metrics, "comma-separated metric specs");
  train_cmd->add_option("--out", ta.out, "output directory");
  train_cmd->add_option("--set", ta.set, "extra key=value config settings")->take_all();

  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_cmd->add_option("--ckpt", ea.ckpt, "checkpoint file")->required();
  eval_cmd->add_option("--episodes", ea.episodes, "evaluation episodes");
  eval_cmd->add_option("--metrics", ea.metrics, "comma-separated metric specs");
  eval_cmd->add_option("--seed", ea.seed, "evaluation seed");
  eval_cmd->add_option("--out", ea.out, "metrics CSV (default: stdout)");

  DecomposeArgs da;
  auto* dec_cmd = app.add_subcommand("decompose", "per-step CVaR preferences along one greedy episode");
  dec_cmd->add_option("--ckpt", da.ckpt, "checkpoint file")->required();
  dec_cmd->add_option("--env", da.env, "environment (default: the one it was trained on)");
  dec_cmd->add_option("--seed", da.seed, "episode seed");
  dec_cmd->add_option("--out", da.out, "CSV file (default: stdout)");

  SweepArgs sa;
  auto* sweep_cmd = app.add_subcommand("sweep", "every run and seed of a config file");
  sweep_cmd->add_option("--config", sa.config, "config file")->required();
  sweep_cmd->add_option("--jobs", sa.jobs, "worker threads (default: hardware threads)");
  sweep_cmd->add_option("--out", sa.out, "output directory for every run");

  TableArgs tb;
  auto* table_cmd = app.add_subcommand("table", "mean and std across seeds per model");
  table_cmd->add_option("--in", tb.in, "metrics CSV or a directory of them")->required();
  table_cmd->add_option("--metrics", tb.metrics, "metrics to include (default: all)");
  table_cmd->add_option("--out", tb.out, "CSV file (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*train_cmd) return train(ta);
    if (*eval_cmd) return eval(ea);
    if (*dec_cmd) return decompose(da);
    if (*sweep_cmd) return sweep(sa);
    if (*table_cmd) return table(tb);
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
