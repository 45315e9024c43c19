#include "qrsrm/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>
#include <thread>

#include "qrsrm/rng.hpp"
#include "qrsrm/risk_spectrum.hpp"
#include "qrsrm/text.hpp"

namespace qrsrm {
namespace {

namespace fs = std::filesystem;

double number(std::string_view key, std::string_view value) {
  try {
    return parse_number(value);
  } catch (const std::invalid_argument&) {
    throw ConfigError(std::string(key) + ": expected a number, got '" + std::string(value) + "'");
  }
}

long integer(std::string_view key, std::string_view value) {
  try {
    return static_cast<long>(parse_integer(value));
  } catch (const std::invalid_argument&) {
    throw ConfigError(std::string(key) + ": expected an integer, got '" + std::string(value) + "'");
  }
}

bool boolean(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError(std::string(key) + ": expected true or false, got '" + std::string(value) + "'");
}

template <typename T>
std::vector<T> integer_list(std::string_view key, std::string_view value) {
  std::vector<T> out;
  for (auto piece : split(value, ',')) {
    const long v = integer(key, trim(piece));
    if (v < 0) throw ConfigError(std::string(key) + ": negative entry");
    out.push_back(static_cast<T>(v));
  }
  if (out.empty()) throw ConfigError(std::string(key) + ": empty list");
  return out;
}

using Setter = std::function<void(RunConfig&, std::string_view, std::string_view)>;

// A bare kind ("qrsrm", "qrcvar") keeps the current spectrum, so that
// "algorithm" and "spectrum" can be given in either order.
void set_algorithm(RunConfig& c, std::string_view, std::string_view v) {
  try {
    Algorithm& a = c.train.algorithm;
    if (v == "qrsrm") {
      a.kind = AlgorithmKind::QrSrm;
    } else if (v == "qrcvar" || v == "qricvar") {
      a.kind = v == "qrcvar" ? AlgorithmKind::QrCvar : AlgorithmKind::QrIcvar;
      if (a.spectrum.family() != SpectrumFamily::CVaR) a.spectrum = RiskSpectrum::expectation();
      a.alpha = a.spectrum.parameter();
    } else {
      a = Algorithm::parse(v);
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("algorithm: ") + e.what());
  }
}

void set_spectrum(RunConfig& c, std::string_view, std::string_view v) {
  Algorithm& a = c.train.algorithm;
  try {
    a.spectrum = RiskSpectrum::parse(v);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("spectrum: ") + e.what());
  }
  if (a.kind == AlgorithmKind::QrCvar || a.kind == AlgorithmKind::QrIcvar) {
    if (a.spectrum.family() != SpectrumFamily::CVaR)
      throw ConfigError("spectrum: " + a.model_name() + " needs a cvar:<alpha> spectrum");
    a.alpha = a.spectrum.parameter();
  }
}

Setter real(double EnvConfig::*field) {
  return [field](RunConfig& c, std::string_view k, std::string_view v) { c.env.*field = number(k, v); };
}
Setter train_real(double TrainConfig::*field) {
  return [field](RunConfig& c, std::string_view k, std::string_view v) { c.train.*field = number(k, v); };
}
Setter train_long(long TrainConfig::*field) {
  return [field](RunConfig& c, std::string_view k, std::string_view v) { c.train.*field = integer(k, v); };
}
Setter train_int(int TrainConfig::*field) {
  return [field](RunConfig& c, std::string_view k, std::string_view v) {
    c.train.*field = static_cast<int>(integer(k, v));
  };
}

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = {
      {"env", [](RunConfig& c, auto, auto v) { c.env.name = std::string(v); }},
      {"gamma",
       [](RunConfig& c, auto k, auto v) {
         const double g = number(k, v);
         if (!(g >= 0.0 && g < 1.0)) throw ConfigError("gamma must lie in [0, 1)");
         c.env.gamma = g;
       }},
      {"max_steps", [](RunConfig& c, auto k, auto v) { c.env.max_steps = static_cast<int>(integer(k, v)); }},
      {"wind_probability", real(&EnvConfig::wind_probability)},
      {"cliff_reward", real(&EnvConfig::cliff_reward)},
      {"goal_reward", real(&EnvConfig::goal_reward)},
      {"put_drift", real(&EnvConfig::put_drift)},
      {"put_volatility", real(&EnvConfig::put_volatility)},
      {"put_initial_price", real(&EnvConfig::put_initial_price)},
      {"put_strike", real(&EnvConfig::put_strike)},
      {"put_dt", real(&EnvConfig::put_dt)},
      {"ou_mean", real(&EnvConfig::ou_mean)},
      {"ou_reversion", real(&EnvConfig::ou_reversion)},
      {"ou_volatility", real(&EnvConfig::ou_volatility)},
      {"ou_dt", real(&EnvConfig::ou_dt)},
      {"ou_initial_price", real(&EnvConfig::ou_initial_price)},
      {"transaction_cost", real(&EnvConfig::transaction_cost)},
      {"terminal_penalty", real(&EnvConfig::terminal_penalty)},
      {"max_inventory", real(&EnvConfig::max_inventory)},
      {"max_trade", real(&EnvConfig::max_trade)},
      {"trade_levels", [](RunConfig& c, auto k, auto v) { c.env.trade_levels = static_cast<int>(integer(k, v)); }},
      {"algorithm", set_algorithm},
      {"spectrum", set_spectrum},
      {"timesteps", [](RunConfig& c, auto k, auto v) { c.timesteps = integer(k, v); }},
      {"seeds", [](RunConfig& c, auto k, auto v) { c.seeds = integer_list<std::uint64_t>(k, v); }},
      {"quantiles", train_int(&TrainConfig::quantiles)},
      {"hidden", [](RunConfig& c, auto k, auto v) { c.train.hidden = integer_list<int>(k, v); }},
      {"learning_rate", train_real(&TrainConfig::learning_rate)},
      {"kappa", train_real(&TrainConfig::kappa)},
      {"batch_size", train_int(&TrainConfig::batch_size)},
      {"warmup", train_long(&TrainConfig::warmup)},
      {"replay_capacity", train_long(&TrainConfig::replay_capacity)},
      {"train_frequency", train_int(&TrainConfig::train_frequency)},
      {"sync_frequency", train_long(&TrainConfig::sync_frequency)},
      {"h_frequency", train_long(&TrainConfig::h_frequency)},
      {"b_frequency", train_long(&TrainConfig::b_frequency)},
      {"epsilon_start", train_real(&TrainConfig::epsilon_start)},
      {"epsilon_end", train_real(&TrainConfig::epsilon_end)},
      {"exploration_fraction", train_real(&TrainConfig::exploration_fraction)},
      {"log_frequency", train_long(&TrainConfig::log_frequency)},
      {"return_window", train_int(&TrainConfig::return_window)},
      {"eval_episodes", [](RunConfig& c, auto k, auto v) { c.eval_episodes = integer(k, v); }},
      {"metrics", [](RunConfig& c, auto, auto v) { c.metrics = split_metrics(v); }},
      {"output_dir", [](RunConfig& c, auto, auto v) { c.output_dir = std::string(v); }},
      {"record_wall_time", [](RunConfig& c, auto k, auto v) { c.record_wall_time = boolean(k, v); }},
  };
  return table;
}

std::string join_numbers(const auto& values) {
  std::string out;
  for (const auto& v : values) {
    if (!out.empty()) out += ',';
    out += std::to_string(v);
  }
  return out;
}

bool starts_metric(std::string_view piece) {
  piece = trim(piece);
  for (std::string_view family : {"mean", "cvar:", "wscvar:", "erm:", "dprm:"})
    if (piece.substr(0, family.size()) == family) return true;
  return false;
}

void ensure_parent(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

std::ofstream open_out(const fs::path& path) {
  ensure_parent(path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

}  // namespace

long default_timesteps(const std::string& env_name) {
  if (env_name == "meanrev") return 150000;
  if (env_name == "cliff" || env_name == "put") return 100000;
  return 20000;
}

RunConfig resolve(RunConfig config) {
  auto build = [&config] {
    try {
      return make_environment(config.env);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("environment: ") + e.what());
    } catch (const std::runtime_error& e) {
      throw ConfigError(std::string("environment: ") + e.what());
    }
  };
  // The shared default discount; fixtures carry their own.
  if (!config.env.gamma) config.env.gamma = config.env.name.rfind("fixture:", 0) == 0 ? build()->gamma() : 0.99;
  const auto env = build();
  const Algorithm& a = config.train.algorithm;
  if (a.kind == AlgorithmKind::QrDqn && a.spectrum.to_string() != RiskSpectrum::expectation().to_string())
    throw ConfigError("spectrum: qrdqn optimizes the mean; use qrsrm for '" + a.spectrum.to_string() + "'");
  if (!(*config.env.gamma > 0.0 && *config.env.gamma < 1.0)) throw ConfigError("gamma must lie in (0, 1) for training");
  if (!config.timesteps) config.timesteps = default_timesteps(config.env.name);
  config.train.total_timesteps = *config.timesteps;
  try {
    validate(config.train);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (config.seeds.empty()) throw ConfigError("seeds: empty list");
  if (config.eval_episodes <= 0) throw ConfigError("eval_episodes must be positive");
  if (config.metrics.empty()) throw ConfigError("metrics: empty list");
  for (const auto& m : config.metrics) {
    try {
      RiskSpectrum::parse(m);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("metrics: " + std::string(e.what()));
    }
  }
  if (config.name.empty()) throw ConfigError("run name is empty");
  return config;
}

void apply_setting(RunConfig& config, std::string_view key, std::string_view value) {
  const auto& table = setters();
  const auto it = table.find(key);
  if (it == table.end()) throw ConfigError("unknown key '" + std::string(key) + "'");
  it->second(config, key, trim(value));
}

std::vector<RunConfig> parse_config(std::string_view text) {
  RunConfig base;
  std::vector<RunConfig> runs;
  std::vector<int> run_lines;
  std::istringstream in{std::string(text)};
  std::string raw;
  for (int line_no = 1; std::getline(in, raw); ++line_no) {
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(line_no) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']' || line.substr(0, 5) != "[run.")
        throw ConfigError(where + "expected a [run.<name>] header");
      RunConfig run = base;
      run.name = std::string(trim(line.substr(5, line.size() - 6)));
      if (run.name.empty()) throw ConfigError(where + "empty run name");
      for (const auto& r : runs)
        if (r.name == run.name) throw ConfigError(where + "duplicate run '" + run.name + "'");
      runs.push_back(std::move(run));
      run_lines.push_back(line_no);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + "expected key=value");
    RunConfig& target = runs.empty() ? base : runs.back();
    try {
      apply_setting(target, trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  if (runs.empty()) {
    runs.push_back(base);
    run_lines.push_back(0);
  }
  for (std::size_t i = 0; i < runs.size(); ++i) {
    try {
      runs[i] = resolve(runs[i]);
    } catch (const ConfigError& e) {
      const std::string where = run_lines[i] > 0 ? "run '" + runs[i].name + "' (line " +
                                                       std::to_string(run_lines[i]) + "): "
                                                 : "";
      throw ConfigError(where + e.what());
    }
  }
  return runs;
}

std::vector<RunConfig> load_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    return parse_config(buffer.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_config(std::ostream& out, const RunConfig& c) {
  const EnvConfig& e = c.env;
  out << "[run." << c.name << "]\n";
  out << "env=" << e.name << '\n';
  if (e.gamma) out << "gamma=" << format_number(*e.gamma) << '\n';
  if (e.max_steps) out << "max_steps=" << *e.max_steps << '\n';
  const std::pair<const char*, double> env_reals[] = {
      {"wind_probability", e.wind_probability}, {"cliff_reward", e.cliff_reward},
      {"goal_reward", e.goal_reward},           {"put_drift", e.put_drift},
      {"put_volatility", e.put_volatility},     {"put_initial_price", e.put_initial_price},
      {"put_strike", e.put_strike},             {"put_dt", e.put_dt},
      {"ou_mean", e.ou_mean},                   {"ou_reversion", e.ou_reversion},
      {"ou_volatility", e.ou_volatility},       {"ou_dt", e.ou_dt},
      {"ou_initial_price", e.ou_initial_price}, {"transaction_cost", e.transaction_cost},
      {"terminal_penalty", e.terminal_penalty}, {"max_inventory", e.max_inventory},
      {"max_trade", e.max_trade},
  };
  for (const auto& [key, v] : env_reals) out << key << '=' << format_number(v) << '\n';
  out << "trade_levels=" << e.trade_levels << '\n';

  const TrainConfig& t = c.train;
  out << "algorithm=" << t.algorithm.to_string() << '\n';
  if (c.timesteps) out << "timesteps=" << *c.timesteps << '\n';
  out << "seeds=" << join_numbers(c.seeds) << '\n';
  out << "quantiles=" << t.quantiles << '\n';
  out << "hidden=" << join_numbers(t.hidden) << '\n';
  out << "learning_rate=" << format_number(t.learning_rate) << '\n';
  out << "kappa=" << format_number(t.kappa) << '\n';
  out << "batch_size=" << t.batch_size << '\n';
  out << "warmup=" << t.warmup << '\n';
  out << "replay_capacity=" << t.replay_capacity << '\n';
  out << "train_frequency=" << t.train_frequency << '\n';
  out << "sync_frequency=" << t.sync_frequency << '\n';
  out << "h_frequency=" << t.h_frequency << '\n';
  out << "b_frequency=" << t.b_frequency << '\n';
  out << "epsilon_start=" << format_number(t.epsilon_start) << '\n';
  out << "epsilon_end=" << format_number(t.epsilon_end) << '\n';
  out << "exploration_fraction=" << format_number(t.exploration_fraction) << '\n';
  out << "log_frequency=" << t.log_frequency << '\n';
  out << "return_window=" << t.return_window << '\n';
  out << "eval_episodes=" << c.eval_episodes << '\n';
  out << "metrics=";
  for (std::size_t i = 0; i < c.metrics.size(); ++i) out << (i ? "," : "") << c.metrics[i];
  out << '\n';
  out << "output_dir=" << c.output_dir << '\n';
  out << "record_wall_time=" << (c.record_wall_time ? "true" : "false") << '\n';
}

std::vector<std::string> split_metrics(std::string_view text) {
  std::vector<std::string> out;
  for (auto piece : split(text, ',')) {
    piece = trim(piece);
    if (piece.empty()) continue;
    if (starts_metric(piece) || out.empty()) {
      out.emplace_back(piece);
    } else {
      out.back() += ',';
      out.back() += piece;
    }
  }
  return out;
}

std::vector<MetricValue> return_metrics(const std::vector<double>& returns, const std::vector<std::string>& metrics) {
  const DiscreteDistribution empirical = DiscreteDistribution::empirical(returns);
  std::vector<MetricValue> out;
  for (const auto& m : metrics) out.push_back({m, srm_value(RiskSpectrum::parse(m), empirical)});
  return out;
}

Evaluation evaluate(const Agent& agent, long episodes, const std::vector<std::string>& metrics,
                    std::uint64_t seed) {
  if (episodes <= 0) throw std::invalid_argument("evaluation needs at least one episode");
  Evaluation out;
  out.returns.reserve(static_cast<std::size_t>(episodes));
  Augmented roll(agent.environment().clone(), agent.gamma());
  for (long k = 0; k < episodes; ++k) {
    AugmentedState st = roll.reset(derive_seed(seed, stream::kEval, static_cast<std::uint64_t>(k)),
                                   agent.initial_b());
    for (;;) {
      const AugmentedStep step = roll.step(agent.act(st));
      st = step.next;
      if (step.done) break;
    }
    out.returns.push_back(st.s);
  }
  out.metrics = return_metrics(out.returns, metrics);
  return out;
}

std::string csv_field(std::string_view text) {
  if (text.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(text);
  std::string out = "\"";
  for (char ch : text) {
    if (ch == '"') out += '"';
    out += ch;
  }
  out += '"';
  return out;
}

std::vector<std::string> csv_split(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          out.back() += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        out.back() += ch;
      }
    } else if (ch == '"') {
      if (!out.back().empty()) throw std::invalid_argument("stray quote in CSV field");
      quoted = true;
    } else if (ch == ',') {
      out.emplace_back();
    } else {
      out.back() += ch;
    }
  }
  if (quoted) throw std::invalid_argument("unterminated quote in CSV record");
  return out;
}

void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows, bool header) {
  if (header) out << "seed,model,spectrum,metric,value,episodes,wall_seconds\n";
  for (const auto& r : rows) {
    out << r.seed << ',' << csv_field(r.model) << ',' << csv_field(r.spectrum) << ',' << csv_field(r.metric)
        << ',' << format_number(r.value) << ',' << r.episodes << ',' << format_number(r.wall_seconds) << '\n';
  }
}

std::vector<MetricsRow> read_metrics_csv(std::istream& in) {
  std::vector<MetricsRow> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = csv_split(line);
    if (fields.size() != 7)
      throw std::invalid_argument("metrics CSV line " + std::to_string(line_no) + ": expected 7 fields");
    if (fields[0] == "seed") continue;
    try {
      rows.push_back({static_cast<std::uint64_t>(parse_integer(fields[0])), fields[1], fields[2], fields[3],
                      parse_number(fields[4]), static_cast<long>(parse_integer(fields[5])),
                      parse_number(fields[6])});
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("metrics CSV line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return rows;
}

Table aggregate(const std::vector<MetricsRow>& rows, const std::vector<std::string>& metrics) {
  Table table;
  table.metrics = metrics;
  if (table.metrics.empty()) {
    for (const auto& r : rows)
      if (std::find(table.metrics.begin(), table.metrics.end(), r.metric) == table.metrics.end())
        table.metrics.push_back(r.metric);
  }
  using Key = std::pair<std::string, std::string>;
  std::vector<Key> order;
  std::map<Key, std::map<std::string, std::vector<double>>> values;
  std::map<Key, std::vector<std::uint64_t>> seeds;
  for (const auto& r : rows) {
    const Key key{r.model, r.spectrum};
    if (!values.count(key)) order.push_back(key);
    values[key][r.metric].push_back(r.value);
    auto& s = seeds[key];
    if (std::find(s.begin(), s.end(), r.seed) == s.end()) s.push_back(r.seed);
  }
  for (const auto& key : order) {
    TableRow row{key.first, key.second, seeds[key].size(), {}, {}};
    for (const auto& m : table.metrics) {
      const auto it = values[key].find(m);
      if (it == values[key].end()) {
        row.mean.push_back(std::nan(""));
        row.stddev.push_back(std::nan(""));
        continue;
      }
      const auto& v = it->second;
      double mean = 0.0;
      for (double x : v) mean += x;
      mean /= static_cast<double>(v.size());
      double ss = 0.0;
      for (double x : v) ss += (x - mean) * (x - mean);
      row.mean.push_back(mean);
      row.stddev.push_back(v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0);
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

void write_table_csv(std::ostream& out, const Table& table) {
  out << "model,spectrum,seeds";
  for (const auto& m : table.metrics) out << ',' << csv_field(m + " mean") << ',' << csv_field(m + " std");
  out << '\n';
  for (const auto& row : table.rows) {
    out << csv_field(row.model) << ',' << csv_field(row.spectrum) << ',' << row.seeds;
    for (std::size_t i = 0; i < table.metrics.size(); ++i) {
      out << ',' << (std::isnan(row.mean[i]) ? "" : format_number(row.mean[i]));
      out << ',' << (std::isnan(row.stddev[i]) ? "" : format_number(row.stddev[i]));
    }
    out << '\n';
  }
}

RunArtifacts artifact_paths(const RunConfig& config, std::uint64_t seed) {
  const fs::path dir(config.output_dir);
  const std::string stem = config.name + "-seed" + std::to_string(seed);
  return {dir / (stem + ".qrsrm"), dir / (stem + ".cfg"), dir / (stem + "-train.csv"),
          dir / (stem + "-metrics.csv")};
}

Agent make_agent(const RunConfig& config, std::uint64_t seed) {
  const RunConfig resolved = resolve(config);
  const auto env = make_environment(resolved.env);
  return Agent(*env, *resolved.env.gamma, resolved.train, seed);
}

RunArtifacts train_run(const RunConfig& config, std::uint64_t seed) {
  RunConfig run = resolve(config);
  run.seeds = {seed};
  const RunArtifacts paths = artifact_paths(run, seed);
  Agent agent = make_agent(run, seed);

  const auto start = std::chrono::steady_clock::now();
  const auto records = agent.train();
  const Evaluation eval = evaluate(agent, run.eval_episodes, run.metrics, seed);
  const double wall =
      run.record_wall_time ? std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() : 0.0;

  ensure_parent(paths.checkpoint);
  write_checkpoint(paths.checkpoint.string(), agent.checkpoint());
  {
    auto out = open_out(paths.config);
    write_config(out, run);
  }
  {
    auto out = open_out(paths.train_log);
    out << "step,episodes,loss,w1,objective,mean_return,epsilon\n";
    for (const auto& r : records)
      out << r.step << ',' << r.episodes << ',' << format_number(r.loss) << ',' << format_number(r.w1) << ','
          << format_number(r.objective) << ',' << format_number(r.mean_return) << ',' << format_number(r.epsilon)
          << '\n';
  }
  std::vector<MetricsRow> rows;
  for (const auto& m : eval.metrics)
    rows.push_back({seed, run.train.algorithm.model_name(), run.train.algorithm.spectrum_name(), m.metric, m.value,
                    run.eval_episodes, wall});
  auto out = open_out(paths.metrics);
  write_metrics_csv(out, rows);
  return paths;
}

fs::path sidecar_path(const fs::path& checkpoint) {
  fs::path p = checkpoint;
  return p.replace_extension(".cfg");
}

Agent load_agent(const fs::path& checkpoint, RunConfig* config) {
  const auto runs = load_config(sidecar_path(checkpoint));
  if (runs.size() != 1 || runs[0].seeds.size() != 1)
    throw ConfigError(sidecar_path(checkpoint).string() + ": expected a single run with a single seed");
  Agent agent = make_agent(runs[0], runs[0].seeds[0]);
  agent.load(read_checkpoint(checkpoint.string()));
  if (config) *config = runs[0];
  return agent;
}

std::vector<SweepJob> sweep_jobs(const std::vector<RunConfig>& runs) {
  std::vector<SweepJob> jobs;
  for (const auto& run : runs)
    for (auto seed : run.seeds) jobs.push_back({run, seed});
  return jobs;
}

std::vector<RunArtifacts> run_sweep(const std::vector<SweepJob>& jobs, int threads, const fs::path& merged) {
  std::vector<RunArtifacts> results(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        results[i] = train_run(jobs[i].config, jobs[i].seed);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int n = std::max(1, std::min<int>(threads, static_cast<int>(jobs.size())));
  std::vector<std::thread> pool;
  for (int t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  auto out = open_out(merged);
  out << "seed,model,spectrum,metric,value,episodes,wall_seconds\n";
  for (const auto& r : results) {
    std::ifstream in(r.metrics, std::ios::binary);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) out << line << '\n';
  }
  return results;
}

}  // namespace qrsrm
