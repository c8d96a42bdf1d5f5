#pragma once

#include "hiro/hiro.hpp"

#include <json.hpp>

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace hiro {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& message)
      : std::runtime_error("config key '" + key + "': " + message), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

struct ExperimentConfig {
  env::EnvKind env = env::EnvKind::push;
  std::uint64_t master_seed = 0;
  std::string out_dir = "runs/default";
  std::uint64_t checkpoint_every = 50'000;
  std::string scale = "desk";  // desk | full: budget defaults
  bool wall_clock = false;     // add wall-clock timestamps to metric records
  HiroConfig hiro;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

namespace config_detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

inline double parse_double(const std::string& key, const std::string& value) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc{} || ptr != value.data() + value.size() || !std::isfinite(v))
    throw ConfigError(key, "expected a real number, got '" + value + "'");
  return v;
}

inline std::uint64_t parse_count(const std::string& key, const std::string& value) {
  std::string digits = value;
  std::erase(digits, '_');
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v);
  if (ec != std::errc{} || ptr != digits.data() + digits.size() || digits.empty())
    throw ConfigError(key, "expected a non-negative integer, got '" + value + "'");
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError(key, "expected true or false, got '" + value + "'");
}

inline std::vector<std::size_t> parse_sizes(const std::string& key, const std::string& value) {
  std::vector<std::size_t> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_count(key, trim(item)));
  if (out.empty()) throw ConfigError(key, "expected a comma-separated list of layer widths");
  for (auto n : out)
    if (n == 0) throw ConfigError(key, "layer widths must be positive");
  return out;
}

struct KeyInfo {
  const char* section;
  const char* key;
};

// Every accepted key, in dump order.
inline constexpr KeyInfo kKeys[] = {
    {"experiment", "env"},
    {"experiment", "ablation"},
    {"experiment", "correction"},
    {"experiment", "seed"},
    {"experiment", "out"},
    {"experiment", "checkpoint_every"},
    {"experiment", "scale"},
    {"experiment", "wall_clock"},
    {"hiro", "c"},
    {"hiro", "low_reward_scale"},
    {"hiro", "high_reward_scale"},
    {"hiro", "low_train_every"},
    {"hiro", "high_train_every"},
    {"hiro", "eval_every"},
    {"hiro", "eval_episodes"},
    {"hiro", "total_steps"},
    {"hiro", "batch_size"},
    {"hiro", "sigma_low"},
    {"hiro", "sigma_high"},
    {"hiro", "pretrain_steps"},
    {"hiro", "relabel_low_prob"},
    {"hiro", "goal_range_xy"},
    {"hiro", "goal_range_z"},
    {"td3", "hidden"},
    {"td3", "gamma"},
    {"td3", "tau"},
    {"td3", "actor_lr"},
    {"td3", "critic_lr"},
    {"td3", "policy_noise"},
    {"td3", "noise_clip"},
    {"td3", "actor_delay"},
    {"replay", "buffer_capacity"},
    {"correction", "candidate_count"},
};

inline const KeyInfo* find_key(std::string_view key) {
  for (const auto& k : kKeys)
    if (key == k.key) return &k;
  return nullptr;
}

}  // namespace config_detail

// Budget defaults. Desk scale is the laptop-sized profile; full scale the long one.
inline void apply_scale(ExperimentConfig& cfg, const std::string& scale) {
  if (scale == "desk") {
    cfg.hiro.total_steps = 300'000;
    cfg.hiro.eval_every = 10'000;
    cfg.hiro.eval_episodes = 20;
    cfg.hiro.pretrain_steps = 100'000;
  } else if (scale == "full") {
    cfg.hiro.total_steps = 10'000'000;
    cfg.hiro.eval_every = 50'000;
    cfg.hiro.eval_episodes = 50;
    cfg.hiro.pretrain_steps = 2'000'000;
  } else {
    throw ConfigError("scale", "expected desk or full, got '" + scale + "'");
  }
  cfg.scale = scale;
}

inline ExperimentConfig default_experiment_config() {
  ExperimentConfig cfg;
  apply_scale(cfg, "desk");
  return cfg;
}

/// Sets one key from its textual value. Unknown keys and bad values raise ConfigError.
inline void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  using namespace config_detail;
  auto& h = cfg.hiro;
  auto positive = [&](std::uint64_t v) {
    if (v == 0) throw ConfigError(key, "must be >= 1");
    return v;
  };
  auto positive_real = [&](double v) {
    if (!(v > 0.0)) throw ConfigError(key, "must be > 0");
    return v;
  };
  auto non_negative = [&](double v) {
    if (v < 0.0) throw ConfigError(key, "must be >= 0");
    return v;
  };
  auto unit = [&](double v) {
    if (v < 0.0 || v > 1.0) throw ConfigError(key, "must lie in [0, 1]");
    return v;
  };

  if (key == "env") {
    auto e = env::parse_env(value);
    if (!e) throw ConfigError(key, "unknown environment '" + value + "'");
    cfg.env = *e;
  } else if (key == "ablation") {
    auto a = parse_ablation(value);
    if (!a) throw ConfigError(key, "unknown ablation '" + value + "'");
    h.ablation = *a;
  } else if (key == "correction") {
    auto c = parse_correction(value);
    if (!c) throw ConfigError(key, "unknown correction '" + value + "'");
    h.correction = *c;
  } else if (key == "seed") {
    cfg.master_seed = parse_count(key, value);
  } else if (key == "out") {
    if (value.empty()) throw ConfigError(key, "must not be empty");
    cfg.out_dir = value;
  } else if (key == "checkpoint_every") {
    cfg.checkpoint_every = parse_count(key, value);
  } else if (key == "scale") {
    apply_scale(cfg, value);
  } else if (key == "wall_clock") {
    cfg.wall_clock = parse_bool(key, value);
  } else if (key == "c") {
    h.c = positive(parse_count(key, value));
  } else if (key == "low_reward_scale") {
    h.low_reward_scale = positive_real(parse_double(key, value));
  } else if (key == "high_reward_scale") {
    h.high_reward_scale = positive_real(parse_double(key, value));
  } else if (key == "low_train_every") {
    h.low_train_every = positive(parse_count(key, value));
  } else if (key == "high_train_every") {
    h.high_train_every = positive(parse_count(key, value));
  } else if (key == "eval_every") {
    h.eval_every = parse_count(key, value);
  } else if (key == "eval_episodes") {
    h.eval_episodes = parse_count(key, value);
  } else if (key == "total_steps") {
    h.total_steps = parse_count(key, value);
  } else if (key == "batch_size") {
    h.batch_size = positive(parse_count(key, value));
  } else if (key == "sigma_low") {
    h.sigma_low = non_negative(parse_double(key, value));
  } else if (key == "sigma_high") {
    h.sigma_high = non_negative(parse_double(key, value));
  } else if (key == "pretrain_steps") {
    h.pretrain_steps = parse_count(key, value);
  } else if (key == "relabel_low_prob") {
    h.relabel_low_prob = unit(parse_double(key, value));
  } else if (key == "goal_range_xy") {
    h.goal_range_xy = positive_real(parse_double(key, value));
  } else if (key == "goal_range_z") {
    h.goal_range_z = positive_real(parse_double(key, value));
  } else if (key == "hidden") {
    h.hidden = parse_sizes(key, value);
  } else if (key == "gamma") {
    h.gamma = unit(parse_double(key, value));
  } else if (key == "tau") {
    h.tau = unit(parse_double(key, value));
  } else if (key == "actor_lr") {
    h.actor_lr = positive_real(parse_double(key, value));
  } else if (key == "critic_lr") {
    h.critic_lr = positive_real(parse_double(key, value));
  } else if (key == "policy_noise") {
    h.policy_noise = non_negative(parse_double(key, value));
  } else if (key == "noise_clip") {
    h.noise_clip = non_negative(parse_double(key, value));
  } else if (key == "actor_delay") {
    h.actor_delay = positive(parse_count(key, value));
  } else if (key == "buffer_capacity") {
    h.buffer_capacity = positive(parse_count(key, value));
  } else if (key == "candidate_count") {
    h.candidate_count = parse_count(key, value);
    if (h.candidate_count < 2) throw ConfigError(key, "must be >= 2");
  } else {
    throw ConfigError(key, "unknown key");
  }
}

/// Flat `key = value` text with optional `[section]` headers and `#` comments.
/// `scale` is applied before every other key so explicit budgets win.
inline ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig cfg = default_experiment_config();
  std::vector<std::pair<std::string, std::string>> entries;
  std::istringstream in{std::string(text)};
  std::string line, section;
  std::map<std::string, int> seen;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = config_detail::trim(line);
    if (t.empty()) continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw ConfigError(t, "malformed section header on line " + std::to_string(lineno));
      section = config_detail::trim(std::string_view(t).substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError(t, "expected key = value on line " + std::to_string(lineno));
    std::string key = config_detail::trim(std::string_view(t).substr(0, eq));
    std::string value = config_detail::trim(std::string_view(t).substr(eq + 1));
    const auto* info = config_detail::find_key(key);
    if (!info) throw ConfigError(key, "unknown key");
    if (!section.empty() && section != info->section)
      throw ConfigError(key, "belongs in section [" + std::string(info->section) + "], found in [" + section + "]");
    if (seen[key]++) throw ConfigError(key, "given more than once");
    entries.emplace_back(std::move(key), std::move(value));
  }
  for (const auto& [k, v] : entries)
    if (k == "scale") set_config_value(cfg, k, v);
  for (const auto& [k, v] : entries)
    if (k != "scale") set_config_value(cfg, k, v);
  return cfg;
}

inline ExperimentConfig parse_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

inline std::string config_value(const ExperimentConfig& cfg, std::string_view key) {
  using config_detail::format_double;
  const auto& h = cfg.hiro;
  auto n = [](std::uint64_t v) { return std::to_string(v); };
  if (key == "env") return std::string(env::to_string(cfg.env));
  if (key == "ablation") return std::string(to_string(h.ablation));
  if (key == "correction") return std::string(to_string(h.correction));
  if (key == "seed") return n(cfg.master_seed);
  if (key == "out") return cfg.out_dir;
  if (key == "checkpoint_every") return n(cfg.checkpoint_every);
  if (key == "scale") return cfg.scale;
  if (key == "wall_clock") return cfg.wall_clock ? "true" : "false";
  if (key == "c") return n(h.c);
  if (key == "low_reward_scale") return format_double(h.low_reward_scale);
  if (key == "high_reward_scale") return format_double(h.high_reward_scale);
  if (key == "low_train_every") return n(h.low_train_every);
  if (key == "high_train_every") return n(h.high_train_every);
  if (key == "eval_every") return n(h.eval_every);
  if (key == "eval_episodes") return n(h.eval_episodes);
  if (key == "total_steps") return n(h.total_steps);
  if (key == "batch_size") return n(h.batch_size);
  if (key == "sigma_low") return format_double(h.sigma_low);
  if (key == "sigma_high") return format_double(h.sigma_high);
  if (key == "pretrain_steps") return n(h.pretrain_steps);
  if (key == "relabel_low_prob") return format_double(h.relabel_low_prob);
  if (key == "goal_range_xy") return format_double(h.goal_range_xy);
  if (key == "goal_range_z") return format_double(h.goal_range_z);
  if (key == "hidden") {
    std::string s;
    for (std::size_t i = 0; i < h.hidden.size(); ++i) s += (i ? "," : "") + n(h.hidden[i]);
    return s;
  }
  if (key == "gamma") return format_double(h.gamma);
  if (key == "tau") return format_double(h.tau);
  if (key == "actor_lr") return format_double(h.actor_lr);
  if (key == "critic_lr") return format_double(h.critic_lr);
  if (key == "policy_noise") return format_double(h.policy_noise);
  if (key == "noise_clip") return format_double(h.noise_clip);
  if (key == "actor_delay") return n(h.actor_delay);
  if (key == "buffer_capacity") return n(h.buffer_capacity);
  if (key == "candidate_count") return n(h.candidate_count);
  throw ConfigError(std::string(key), "unknown key");
}

/// Fully resolved config in the same text format parse_config reads.
inline std::string dump_config(const ExperimentConfig& cfg) {
  std::string out;
  std::string section;
  for (const auto& k : config_detail::kKeys) {
    if (section != k.section) {
      section = k.section;
      out += (out.empty() ? "[" : "\n[") + section + "]\n";
    }
    out += std::string(k.key) + " = " + config_value(cfg, k.key) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Metrics

inline std::string metric_line(const MetricRecord& rec, std::optional<double> wall_time = std::nullopt) {
  nlohmann::ordered_json j;
  if (wall_time) j["wall_time"] = *wall_time;
  j["kind"] = rec.kind;
  j["env_steps"] = rec.env_steps;
  for (const auto& [k, v] : rec.payload) j[k] = v;
  return j.dump();
}

class MetricWriter {
 public:
  MetricWriter(const std::filesystem::path& path, bool wall_clock) : out_(path, std::ios::trunc), wall_clock_(wall_clock) {
    if (!out_) throw std::runtime_error("cannot open " + path.string());
  }

  void write(const MetricRecord& rec) {
    std::optional<double> t;
    if (wall_clock_) {
      t = std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count();
    }
    out_ << metric_line(rec, t) << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
  bool wall_clock_;
};

// Parses every complete line; a malformed (e.g. truncated) line is skipped.
inline std::vector<nlohmann::json> read_metrics(const std::filesystem::path& path) {
  std::vector<nlohmann::json> out;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("kind") || !j.contains("env_steps")) continue;
    out.push_back(std::move(j));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Runs

struct RunSummary {
  std::string status = "ok";
  std::uint64_t env_steps = 0;
  std::optional<double> best_eval_score;
  std::uint64_t best_eval_step = 0;
  std::optional<double> last_eval_score;
};

inline void write_json_file(const std::filesystem::path& path, const nlohmann::ordered_json& j) {
  std::ofstream out(path, std::ios::trunc);
  out << j.dump(2) << '\n';
}

inline void save_checkpoint(const HiroTrainer& trainer, const std::filesystem::path& dir) {
  const auto tmp = dir / "agents.ckpt.tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    trainer.save_agents(out);
  }
  std::filesystem::rename(tmp, dir / "agents.ckpt");
}

inline HiroTrainer make_trainer(const ExperimentConfig& cfg) {
  return HiroTrainer(cfg.hiro, env::make_spec(cfg.env), cfg.master_seed);
}

/// Runs one experiment into cfg.out_dir: config.txt, metrics.jsonl, agents.ckpt, summary.json.
inline RunSummary run_experiment(const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  const fs::path dir(cfg.out_dir);
  fs::create_directories(dir);
  {
    std::ofstream echo(dir / "config.txt", std::ios::trunc);
    echo << dump_config(cfg);
  }
  MetricWriter metrics(dir / "metrics.jsonl", cfg.wall_clock);
  HiroTrainer trainer = make_trainer(cfg);
  RunSummary summary;
  trainer.set_metric_sink([&](const MetricRecord& rec) {
    metrics.write(rec);
    if (rec.kind != "eval") return;
    for (const auto& [k, v] : rec.payload) {
      if (k != "score") continue;
      summary.last_eval_score = v;
      if (!summary.best_eval_score || v > *summary.best_eval_score) {
        summary.best_eval_score = v;
        summary.best_eval_step = rec.env_steps;
      }
    }
  });
  if (cfg.checkpoint_every > 0) {
    trainer.set_step_callback([&](std::uint64_t step) {
      if (step % cfg.checkpoint_every == 0) save_checkpoint(trainer, dir);
    });
  }
  try {
    trainer.run();
    save_checkpoint(trainer, dir);
  } catch (const NumericError& e) {
    // Adam refuses non-finite gradients before touching parameters, so the
    // agents still hold the last good state.
    summary.status = std::string("numeric_failure: ") + e.what();
    save_checkpoint(trainer, dir);
  }
  summary.env_steps = trainer.env_steps();

  nlohmann::ordered_json j;
  j["status"] = summary.status;
  j["env"] = env::to_string(cfg.env);
  j["ablation"] = to_string(cfg.hiro.ablation);
  j["seed"] = cfg.master_seed;
  j["env_steps"] = summary.env_steps;
  j["pretrain_steps"] = trainer.pretrain_steps_done();
  j["best_eval_score"] = summary.best_eval_score ? nlohmann::json(*summary.best_eval_score) : nlohmann::json();
  j["best_eval_step"] = summary.best_eval_step;
  j["last_eval_score"] = summary.last_eval_score ? nlohmann::json(*summary.last_eval_score) : nlohmann::json();
  write_json_file(dir / "summary.json", j);
  return summary;
}

/// Loads a finished run's agents and evaluates them.
inline EvalResult evaluate_run(const std::filesystem::path& run_dir, std::size_t episodes,
                               std::vector<env::TrajectoryStep>* trajectory = nullptr) {
  const auto cfg = parse_config_file(run_dir / "config.txt");
  HiroTrainer trainer = make_trainer(cfg);
  std::ifstream in(run_dir / "agents.ckpt", std::ios::binary);
  if (!in) throw std::runtime_error("no agents.ckpt in " + run_dir.string());
  trainer.load_agents(in);
  const auto result = trainer.evaluate(episodes);
  if (trajectory) {
    // Replays one deterministic evaluation episode for the dump.
    trajectory->clear();
    env::Environment env(env::make_spec(cfg.env));
    Rng rng(derive_seed(cfg.master_seed, "eval"));
    Vector obs = env.reset(rng, env::ResetMode::eval);
    Goal goal;
    const auto& space = trainer.goal_space();
    for (std::size_t t = 0;; ++t) {
      Vector action;
      if (trainer.flat()) {
        action = trainer.flat_agent().select_action(obs, false, rng);
      } else {
        if (t % cfg.hiro.c == 0) goal = trainer.high_agent().select_action(obs, false, rng);
        action = trainer.low_agent().select_action(concat(obs, goal), false, rng);
      }
      const auto res = env.step(action);
      trajectory->push_back({env.state().step, env.state().agent_position, action, res.reward});
      if (!trainer.flat()) goal = goal_transition(obs, goal, res.next_observation, space);
      obs = res.next_observation;
      if (res.terminal) break;
    }
  }
  return result;
}

/// One run directory per (ablation, seed): <out>/<ablation>/seed_<n>.
inline std::vector<std::filesystem::path> sweep_directories(const ExperimentConfig& base,
                                                            const std::vector<Ablation>& ablations,
                                                            const std::vector<std::uint64_t>& seeds) {
  std::vector<std::filesystem::path> dirs;
  for (auto a : ablations)
    for (auto s : seeds)
      dirs.push_back(std::filesystem::path(base.out_dir) / std::string(to_string(a)) / ("seed_" + std::to_string(s)));
  return dirs;
}

inline std::vector<ExperimentConfig> expand_sweep(const ExperimentConfig& base, const std::vector<Ablation>& ablations,
                                                  const std::vector<std::uint64_t>& seeds) {
  std::vector<ExperimentConfig> out;
  const auto dirs = sweep_directories(base, ablations, seeds);
  std::size_t i = 0;
  for (auto a : ablations) {
    for (auto s : seeds) {
      ExperimentConfig cfg = base;
      cfg.hiro.ablation = a;
      cfg.master_seed = s;
      cfg.out_dir = dirs[i++].string();
      out.push_back(std::move(cfg));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Export

struct PlotPoint {
  std::string ablation;
  std::uint64_t env_steps = 0;
  double mean = 0.0;
  double stderr_ = 0.0;
  std::size_t n = 0;
};

/// Aggregates eval scores per (ablation, env_steps) over every run found under
/// the given directories. stderr = sample std / sqrt(n); 0 for a single run.
inline std::vector<PlotPoint> aggregate_eval(const std::vector<std::filesystem::path>& roots) {
  namespace fs = std::filesystem;
  std::map<std::pair<std::string, std::uint64_t>, std::vector<double>> groups;
  std::vector<fs::path> runs;
  for (const auto& root : roots) {
    if (fs::is_regular_file(root / "metrics.jsonl")) runs.push_back(root);
    if (!fs::is_directory(root)) continue;
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
      if (entry.is_regular_file() && entry.path().filename() == "metrics.jsonl" && entry.path().parent_path() != root)
        runs.push_back(entry.path().parent_path());
    }
  }
  std::sort(runs.begin(), runs.end());
  runs.erase(std::unique(runs.begin(), runs.end()), runs.end());
  for (const auto& run : runs) {
    std::string ablation = "unknown";
    if (fs::is_regular_file(run / "config.txt")) {
      try {
        ablation = std::string(to_string(parse_config_file(run / "config.txt").hiro.ablation));
      } catch (const std::exception&) {
      }
    }
    for (const auto& rec : read_metrics(run / "metrics.jsonl")) {
      if (rec["kind"] != "eval" || !rec.contains("score")) continue;
      groups[{ablation, rec["env_steps"].get<std::uint64_t>()}].push_back(rec["score"].get<double>());
    }
  }
  std::vector<PlotPoint> out;
  for (const auto& [key, values] : groups) {
    PlotPoint p;
    p.ablation = key.first;
    p.env_steps = key.second;
    p.n = values.size();
    double sum = 0.0;
    for (double v : values) sum += v;
    p.mean = sum / static_cast<double>(p.n);
    if (p.n > 1) {
      double ss = 0.0;
      for (double v : values) ss += (v - p.mean) * (v - p.mean);
      p.stderr_ = std::sqrt(ss / static_cast<double>(p.n - 1)) / std::sqrt(static_cast<double>(p.n));
    }
    out.push_back(p);
  }
  return out;
}

inline std::string plot_csv(const std::vector<PlotPoint>& points) {
  std::string out = "ablation,env_steps,mean,stderr,n\n";
  for (const auto& p : points) {
    out += p.ablation + "," + std::to_string(p.env_steps) + "," + config_detail::format_double(p.mean) + "," +
           config_detail::format_double(p.stderr_) + "," + std::to_string(p.n) + "\n";
  }
  return out;
}

}  // namespace hiro
