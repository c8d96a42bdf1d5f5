#include "hiro/experiment.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

namespace {

struct CommonFlags {
  std::string config_path;
  std::vector<std::string> sets;
  std::string env, ablation, correction, out;
  std::optional<std::uint64_t> seed, total_steps;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "config file (key = value, [section] headers)");
  cmd->add_option("--set", f.sets, "override one key, e.g. --set c=10")->take_all();
  cmd->add_option("--env", f.env, "gather | maze | push | fall | open");
  cmd->add_option("--ablation", f.ablation, "hiro | no_correction | pretrain_low | relabel_low | no_hrl | fun_cosine | fun_transition_pg");
  cmd->add_option("--correction", f.correction, "none | max_likelihood | direct_importance | importance_relabel | model_based | transition_pg");
  cmd->add_option("--seed", f.seed, "master seed");
  cmd->add_option("--total-steps", f.total_steps, "environment step budget");
  cmd->add_option("--out", f.out, "run directory");
}

std::string default_out(const std::string& leaf) {
  const char* root = std::getenv("HIRO_OUT_DIR");
  return (std::filesystem::path(root && *root ? root : "runs") / leaf).string();
}

hiro::ExperimentConfig resolve(const CommonFlags& f, const std::string& default_leaf) {
  hiro::ExperimentConfig cfg =
      f.config_path.empty() ? hiro::default_experiment_config() : hiro::parse_config_file(f.config_path);
  const bool out_in_file = !f.config_path.empty() && cfg.out_dir != hiro::default_experiment_config().out_dir;
  if (!out_in_file) cfg.out_dir = default_out(default_leaf);
  for (const auto& kv : f.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw hiro::ConfigError(kv, "--set expects key=value");
    const auto key = hiro::config_detail::trim(std::string_view(kv).substr(0, eq));
    const auto value = hiro::config_detail::trim(std::string_view(kv).substr(eq + 1));
    if (key == "scale") hiro::set_config_value(cfg, key, value);
  }
  for (const auto& kv : f.sets) {
    const auto eq = kv.find('=');
    const auto key = hiro::config_detail::trim(std::string_view(kv).substr(0, eq));
    const auto value = hiro::config_detail::trim(std::string_view(kv).substr(eq + 1));
    if (key != "scale") hiro::set_config_value(cfg, key, value);
  }
  if (!f.env.empty()) hiro::set_config_value(cfg, "env", f.env);
  if (!f.ablation.empty()) hiro::set_config_value(cfg, "ablation", f.ablation);
  if (!f.correction.empty()) hiro::set_config_value(cfg, "correction", f.correction);
  if (f.seed) cfg.master_seed = *f.seed;
  if (f.total_steps) cfg.hiro.total_steps = *f.total_steps;
  if (!f.out.empty()) cfg.out_dir = f.out;
  return cfg;
}

void print_summary(const hiro::ExperimentConfig& cfg, const hiro::RunSummary& s) {
  std::cout << cfg.out_dir << ": " << s.status << ", " << s.env_steps << " steps";
  if (s.best_eval_score) std::cout << ", best eval " << *s.best_eval_score << " at " << s.best_eval_step;
  std::cout << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"HIRO: hierarchical RL with off-policy correction"};
  app.require_subcommand(1);

  CommonFlags train_flags;
  auto* train = app.add_subcommand("train", "train one agent");
  add_common(train, train_flags);

  std::string eval_dir, dump_path;
  std::size_t eval_episodes = 0;
  auto* eval = app.add_subcommand("eval", "evaluate a finished run directory");
  eval->add_option("run_dir", eval_dir, "run directory holding config.txt and agents.ckpt")->required();
  eval->add_option("--episodes", eval_episodes, "episodes (default: eval_episodes from the run config)");
  eval->add_option("--dump", dump_path, "write one deterministic episode as JSON lines");

  CommonFlags sweep_flags;
  std::vector<std::string> sweep_ablations;
  std::vector<std::uint64_t> sweep_seeds{0};
  auto* sweep = app.add_subcommand("sweep", "one run per (ablation, seed) under <out>/<ablation>/seed_<n>");
  add_common(sweep, sweep_flags);
  sweep->add_option("--ablations", sweep_ablations, "ablations to run (default: all)")->take_all();
  sweep->add_option("--seeds", sweep_seeds, "master seeds")->take_all();

  std::vector<std::string> export_dirs;
  std::string export_out;
  auto* exp = app.add_subcommand("export", "aggregate eval scores to CSV (x = raw env steps)");
  exp->add_option("run_dirs", export_dirs, "run or sweep directories")->required();
  exp->add_option("-o,--output", export_out, "CSV path (default: stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      const auto cfg = resolve(train_flags, "train");
      const auto s = hiro::run_experiment(cfg);
      print_summary(cfg, s);
      return s.status == "ok" ? 0 : 2;
    }
    if (*eval) {
      std::vector<hiro::env::TrajectoryStep> traj;
      const auto cfg = hiro::parse_config_file(std::filesystem::path(eval_dir) / "config.txt");
      const std::size_t n = eval_episodes ? eval_episodes : cfg.hiro.eval_episodes;
      const auto r = hiro::evaluate_run(eval_dir, n, dump_path.empty() ? nullptr : &traj);
      std::cout << "episodes " << r.episodes << "  success_rate " << r.success_rate << "  mean_return "
                << r.mean_return << "  score " << r.score << '\n';
      if (!dump_path.empty()) {
        std::ofstream out(dump_path, std::ios::trunc);
        hiro::env::write_trajectory_jsonl(out, traj);
      }
      return 0;
    }
    if (*sweep) {
      const auto base = resolve(sweep_flags, "sweep");
      std::vector<hiro::Ablation> ablations;
      for (const auto& name : sweep_ablations) {
        auto a = hiro::parse_ablation(name);
        if (!a) throw hiro::ConfigError("ablation", "unknown ablation '" + name + "'");
        ablations.push_back(*a);
      }
      if (ablations.empty()) ablations.assign(std::begin(hiro::kAllAblations), std::end(hiro::kAllAblations));
      int rc = 0;
      for (const auto& cfg : hiro::expand_sweep(base, ablations, sweep_seeds)) {
        const auto s = hiro::run_experiment(cfg);
        print_summary(cfg, s);
        if (s.status != "ok") rc = 2;
      }
      return rc;
    }
    if (*exp) {
      std::vector<std::filesystem::path> roots(export_dirs.begin(), export_dirs.end());
      const auto points = hiro::aggregate_eval(roots);
      if (points.empty()) std::cerr << "warning: no eval records found; CSV has a header only\n";
      const auto csv = hiro::plot_csv(points);
      if (export_out.empty()) {
        std::cout << csv;
      } else {
        std::ofstream(export_out, std::ios::trunc) << csv;
      }
      return 0;
    }
  } catch (const hiro::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 64;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
