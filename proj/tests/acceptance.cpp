// Acceptance suite. One PASS/FAIL line per criterion; `--only N` runs one.

#include "hiro/experiment.hpp"

#include "oracles.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

using namespace hiro;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Vector rand_vec(Eigen::Index n, Rng& rng, double scale = 1.0) {
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = scale * rng.normal();
  return v;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fs::path g_work_dir;

// ---------------------------------------------------------------------------
// 1. Gradients

Outcome gradients() {
  constexpr int kNetworks = 50;
  constexpr double kStep = 1e-5;
  constexpr double kTolerance = 1e-4;
  constexpr double kFloor = 1e-6;  // denominator floor for near-zero gradients
  constexpr double kTimeLimit = 10.0;
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(1001);
  double worst = 0.0;
  std::size_t checked = 0;
  auto rel = [&](double a, double n) { return std::abs(a - n) / std::max({std::abs(a), std::abs(n), kFloor}); };
  for (int k = 0; k < kNetworks; ++k) {
    std::vector<std::size_t> sizes{1 + rng.below(6)};
    const std::size_t hidden_layers = 1 + rng.below(3);
    for (std::size_t l = 0; l < hidden_layers; ++l) sizes.push_back(2 + rng.below(12));
    sizes.push_back(1 + rng.below(4));
    const auto out = static_cast<Eigen::Index>(sizes.back());
    const auto transform = k % 2 ? nn::OutputTransform::tanh_scaled : nn::OutputTransform::identity;
    nn::Mlp net = nn::make_mlp(sizes, transform, rng, Vector::Constant(out, -2.0), Vector::Constant(out, 3.0));
    const Vector x = rand_vec(static_cast<Eigen::Index>(sizes.front()), rng);
    const Vector u = rand_vec(out, rng);
    auto loss = [&] { return u.dot(nn::forward(net, x)); };
    const auto [g, dx] = nn::backward(net, x, u);
    auto probe = [&](double& p, double analytic) {
      const double keep = p;
      p = keep + kStep;
      const double up = loss();
      p = keep - kStep;
      const double down = loss();
      p = keep;
      worst = std::max(worst, rel(analytic, (up - down) / (2 * kStep)));
      ++checked;
    };
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
      for (Eigen::Index i = 0; i < net.weights[l].size(); ++i) probe(net.weights[l].data()[i], g.weights[l].data()[i]);
      for (Eigen::Index i = 0; i < net.biases[l].size(); ++i) probe(net.biases[l][i], g.biases[l][i]);
    }
    Vector xp = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double keep = xp[i];
      xp[i] = keep + kStep;
      const double up = u.dot(nn::forward(net, xp));
      xp[i] = keep - kStep;
      const double down = u.dot(nn::forward(net, xp));
      xp[i] = keep;
      worst = std::max(worst, rel(dx[i], (up - down) / (2 * kStep)));
      ++checked;
    }
  }
  const double secs = seconds_since(t0);
  return {worst < kTolerance && secs < kTimeLimit,
          std::to_string(kNetworks) + " networks, " + std::to_string(checked) + " partials, worst rel err " +
              fmt("%.2e", worst) + " (< 1e-4), " + fmt("%.2f", secs) + " s (< 10 s)"};
}

// ---------------------------------------------------------------------------
// 2. Goal mechanics

Outcome goal_mechanics() {
  Rng rng(2002);
  const GoalSpace space({0, 1}, Vector{{10.0, 10.0}});
  double worst_conservation = 0.0;
  for (int r = 0; r < 1000; ++r) {
    Vector s = rand_vec(6, rng, 5.0);
    Goal g = rand_vec(2, rng, 5.0);
    const Vector absolute = project(s, space) + g;
    for (int t = 0; t < 3; ++t) {
      const Vector s2 = rand_vec(6, rng, 5.0);
      g = goal_transition(s, g, s2, space);
      s = s2;
      worst_conservation = std::max(worst_conservation, (project(s, space) + g - absolute).cwiseAbs().maxCoeff());
    }
  }
  bool zero_iff = true;
  for (int i = 0; i < 1000; ++i) {
    const Vector s = rand_vec(4, rng, 5.0);
    const Goal g = rand_vec(2, rng, 5.0);
    Vector attained = rand_vec(4, rng, 5.0);
    attained.head(2) = project(s, space) + g;
    zero_iff = zero_iff && intrinsic_reward(s, g, attained, space) == 0.0;
    Vector near = attained;
    near[i % 2] += 1e-9;
    zero_iff = zero_iff && intrinsic_reward(s, g, near, space) < 0.0;
    zero_iff = zero_iff && intrinsic_reward(s, g, rand_vec(4, rng, 5.0), space) < 0.0;
  }
  double worst_translation = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Vector s = rand_vec(3, rng, 5.0), s2 = rand_vec(3, rng, 5.0), off = rand_vec(3, rng, 100.0);
    const Goal g = rand_vec(2, rng, 5.0);
    worst_translation = std::max(
        worst_translation, std::abs(intrinsic_reward(s + off, g, s2 + off, space) - intrinsic_reward(s, g, s2, space)));
    worst_translation = std::max(
        worst_translation,
        (goal_transition(s + off, g, s2 + off, space) - goal_transition(s, g, s2, space)).cwiseAbs().maxCoeff());
  }
  return {worst_conservation <= 1e-12 && zero_iff && worst_translation <= 1e-12,
          "conservation max err " + fmt("%.1e", worst_conservation) + " over 1000 3-step rollouts; reward zero-iff-attained " +
              (zero_iff ? "holds" : "VIOLATED") + "; translation max err " + fmt("%.1e", worst_translation) +
              " over 100 offsets"};
}

// ---------------------------------------------------------------------------
// 3. Correction oracle

Outcome correction_oracle() {
  constexpr int kSegments = 500;
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(3003);
  const GoalSpace space({0, 1}, Vector{{10.0, 10.0}});
  const auto strategy = CorrectionStrategy::defaults_for(CorrectionKind::max_likelihood, space);
  int agree = 0, shape_ok = 0;
  for (int k = 0; k < kSegments; ++k) {
    const Eigen::Index obs = 3 + static_cast<Eigen::Index>(rng.below(6));
    const nn::Mlp actor = nn::make_mlp({static_cast<std::size_t>(obs) + 2, 32, 32, 2}, nn::OutputTransform::tanh_scaled,
                                       rng, Vector{{-1.0, -1.0}}, Vector{{1.0, 1.0}});
    // Behavior actor differs from the current one, as after lower-level training.
    const nn::Mlp behavior = nn::make_mlp({static_cast<std::size_t>(obs) + 2, 32, 32, 2},
                                          nn::OutputTransform::tanh_scaled, rng, Vector{{-1.0, -1.0}}, Vector{{1.0, 1.0}});
    HighSegment seg;
    seg.original_goal = rand_vec(2, rng, 8.0);  // may leave the range; candidates clip it
    seg.behavior_sigma = 1.0;
    Vector s = rand_vec(obs, rng, 3.0);
    Goal g = seg.original_goal;
    for (int t = 0; t < 10; ++t) {
      const Vector mu = nn::forward(behavior, concat(s, g));
      const Vector a = clip(mu + rand_vec(2, rng, 1.0), Vector::Constant(2, -1.0), Vector::Constant(2, 1.0));
      seg.states.push_back(s);
      seg.actions.push_back(a);
      seg.behavior_log_probs.push_back(-0.5 * (a - mu).squaredNorm());
      Vector s2 = s;
      s2.head(2) += a;
      s2.tail(obs - 2) = rand_vec(obs - 2, rng);
      g = goal_transition(s, g, s2, space);
      s = s2;
    }
    seg.final_state = s;

    Rng a = rng, b = rng;
    const auto entry = relabel_max_likelihood(actor, seg, space, strategy, a);
    const auto cands = candidate_goals(seg, space, strategy, b);
    rng = a;
    const Goal delta = space.clip_goal(project(seg.final_state, space) - project(seg.states.front(), space));
    if (cands.size() == 10 && cands[0] == space.clip_goal(seg.original_goal) && cands[1] == delta) ++shape_ok;
    oracle::Vec ll;
    for (const auto& c : cands) ll.push_back(oracle::log_likelihood(actor, seg, c, space.dims, seg.behavior_sigma));
    if (entry.candidate_index == static_cast<int>(oracle::argmax(ll)) && entry.relabeled_goal == cands[oracle::argmax(ll)])
      ++agree;
  }
  const double secs = seconds_since(t0);
  return {agree == kSegments && shape_ok == kSegments && secs < 30.0,
          std::to_string(agree) + "/500 argmax indices match brute force; " + std::to_string(shape_ok) +
              "/500 candidate sets of size 10 with original and delta; " + fmt("%.2f", secs) + " s (< 30 s)"};
}

// ---------------------------------------------------------------------------
// 4. TD3 sanity

Outcome td3_sanity() {
  // (a) Fixed single transition, gamma = 0.
  Td3Config cfg;
  cfg.input_dim = 3;
  cfg.action_low = Vector::Constant(2, -1.0);
  cfg.action_high = Vector::Constant(2, 1.0);
  cfg.gamma = 0.0;
  Rng init(4004), rng(4005);
  Td3Agent agent(cfg, init);
  Batch b;
  const Vector s{{0.4, -1.2, 0.7}}, a{{0.25, -0.5}};
  b.states = Matrix(s);
  b.actions = Matrix(a);
  b.rewards = Vector::Constant(1, -2.5);
  b.next_states = Matrix(Vector{{0.1, 0.2, 0.3}});
  b.terminals = Vector::Zero(1);
  int reached = -1;
  double err = 0.0;
  for (int i = 1; i <= 2000; ++i) {
    agent.train_critics(b, rng);
    const Vector in = concat(s, a);
    err = std::max(std::abs(nn::forward(agent.critic1(), in)[0] + 2.5), std::abs(nn::forward(agent.critic2(), in)[0] + 2.5));
    if (err < 1e-2 && reached < 0) reached = i;
  }
  const bool critic_ok = reached > 0 && err < 1e-2;

  // (b) Critic fitted to the concave quadratic Q(s, a) = -(a - 0.5 s)^2, then frozen; maximizer a* = 0.5 s.
  Td3Config qc;
  qc.input_dim = 1;
  qc.action_low = Vector::Constant(1, -1.0);
  qc.action_high = Vector::Constant(1, 1.0);
  qc.gamma = 0.0;
  qc.actor_lr = 1e-3;
  Rng qinit(4006), qrng(4007);
  Td3Agent q(qc, qinit);
  for (int i = 0; i < 4000; ++i) {
    Batch fit;
    fit.states.resize(1, 128);
    fit.actions.resize(1, 128);
    fit.rewards.resize(128);
    fit.terminals = Vector::Ones(128);
    for (int c = 0; c < 128; ++c) {
      const double sv = qrng.uniform(-1.0, 1.0), av = qrng.uniform(-1.0, 1.0);
      fit.states(0, c) = sv;
      fit.actions(0, c) = av;
      fit.rewards[c] = -(av - 0.5 * sv) * (av - 0.5 * sv);
    }
    fit.next_states = fit.states;
    q.train_critics(fit, qrng);
  }
  Batch states;
  states.states.resize(1, 64);
  for (int c = 0; c < 64; ++c) states.states(0, c) = -1.0 + 2.0 * c / 63.0;
  for (int i = 0; i < 5000; ++i) q.train_actor(states);
  double worst = 0.0;
  for (int k = 0; k <= 20; ++k) {
    const double sv = -1.0 + 0.1 * k;
    worst = std::max(worst, std::abs(nn::forward(q.actor(), Vector{{sv}})[0] - 0.5 * sv));
  }
  const bool actor_ok = worst <= 0.05;
  return {critic_ok && actor_ok,
          "critic error < 1e-2 after " + std::to_string(reached) + " updates (final " + fmt("%.1e", err) +
              ", limit 2000); actor max |a - a*| " + fmt("%.4f", worst) + " over 21 states (<= 0.05)"};
}

// ---------------------------------------------------------------------------
// 5. Environment geometry

std::set<std::pair<double, double>> cells(const std::vector<env::Vec2>& v) {
  std::set<std::pair<double, double>> out;
  for (const auto& c : v) out.insert({c.x, c.y});
  return out;
}

Outcome geometry() {
  using env::EnvKind;
  std::vector<std::string> problems;
  const auto maze = env::make_spec(EnvKind::maze);
  const auto push = env::make_spec(EnvKind::push);
  const auto fall = env::make_spec(EnvKind::fall);
  if (cells(maze.free_cells) != cells({{0, 0}, {8, 0}, {16, 0}, {16, 8}, {16, 16}, {8, 16}, {0, 16}}))
    problems.push_back("maze cells");
  if (cells(push.free_cells) != cells({{0, 0}, {-8, 0}, {-8, 8}, {0, 8}, {8, 8}, {16, 8}, {0, 16}}))
    problems.push_back("push cells");
  if (cells(push.block_starts) != cells({{0, 8}})) problems.push_back("push block");
  // Two-wide platform at x in {0, 8}, so the block at (8, 8) sits on it to the right of the start.
  if (cells(fall.free_cells) != cells({{0, 0}, {8, 0}, {0, 8}, {8, 8}, {0, 16}, {8, 16}, {0, 24}, {8, 24}}))
    problems.push_back("fall cells");
  if (cells(fall.block_starts) != cells({{8, 8}})) problems.push_back("fall block");
  if (!fall.chasm || fall.chasm->x0 != -4 || fall.chasm->x1 != 12 || fall.chasm->y0 != 12 || fall.chasm->y1 != 20)
    problems.push_back("fall chasm");
  if (fall.start != Vector{{0.0, 0.0, 4.5}} || maze.start != Vector{{0.0, 0.0}} || push.start != Vector{{0.0, 0.0}})
    problems.push_back("starts");
  if (!push.fixed_target || *push.fixed_target != Vector{{0.0, 19.0}}) problems.push_back("push target");
  if (!fall.fixed_target || *fall.fixed_target != Vector{{0.0, 27.0, 4.5}}) problems.push_back("fall target");
  if (!maze.eval_target || *maze.eval_target != Vector{{0.0, 16.0}}) problems.push_back("maze eval target");
  if (!maze.target_sampling || maze.target_sampling->x0 != -4 || maze.target_sampling->x1 != 20 ||
      maze.target_sampling->y0 != -4 || maze.target_sampling->y1 != 20)
    problems.push_back("maze target box");

  // Success on the final step at distances 3, 5, 6 from each evaluation target.
  struct Probe {
    env::EnvKind kind;
    Vector offset_dir;
  };
  int threshold_checks = 0;
  for (const auto& p : {Probe{EnvKind::maze, Vector{{1.0, 0.0}}}, Probe{EnvKind::push, Vector{{0.0, -1.0}}},
                        Probe{EnvKind::fall, Vector{{0.0, -1.0, 0.0}}}}) {
    for (double d : {3.0, 5.0, 6.0}) {
      env::Environment e(env::make_spec(p.kind));
      Rng rng(5005);
      e.reset(rng, env::ResetMode::eval);
      e.state().agent_position = e.state().target + d * p.offset_dir;
      e.state().step = e.spec().episode_steps - 1;
      const auto res = e.step(Vector::Zero(2));
      const bool want = d < 5.0;
      if (!res.terminal || res.success != want || env::success_of_episode(e.state().agent_position, e.state().target) != want) {
        problems.push_back(std::string("success at ") + fmt("%.0f", d) + " in " + std::string(env::to_string(p.kind)));
      }
      ++threshold_checks;
    }
  }
  std::string detail = "maze/push cells, blocks, starts, targets exact; fall platform x in {0, 8}; " +
                       std::to_string(threshold_checks) + " threshold checks (3 success, 5 and 6 failure)";
  if (!problems.empty()) {
    detail = "mismatch:";
    for (const auto& p : problems) detail += " " + p + ";";
  }
  return {problems.empty(), detail};
}

// ---------------------------------------------------------------------------
// 6. Lower level alone in the open arena

constexpr std::uint64_t kLowerSteps = 50'000;
constexpr std::size_t kHeldOutGoals = 100;
constexpr std::size_t kHoldSteps = 50;  // 5 goal periods of c = 10
constexpr double kReachDistance = 1.0;
constexpr double kRequiredFraction = 0.8;

Outcome lower_level() {
  const auto t0 = std::chrono::steady_clock::now();
  HiroConfig cfg;
  cfg.ablation = Ablation::pretrain_low;
  const auto spec = env::make_spec(env::EnvKind::open);
  HiroTrainer trainer(cfg, spec, 6006);
  trainer.pretrain_lower_for(kLowerSteps);
  trainer.freeze_lower();
  const double train_secs = seconds_since(t0);

  Rng goals(derive_seed(6006, "held_out_goals")), unused(0);
  const auto& space = trainer.goal_space();
  std::vector<double> finals;
  for (std::size_t k = 0; k < kHeldOutGoals; ++k) {
    env::Environment e(spec);
    Vector obs = e.reset(goals);
    Goal g = trainer.sample_pretrain_goal(goals);
    for (std::size_t t = 0; t < kHoldSteps; ++t) {
      const Vector a = trainer.low_agent().select_action(concat(obs, g), false, unused);
      const auto res = e.step(a);
      g = goal_transition(obs, g, res.next_observation, space);
      obs = res.next_observation;
    }
    finals.push_back(g.norm());
  }
  std::size_t reached = 0;
  for (double d : finals) reached += d < kReachDistance ? 1 : 0;
  auto sorted = finals;
  std::sort(sorted.begin(), sorted.end());
  const double frac = static_cast<double>(reached) / static_cast<double>(kHeldOutGoals);
  const double secs = seconds_since(t0);
  return {frac >= kRequiredFraction,
          std::to_string(reached) + "/100 held-out goals within 1.0 after " + std::to_string(kHoldSteps) +
              " steps (need >= 80); median final distance " + fmt("%.3f", sorted[sorted.size() / 2]) + ", 90th pct " +
              fmt("%.3f", sorted[sorted.size() * 9 / 10]) + "; training " + fmt("%.0f", train_secs) + " s, total " +
              fmt("%.0f", secs) + " s"};
}

// ---------------------------------------------------------------------------
// 7. Directional ablation check on Push

bool reusable(const ExperimentConfig& cfg) {
  const fs::path dir(cfg.out_dir);
  if (!fs::is_regular_file(dir / "summary.json") || !fs::is_regular_file(dir / "config.txt")) return false;
  std::ifstream in(dir / "config.txt");
  std::stringstream ss;
  ss << in.rdbuf();
  if (ss.str() != dump_config(cfg)) return false;
  std::ifstream sj(dir / "summary.json");
  const auto j = nlohmann::json::parse(sj, nullptr, false);
  return !j.is_discarded() && j.value("status", "") == "ok" && j.value("env_steps", 0ull) == cfg.hiro.total_steps;
}

Outcome ablation_trend() {
  ExperimentConfig base = default_experiment_config();  // desk scale: 300k steps, eval every 10k on 20 episodes
  base.env = env::EnvKind::push;
  base.out_dir = (g_work_dir / "criterion7").string();
  const std::vector<Ablation> ablations{Ablation::hiro, Ablation::no_correction, Ablation::no_hrl};
  const std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::map<Ablation, std::vector<double>> best;
  for (const auto& cfg : expand_sweep(base, ablations, seeds)) {
    if (!reusable(cfg)) {
      std::cerr << "criterion 7: running " << cfg.out_dir << std::endl;
      run_experiment(cfg);
    }
    std::ifstream sj(fs::path(cfg.out_dir) / "summary.json");
    const auto j = nlohmann::json::parse(sj);
    const double score = j["best_eval_score"].is_number() ? j["best_eval_score"].get<double>() : 0.0;
    best[cfg.hiro.ablation].push_back(score);
  }
  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  const double hiro = mean(best[Ablation::hiro]), noc = mean(best[Ablation::no_correction]),
               flat = mean(best[Ablation::no_hrl]);
  std::string detail = "push, seeds 0-4, 300000 steps; mean best success hiro " + fmt("%.3f", hiro) +
                       " vs no_correction " + fmt("%.3f", noc) + " (need >=), no_hrl " + fmt("%.3f", flat) +
                       " (need < 0.10); per seed:";
  for (auto a : ablations) {
    detail += " " + std::string(to_string(a)) + "=[";
    for (std::size_t i = 0; i < best[a].size(); ++i) detail += (i ? "," : "") + fmt("%.2f", best[a][i]);
    detail += "]";
  }
  detail += "; runs in " + base.out_dir;
  return {hiro >= noc && flat < 0.10, detail};
}

// ---------------------------------------------------------------------------
// 8. Determinism

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism() {
  std::vector<std::string> notes;
  bool ok = true;
  int k = 0;
  for (auto [kind, ablation] : {std::pair{env::EnvKind::push, Ablation::hiro}, std::pair{env::EnvKind::maze, Ablation::no_hrl},
                                std::pair{env::EnvKind::fall, Ablation::pretrain_low}}) {
    ExperimentConfig cfg = default_experiment_config();
    cfg.env = kind;
    cfg.hiro.ablation = ablation;
    cfg.master_seed = 8008;
    cfg.hiro.total_steps = 3000;
    cfg.hiro.pretrain_steps = 1000;
    cfg.hiro.eval_every = 1000;
    cfg.hiro.eval_episodes = 2;
    std::string first;
    for (int rep = 0; rep < 2; ++rep) {
      const fs::path dir = g_work_dir / "criterion8" / (std::to_string(k) + "_" + std::to_string(rep));
      fs::remove_all(dir);
      cfg.out_dir = dir.string();
      run_experiment(cfg);
      const auto bytes = slurp(dir / "metrics.jsonl");
      if (rep == 0) first = bytes;
      else ok = ok && !bytes.empty() && bytes == first;
    }
    notes.push_back(std::string(env::to_string(kind)) + "/" + std::string(to_string(ablation)) + " " +
                    std::to_string(first.size()) + " bytes");
    ++k;
  }
  std::string detail = "two executions byte-identical:";
  for (const auto& n : notes) detail += " " + n + ";";
  return {ok, detail};
}

// ---------------------------------------------------------------------------
// 9. Alternative corrections

Outcome alternatives() {
  Rng rng(9009);
  const GoalSpace space({0, 1}, Vector{{10.0, 10.0}});
  const auto strategy = CorrectionStrategy::defaults_for(CorrectionKind::importance_relabel, space);
  int unit_weight = 0, zero_drift = 0, exact_delta = 0;
  constexpr int kTrials = 100;
  for (int k = 0; k < kTrials; ++k) {
    const nn::Mlp actor =
        nn::make_mlp({7, 16, 16, 2}, nn::OutputTransform::tanh_scaled, rng, Vector{{-1.0, -1.0}}, Vector{{1.0, 1.0}});
    HighSegment seg;
    seg.original_goal = space.clip_goal(rand_vec(2, rng, 5.0));
    seg.behavior_sigma = 1.0;
    Vector s = rand_vec(5, rng, 3.0);
    Goal g = seg.original_goal;
    for (int t = 0; t < 10; ++t) {
      const Vector mu = nn::forward(actor, concat(s, g));
      const Vector a = mu + rand_vec(2, rng, 0.5);
      seg.states.push_back(s);
      seg.actions.push_back(a);
      seg.behavior_log_probs.push_back(-0.5 * (a - mu).squaredNorm());
      Vector s2 = s + rand_vec(5, rng);
      g = goal_transition(s, g, s2, space);
      s = s2;
    }
    seg.final_state = s;
    const auto di = relabel_direct_importance(actor, seg, space);
    if (std::abs(di.importance_weight - 1.0) <= 1e-12 && di.relabeled_goal == seg.original_goal) ++unit_weight;
    const auto ir = relabel_importance_relabel(actor, seg, space, candidate_goals(seg, space, strategy, rng));
    if (ir.relabeled_goal == seg.original_goal) ++zero_drift;
    const auto mb = relabel_model_based(seg, space, rng, Vector::Zero(2));
    if (mb.relabeled_goal == space.clip_goal(project(seg.final_state, space) - project(seg.states.front(), space)))
      ++exact_delta;
  }
  return {unit_weight == kTrials && zero_drift == kTrials && exact_delta == kTrials,
          "direct_importance weight 1 (+-1e-12): " + std::to_string(unit_weight) +
              "/100; importance_relabel original at zero drift: " + std::to_string(zero_drift) +
              "/100; model_based sigma 0 exact delta: " + std::to_string(exact_delta) + "/100"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  int only = 0;
  std::string work = "acceptance_runs";
  app.add_option("--only", only, "run a single criterion (1-9)")->check(CLI::Range(1, 9));
  app.add_option("--work-dir", work, "scratch directory for experiment runs");
  CLI11_PARSE(app, argc, argv);
  g_work_dir = work;
  fs::create_directories(g_work_dir);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient suite", gradients},
      {"goal mechanics", goal_mechanics},
      {"correction oracle", correction_oracle},
      {"TD3 sanity", td3_sanity},
      {"environment geometry", geometry},
      {"lower level alone, open arena", lower_level},
      {"directional ablation check", ablation_trend},
      {"determinism", determinism},
      {"alternative corrections", alternatives},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i) + 1;
    if (only && n != only) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << n << " (" << criteria[i].first << "): " << o.detail
              << std::endl;
    failures += o.pass ? 0 : 1;
  }
  return failures == 0 ? 0 : 1;
}
