#pragma once

#include "hiro/common.hpp"
#include "hiro/correction.hpp"
#include "hiro/envs.hpp"
#include "hiro/goals.hpp"
#include "hiro/nn.hpp"
#include "hiro/replay.hpp"
#include "hiro/rng.hpp"
#include "hiro/td3.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace hiro {

enum class Ablation { hiro, no_correction, pretrain_low, relabel_low, no_hrl, fun_cosine, fun_transition_pg };

inline std::string_view to_string(Ablation a) {
  switch (a) {
    case Ablation::hiro: return "hiro";
    case Ablation::no_correction: return "no_correction";
    case Ablation::pretrain_low: return "pretrain_low";
    case Ablation::relabel_low: return "relabel_low";
    case Ablation::no_hrl: return "no_hrl";
    case Ablation::fun_cosine: return "fun_cosine";
    case Ablation::fun_transition_pg: return "fun_transition_pg";
  }
  return "?";
}

inline constexpr Ablation kAllAblations[] = {Ablation::hiro,        Ablation::no_correction, Ablation::pretrain_low,
                                             Ablation::relabel_low, Ablation::no_hrl,        Ablation::fun_cosine,
                                             Ablation::fun_transition_pg};

inline std::optional<Ablation> parse_ablation(std::string_view name) {
  for (auto a : kAllAblations)
    if (to_string(a) == name) return a;
  return std::nullopt;
}

struct HiroConfig {
  std::size_t c = 10;
  double low_reward_scale = 1.0;
  double high_reward_scale = 0.1;
  std::size_t low_train_every = 1;
  std::size_t high_train_every = 10;
  std::size_t eval_every = 50'000;
  std::size_t eval_episodes = 50;
  std::size_t total_steps = 10'000'000;
  std::size_t batch_size = 128;
  double sigma_low = 1.0;
  double sigma_high = 1.0;
  Ablation ablation = Ablation::hiro;
  CorrectionKind correction = CorrectionKind::max_likelihood;  // used by hiro, relabel_low, fun_cosine
  std::size_t pretrain_steps = 2'000'000;
  double relabel_low_prob = 0.5;
  std::size_t buffer_capacity = RingBuffer<LowTransition>::kDefaultCapacity;
  std::size_t candidate_count = 10;
  double goal_range_xy = 10.0;
  double goal_range_z = 4.0;

  // Learner hyperparameters shared by both levels.
  std::vector<std::size_t> hidden = {64, 64};
  double gamma = 0.99;
  double tau = 0.005;
  double actor_lr = 1e-4;
  double critic_lr = 1e-3;
  double policy_noise = 0.2;
  double noise_clip = 0.5;
  std::size_t actor_delay = 2;

  friend bool operator==(const HiroConfig&, const HiroConfig&) = default;
};

// Correction actually applied at the higher level for a given ablation.
inline CorrectionKind effective_correction(const HiroConfig& cfg) {
  switch (cfg.ablation) {
    case Ablation::no_correction:
    case Ablation::pretrain_low:
    case Ablation::no_hrl: return CorrectionKind::none;
    case Ablation::fun_transition_pg: return CorrectionKind::transition_pg;
    case Ablation::hiro:
    case Ablation::relabel_low:
    case Ablation::fun_cosine: return cfg.correction;
  }
  return cfg.correction;
}

struct MetricRecord {
  std::string kind;  // train | eval | correction_stats
  std::uint64_t env_steps = 0;
  std::vector<std::pair<std::string, double>> payload;
};

using MetricSink = std::function<void(const MetricRecord&)>;

struct EvalResult {
  double success_rate = 0.0;
  double mean_return = 0.0;
  double score = 0.0;  // success rate for navigation, mean return otherwise
  std::size_t episodes = 0;
};

struct TrainLosses {
  std::optional<double> low_critic_loss;
  std::optional<double> high_critic_loss;
  std::optional<double> flat_critic_loss;
};

// Optional scripted policies, used to pin down loop bookkeeping in tests.
struct PolicyHooks {
  std::function<Goal(const Vector& obs)> high;
  std::function<Vector(const Vector& obs, const Goal& goal)> low;
};

using RewardFn = double (*)(const Vector&, const Goal&, const Vector&, const GoalSpace&);

/// Replaces each entry's goal with a uniform sample from the goal range with
/// probability `prob`, recomputing reward and next goal from the stored states.
inline std::vector<LowTransition> relabel_low_goals(std::vector<LowTransition> batch, double prob,
                                                    const GoalSpace& space, RewardFn reward, double reward_scale,
                                                    Rng& rng) {
  for (auto& t : batch) {
    if (!(rng.uniform() < prob)) continue;
    Goal g(static_cast<Eigen::Index>(space.size()));
    for (Eigen::Index d = 0; d < g.size(); ++d) g[d] = rng.uniform(-space.goal_range[d], space.goal_range[d]);
    t.goal = g;
    t.intrinsic_reward = reward_scale * reward(t.state, g, t.next_state, space);
    t.next_goal = goal_transition(t.state, g, t.next_state, space);
  }
  return batch;
}

inline Batch make_low_batch(const std::vector<LowTransition>& items) {
  const auto n = static_cast<Eigen::Index>(items.size());
  const auto& first = items.front();
  const auto in_dim = first.state.size() + first.goal.size();
  Batch b;
  b.states.resize(in_dim, n);
  b.next_states.resize(in_dim, n);
  b.actions.resize(first.action.size(), n);
  b.rewards.resize(n);
  b.terminals.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& t = items[static_cast<std::size_t>(i)];
    b.states.col(i) << t.state, t.goal;
    b.next_states.col(i) << t.next_state, t.next_goal;
    b.actions.col(i) = t.action;
    b.rewards[i] = t.intrinsic_reward;
    b.terminals[i] = t.terminal ? 1.0 : 0.0;
  }
  return b;
}

inline Batch make_high_batch(const std::vector<RelabeledBatchEntry>& items) {
  const auto n = static_cast<Eigen::Index>(items.size());
  const auto& first = items.front();
  Batch b;
  b.states.resize(first.state.size(), n);
  b.next_states.resize(first.state.size(), n);
  b.actions.resize(first.relabeled_goal.size(), n);
  b.rewards.resize(n);
  b.terminals.resize(n);
  b.target_weights.resize(n);
  bool weighted = false;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& e = items[static_cast<std::size_t>(i)];
    b.states.col(i) = e.state;
    b.next_states.col(i) = e.final_state;
    b.actions.col(i) = e.relabeled_goal;
    b.rewards[i] = e.scaled_reward;
    b.terminals[i] = e.terminal ? 1.0 : 0.0;
    b.target_weights[i] = e.importance_weight;
    weighted = weighted || e.importance_weight != 1.0;
  }
  if (!weighted) b.target_weights.resize(0);
  return b;
}

/// Two-level HIRO training loop (or a flat TD3 agent for the no_hrl ablation).
class HiroTrainer {
 public:
  HiroTrainer(HiroConfig config, env::EnvSpec spec, std::uint64_t seed)
      : config_(std::move(config)),
        env_(spec),
        eval_env_(spec),
        space_(spec.goal_space(config_.goal_range_xy, config_.goal_range_z)),
        low_buffer_(config_.buffer_capacity),
        high_buffer_(config_.buffer_capacity),
        env_rng_(derive_seed(seed, "env")),
        explore_rng_(derive_seed(seed, "explore")),
        replay_rng_(derive_seed(seed, "replay")),
        train_rng_(derive_seed(seed, "train")),
        correction_rng_(derive_seed(seed, "correction")),
        low_relabel_rng_(derive_seed(seed, "low_relabel")),
        eval_rng_(derive_seed(seed, "eval")),
        pretrain_rng_(derive_seed(seed, "pretrain")) {
    if (config_.c == 0) throw std::invalid_argument("HiroConfig: c must be >= 1");
    const auto obs_dim = spec.observation_dims();
    Rng high_init(derive_seed(seed, "agent_high"));
    Rng low_init(derive_seed(seed, "agent_low"));
    Rng flat_init(derive_seed(seed, "agent_flat"));
    if (flat()) {
      flat_.emplace(td3_config(obs_dim, spec.action_low(), spec.action_high(), config_.sigma_low), flat_init);
    } else {
      high_.emplace(td3_config(obs_dim, space_.low(), space_.high(), config_.sigma_high), high_init);
      low_.emplace(td3_config(obs_dim + space_.size(), spec.action_low(), spec.action_high(), config_.sigma_low),
                   low_init);
    }
    strategy_ = CorrectionStrategy::defaults_for(effective_correction(config_), space_, config_.high_reward_scale);
    strategy_.candidate_count = config_.candidate_count;
  }

  const HiroConfig& config() const { return config_; }
  const GoalSpace& goal_space() const { return space_; }
  const env::EnvSpec& env_spec() const { return env_.spec(); }
  bool flat() const { return config_.ablation == Ablation::no_hrl; }
  bool low_frozen() const { return low_frozen_; }

  Td3Agent& high_agent() { return *high_; }
  Td3Agent& low_agent() { return *low_; }
  Td3Agent& flat_agent() { return *flat_; }
  const Td3Agent& high_agent() const { return *high_; }
  const Td3Agent& low_agent() const { return *low_; }
  const Td3Agent& flat_agent() const { return *flat_; }

  const RingBuffer<LowTransition>& low_buffer() const { return low_buffer_; }
  const RingBuffer<HighSegment>& high_buffer() const { return high_buffer_; }

  std::uint64_t env_steps() const { return env_steps_; }
  std::uint64_t pretrain_steps_done() const { return pretrain_steps_done_; }
  std::uint64_t segments_relabeled() const { return segments_relabeled_; }
  std::uint64_t segments_changed() const { return segments_changed_; }
  const std::optional<EvalResult>& best_eval() const { return best_eval_; }

  void set_hooks(PolicyHooks hooks) { hooks_ = std::move(hooks); }
  void set_metric_sink(MetricSink sink) { sink_ = std::move(sink); }
  void set_step_callback(std::function<void(std::uint64_t)> cb) { on_step_ = std::move(cb); }

  // Disables all training; data is still collected.
  void set_training_enabled(bool enabled) { training_enabled_ = enabled; }

  RewardFn low_reward_fn() const {
    return config_.ablation == Ablation::fun_cosine ? &cosine_reward : &intrinsic_reward;
  }

  struct EpisodeResult {
    double episode_return = 0.0;
    std::size_t length = 0;
    std::size_t segments = 0;
    bool success = false;
  };

  /// Collects one training episode, training and evaluating on schedule.
  /// Stops early (mid-episode) once total_steps is reached.
  EpisodeResult run_episode() {
    return flat() ? run_flat_episode() : run_hierarchical_episode();
  }

  TrainLosses train_tick(std::uint64_t step) {
    TrainLosses out;
    if (!training_enabled_) return out;
    const std::size_t batch = config_.batch_size;
    if (flat()) {
      if (step % config_.low_train_every == 0 && low_buffer_.size() >= batch) {
        auto items = low_buffer_.sample(batch, replay_rng_);
        out.flat_critic_loss = flat_->train(make_low_batch(items), train_rng_).critic_loss;
      }
      return out;
    }
    if (!low_frozen_ && step % config_.low_train_every == 0 && low_buffer_.size() >= batch) {
      out.low_critic_loss = train_low_once();
    }
    if (step % config_.high_train_every == 0 && high_buffer_.size() >= batch) {
      out.high_critic_loss = train_high_once();
    }
    return out;
  }

  /// Trains the lower level alone for pretrain_steps against Gaussian goals, then freezes it.
  void pretrain_lower() {
    if (flat()) throw PreconditionError("pretrain_lower: no lower level in the flat ablation");
    pretrain_lower_for(config_.pretrain_steps);
    freeze_lower();
  }

  void pretrain_lower_for(std::uint64_t steps) {
    std::uint64_t done = 0;
    while (done < steps) {
      Vector obs = env_.reset(pretrain_rng_);
      Goal goal;
      for (std::size_t t = 0; done < steps; ++t) {
        if (t % config_.c == 0) goal = sample_pretrain_goal(pretrain_rng_);
        const Vector action = low_->select_action(concat(obs, goal), true, explore_rng_);
        const auto res = env_.step(action);
        store_low(obs, goal, action, res.next_observation, res.terminal);
        ++done;
        ++pretrain_steps_done_;
        if (training_enabled_ && done % config_.low_train_every == 0 && low_buffer_.size() >= config_.batch_size)
          train_low_once();
        goal = goal_transition(obs, goal, res.next_observation, space_);
        obs = res.next_observation;
        if (res.terminal) break;
      }
    }
  }

  void freeze_lower() {
    low_frozen_ = true;
    low_->set_exploration_sigma(0.0);
  }

  // N(0, (0.5 x half range)^2) per dim, clipped; same width as the correction candidates.
  Goal sample_pretrain_goal(Rng& rng) const {
    Goal g(static_cast<Eigen::Index>(space_.size()));
    for (Eigen::Index d = 0; d < g.size(); ++d) g[d] = 0.5 * space_.goal_range[d] * rng.normal();
    return space_.clip_goal(g);
  }

  /// Deterministic rollouts of the current policies; never touches the replay buffers.
  EvalResult evaluate(std::size_t episodes) {
    EvalResult r;
    r.episodes = episodes;
    if (episodes == 0) return r;
    double successes = 0.0, returns = 0.0;
    for (std::size_t e = 0; e < episodes; ++e) {
      Vector obs = eval_env_.reset(eval_rng_, env::ResetMode::eval);
      Goal goal;
      double ret = 0.0;
      bool success = false;
      for (std::size_t t = 0;; ++t) {
        Vector action;
        if (flat()) {
          action = flat_->select_action(obs, false, eval_rng_);
        } else {
          if (t % config_.c == 0) goal = high_->select_action(obs, false, eval_rng_);
          action = low_->select_action(concat(obs, goal), false, eval_rng_);
        }
        const auto res = eval_env_.step(action);
        ret += res.reward;
        if (!flat()) goal = goal_transition(obs, goal, res.next_observation, space_);
        obs = res.next_observation;
        if (res.terminal) {
          success = res.success;
          break;
        }
      }
      successes += success ? 1.0 : 0.0;
      returns += ret;
    }
    r.success_rate = successes / static_cast<double>(episodes);
    r.mean_return = returns / static_cast<double>(episodes);
    r.score = env_.spec().navigation() ? r.success_rate : r.mean_return;
    return r;
  }

  /// Full run: optional pretraining, then episodes until total_steps.
  void run() {
    if (config_.ablation == Ablation::pretrain_low && !low_frozen_) pretrain_lower();
    while (env_steps_ < config_.total_steps) run_episode();
  }

  void save_agents(std::ostream& os) const {
    if (flat()) {
      flat_->save(os);
    } else {
      high_->save(os);
      low_->save(os);
    }
  }

  void load_agents(std::istream& is) {
    if (flat()) {
      flat_ = Td3Agent::load(is);
    } else {
      high_ = Td3Agent::load(is);
      low_ = Td3Agent::load(is);
    }
  }

 private:
  Td3Config td3_config(std::size_t input_dim, Vector low, Vector high, double sigma) const {
    Td3Config c;
    c.input_dim = input_dim;
    c.action_low = std::move(low);
    c.action_high = std::move(high);
    c.hidden = config_.hidden;
    c.gamma = config_.gamma;
    c.tau = config_.tau;
    c.actor_lr = config_.actor_lr;
    c.critic_lr = config_.critic_lr;
    c.policy_noise = config_.policy_noise;
    c.noise_clip = config_.noise_clip;
    c.actor_delay = config_.actor_delay;
    c.exploration_sigma = sigma;
    return c;
  }

  void store_low(const Vector& obs, const Goal& goal, const Vector& action, const Vector& next_obs, bool terminal) {
    LowTransition t;
    t.state = obs;
    t.goal = goal;
    t.action = action;
    t.intrinsic_reward = config_.low_reward_scale * low_reward_fn()(obs, goal, next_obs, space_);
    t.next_state = next_obs;
    t.next_goal = goal_transition(obs, goal, next_obs, space_);
    t.terminal = terminal;
    low_buffer_.insert(std::move(t));
  }

  double train_low_once() {
    auto items = low_buffer_.sample(config_.batch_size, replay_rng_);
    if (config_.ablation == Ablation::relabel_low)
      items = relabel_low_goals(std::move(items), config_.relabel_low_prob, space_, low_reward_fn(),
                                config_.low_reward_scale, low_relabel_rng_);
    return low_->train(make_low_batch(items), train_rng_).critic_loss;
  }

  double train_high_once() {
    const auto idx = high_buffer_.sample_indices(config_.batch_size, replay_rng_);
    std::vector<RelabeledBatchEntry> entries;
    entries.reserve(idx.size());
    for (auto i : idx) {
      const auto& seg = high_buffer_[i];
      auto e = relabel(strategy_, low_->actor(), seg, space_, correction_rng_);
      ++segments_relabeled_;
      if (e.relabeled_goal != seg.original_goal) ++segments_changed_;
      entries.push_back(std::move(e));
    }
    return high_->train(make_high_batch(entries), train_rng_).critic_loss;
  }

  struct LossAccumulator {
    double low = 0.0, high = 0.0, flat = 0.0;
    std::size_t n_low = 0, n_high = 0, n_flat = 0;
    void add(const TrainLosses& l) {
      if (l.low_critic_loss) low += *l.low_critic_loss, ++n_low;
      if (l.high_critic_loss) high += *l.high_critic_loss, ++n_high;
      if (l.flat_critic_loss) flat += *l.flat_critic_loss, ++n_flat;
    }
  };

  // Shared per-step bookkeeping: step counter, training, evaluation, callbacks.
  void after_env_step(LossAccumulator& acc) {
    ++env_steps_;
    acc.add(train_tick(env_steps_));
    if (config_.eval_every > 0 && env_steps_ % config_.eval_every == 0) emit_eval();
    if (on_step_) on_step_(env_steps_);
  }

  void emit_eval() {
    const auto r = evaluate(config_.eval_episodes);
    if (!best_eval_ || r.score > best_eval_->score) best_eval_ = r;
    if (!sink_) return;
    sink_({"eval",
           env_steps_,
           {{"score", r.score}, {"success_rate", r.success_rate}, {"mean_return", r.mean_return},
            {"episodes", static_cast<double>(r.episodes)}}});
    if (!flat()) {
      const auto since = segments_relabeled_ - stats_mark_relabeled_;
      const auto changed = segments_changed_ - stats_mark_changed_;
      sink_({"correction_stats",
             env_steps_,
             {{"segments", static_cast<double>(since)},
              {"relabel_differs_fraction", since ? static_cast<double>(changed) / static_cast<double>(since) : 0.0}}});
      stats_mark_relabeled_ = segments_relabeled_;
      stats_mark_changed_ = segments_changed_;
    }
  }

  void emit_train(const EpisodeResult& ep, const LossAccumulator& acc) {
    if (!sink_) return;
    MetricRecord rec{"train", env_steps_, {{"episode_return", ep.episode_return},
                                           {"episode_length", static_cast<double>(ep.length)}}};
    auto mean = [](double s, std::size_t n) { return n ? s / static_cast<double>(n) : 0.0; };
    if (flat()) {
      rec.payload.emplace_back("critic_loss", mean(acc.flat, acc.n_flat));
    } else {
      rec.payload.emplace_back("low_critic_loss", mean(acc.low, acc.n_low));
      rec.payload.emplace_back("high_critic_loss", mean(acc.high, acc.n_high));
    }
    sink_(rec);
  }

  EpisodeResult run_hierarchical_episode() {
    EpisodeResult ep;
    LossAccumulator acc;
    Vector obs = env_.reset(env_rng_);
    Goal goal;
    HighSegment seg;
    const bool explore_low = !low_frozen_;
    const double sigma = explore_low ? config_.sigma_low : 0.0;
    const double quad = detail::quadratic_scale(sigma);

    for (std::size_t t = 0; env_steps_ < config_.total_steps; ++t) {
      if (t % config_.c == 0) {
        goal = hooks_.high ? space_.clip_goal(hooks_.high(obs)) : high_->select_action(obs, true, explore_rng_);
        seg = HighSegment{};
        seg.original_goal = goal;
        seg.behavior_sigma = sigma;
      }
      const Vector low_in = concat(obs, goal);
      Vector mean_action = hooks_.low ? hooks_.low(obs, goal) : nn::forward(low_->actor(), low_in);
      Vector action = mean_action;
      if (explore_low && !hooks_.low) action = low_->select_action(low_in, true, explore_rng_);
      const auto res = env_.step(action);
      const Goal next_goal = goal_transition(obs, goal, res.next_observation, space_);

      if (!low_frozen_) store_low(obs, goal, action, res.next_observation, res.terminal);
      seg.states.push_back(obs);
      seg.actions.push_back(action);
      seg.behavior_log_probs.push_back(-quad * (action - mean_action).squaredNorm());
      seg.env_reward_sum += res.reward;
      ep.episode_return += res.reward;
      ep.length += 1;

      const bool last = res.terminal || env_steps_ + 1 >= config_.total_steps;
      if (seg.length() == config_.c || last) {
        seg.final_state = res.next_observation;
        seg.terminal = res.terminal || last;
        high_buffer_.insert(std::move(seg));
        seg = HighSegment{};
        ep.segments += 1;
      }
      after_env_step(acc);
      obs = res.next_observation;
      goal = next_goal;
      if (res.terminal) {
        ep.success = res.success;
        break;
      }
    }
    emit_train(ep, acc);
    return ep;
  }

  EpisodeResult run_flat_episode() {
    EpisodeResult ep;
    LossAccumulator acc;
    Vector obs = env_.reset(env_rng_);
    while (env_steps_ < config_.total_steps) {
      const Vector action = flat_->select_action(obs, true, explore_rng_);
      const auto res = env_.step(action);
      LowTransition t;
      t.state = obs;
      t.action = action;
      t.intrinsic_reward = res.reward;  // raw environment reward
      t.next_state = res.next_observation;
      t.terminal = res.terminal;
      low_buffer_.insert(std::move(t));
      ep.episode_return += res.reward;
      ep.length += 1;
      after_env_step(acc);
      obs = res.next_observation;
      if (res.terminal) {
        ep.success = res.success;
        break;
      }
    }
    emit_train(ep, acc);
    return ep;
  }

  HiroConfig config_;
  env::Environment env_;
  env::Environment eval_env_;
  GoalSpace space_;
  CorrectionStrategy strategy_;
  std::optional<Td3Agent> high_, low_, flat_;
  RingBuffer<LowTransition> low_buffer_;  // holds flat transitions in the no_hrl ablation
  RingBuffer<HighSegment> high_buffer_;
  Rng env_rng_, explore_rng_, replay_rng_, train_rng_, correction_rng_, low_relabel_rng_, eval_rng_, pretrain_rng_;
  PolicyHooks hooks_;
  MetricSink sink_;
  std::function<void(std::uint64_t)> on_step_;
  bool low_frozen_ = false;
  bool training_enabled_ = true;
  std::uint64_t env_steps_ = 0;
  std::uint64_t pretrain_steps_done_ = 0;
  std::uint64_t segments_relabeled_ = 0;
  std::uint64_t segments_changed_ = 0;
  std::uint64_t stats_mark_relabeled_ = 0;
  std::uint64_t stats_mark_changed_ = 0;
  std::optional<EvalResult> best_eval_;
};

}  // namespace hiro
