#pragma once

#include "hiro/common.hpp"
#include "hiro/nn.hpp"
#include "hiro/rng.hpp"

#include <cstddef>
#include <algorithm>
#include <istream>
#include <optional>
#include <ostream>
#include <vector>

namespace hiro {

struct Td3Config {
  std::size_t input_dim = 0;  // state, or state ++ goal for the lower level
  Vector action_low;
  Vector action_high;
  std::vector<std::size_t> hidden = {64, 64};
  double gamma = 0.99;
  double tau = 0.005;
  double actor_lr = 1e-4;
  double critic_lr = 1e-3;
  // Target smoothing noise and its clip, as fractions of the half action range.
  double policy_noise = 0.2;
  double noise_clip = 0.5;
  std::size_t actor_delay = 2;
  double exploration_sigma = 1.0;
};

// Column-major minibatch: one sample per column.
struct Batch {
  Matrix states;
  Matrix actions;
  Vector rewards;
  Matrix next_states;
  Vector terminals;       // 1.0 for terminal, 0.0 otherwise
  Vector target_weights;  // multiplies the Bellman target; empty means all ones

  Eigen::Index size() const { return states.cols(); }
};

/// TD3 learner: twin critics, target policy smoothing, delayed actor and
/// target updates.
class Td3Agent {
 public:
  Td3Agent() = default;

  Td3Agent(Td3Config config, Rng& init_rng) : config_(std::move(config)) {
    const auto act_dim = static_cast<std::size_t>(config_.action_low.size());
    if (config_.input_dim == 0 || act_dim == 0) throw std::invalid_argument("Td3Agent: zero input or action dim");
    if (config_.action_high.size() != config_.action_low.size())
      throw std::invalid_argument("Td3Agent: action bounds length mismatch");

    std::vector<std::size_t> actor_sizes{config_.input_dim};
    actor_sizes.insert(actor_sizes.end(), config_.hidden.begin(), config_.hidden.end());
    actor_sizes.push_back(act_dim);
    std::vector<std::size_t> critic_sizes{config_.input_dim + act_dim};
    critic_sizes.insert(critic_sizes.end(), config_.hidden.begin(), config_.hidden.end());
    critic_sizes.push_back(1);

    actor_ = nn::make_mlp(actor_sizes, nn::OutputTransform::tanh_scaled, init_rng, config_.action_low,
                          config_.action_high);
    critic1_ = nn::make_mlp(critic_sizes, nn::OutputTransform::identity, init_rng);
    critic2_ = nn::make_mlp(critic_sizes, nn::OutputTransform::identity, init_rng);
    actor_target_ = actor_;
    critic1_target_ = critic1_;
    critic2_target_ = critic2_;
    actor_opt_ = nn::AdamState::for_network(actor_, config_.actor_lr);
    critic1_opt_ = nn::AdamState::for_network(critic1_, config_.critic_lr);
    critic2_opt_ = nn::AdamState::for_network(critic2_, config_.critic_lr);
  }

  const Td3Config& config() const { return config_; }
  std::size_t input_dim() const { return config_.input_dim; }
  std::size_t action_dim() const { return static_cast<std::size_t>(config_.action_low.size()); }
  Vector half_range() const { return 0.5 * (config_.action_high - config_.action_low); }

  const nn::Mlp& actor() const { return actor_; }
  const nn::Mlp& actor_target() const { return actor_target_; }
  const nn::Mlp& critic1() const { return critic1_; }
  const nn::Mlp& critic2() const { return critic2_; }
  const nn::Mlp& critic1_target() const { return critic1_target_; }
  const nn::Mlp& critic2_target() const { return critic2_target_; }
  nn::Mlp& actor() { return actor_; }
  nn::Mlp& actor_target() { return actor_target_; }
  nn::Mlp& critic1() { return critic1_; }
  nn::Mlp& critic2() { return critic2_; }
  nn::Mlp& critic1_target() { return critic1_target_; }
  nn::Mlp& critic2_target() { return critic2_target_; }
  std::uint64_t critic_updates() const { return critic_updates_; }

  void set_exploration_sigma(double sigma) { config_.exploration_sigma = sigma; }

  Vector select_action(const Vector& state_input, bool explore, Rng& rng) const {
    Vector a = nn::forward(actor_, state_input);
    if (!explore) return a;
    for (Eigen::Index i = 0; i < a.size(); ++i) a[i] += config_.exploration_sigma * rng.normal();
    return clip(a, config_.action_low, config_.action_high);
  }

  // Smoothed target action for a batch of next states.
  Matrix smoothed_target_actions(const Matrix& next_inputs, Rng& rng) const {
    Matrix a = nn::forward_batch(actor_target_, next_inputs);
    const Vector half = half_range();
    for (Eigen::Index c = 0; c < a.cols(); ++c) {
      for (Eigen::Index d = 0; d < a.rows(); ++d) {
        const double sigma = config_.policy_noise * half[d];
        const double bound = config_.noise_clip * half[d];
        const double noise = std::clamp(sigma * rng.normal(), -bound, bound);
        a(d, c) = std::clamp(a(d, c) + noise, config_.action_low[d], config_.action_high[d]);
      }
    }
    return a;
  }

  // r + gamma * (1 - terminal) * min(Q1', Q2')(s', a~) per column, scaled by target_weights.
  Vector critic_targets(const Vector& rewards, const Matrix& next_inputs, const Vector& terminals, Rng& rng,
                        const Vector& weights = {}) const {
    const Matrix next_actions = smoothed_target_actions(next_inputs, rng);
    Matrix critic_in(next_inputs.rows() + next_actions.rows(), next_inputs.cols());
    critic_in << next_inputs, next_actions;
    const Vector q1 = nn::forward_batch(critic1_target_, critic_in).row(0).transpose();
    const Vector q2 = nn::forward_batch(critic2_target_, critic_in).row(0).transpose();
    Vector y = rewards.array() + config_.gamma * (1.0 - terminals.array()) * q1.cwiseMin(q2).array();
    if (weights.size() > 0) y.array() *= weights.array();
    return y;
  }

  double critic_target(double reward, const Vector& next_state_input, bool terminal, Rng& rng) const {
    Vector r(1), t(1);
    r[0] = reward;
    t[0] = terminal ? 1.0 : 0.0;
    return critic_targets(r, Matrix(next_state_input), t, rng)[0];
  }

  /// One Adam step on both critics. Returns the pre-update loss,
  /// mean over the batch of the mean of the two twins' squared errors.
  double train_critics(const Batch& batch, Rng& rng) {
    const Eigen::Index n = batch.size();
    if (n == 0) throw PreconditionError("train_critics: empty batch");
    const Vector y = critic_targets(batch.rewards, batch.next_states, batch.terminals, rng, batch.target_weights);

    Matrix critic_in(batch.states.rows() + batch.actions.rows(), n);
    critic_in << batch.states, batch.actions;
    nn::Tape tape1, tape2;
    const Matrix q1 = nn::forward_batch(critic1_, critic_in, &tape1);
    const Matrix q2 = nn::forward_batch(critic2_, critic_in, &tape2);
    const Matrix e1 = q1 - y.transpose();
    const Matrix e2 = q2 - y.transpose();
    const double loss = 0.5 * (e1.squaredNorm() + e2.squaredNorm()) / static_cast<double>(n);
    if (!std::isfinite(loss)) throw NumericError("train_critics: non-finite loss");

    // d/dQ of 0.5 * e^2 / n
    const double scale = 1.0 / static_cast<double>(n);
    nn::adam_step(critic1_opt_, critic1_, nn::backward_batch(critic1_, tape1, e1 * scale));
    nn::adam_step(critic2_opt_, critic2_, nn::backward_batch(critic2_, tape2, e2 * scale));
    ++critic_updates_;
    return loss;
  }

  /// One Adam ascent step on the actor through critic1. Returns mean Q before the update.
  double train_actor(const Batch& batch) {
    const Eigen::Index n = batch.size();
    if (n == 0) throw PreconditionError("train_actor: empty batch");
    nn::Tape actor_tape, critic_tape;
    const Matrix actions = nn::forward_batch(actor_, batch.states, &actor_tape);
    Matrix critic_in(batch.states.rows() + actions.rows(), n);
    critic_in << batch.states, actions;
    const Matrix q = nn::forward_batch(critic1_, critic_in, &critic_tape);
    const double mean_q = q.mean();

    // loss = -mean(Q)
    Matrix dq = Matrix::Constant(1, n, -1.0 / static_cast<double>(n));
    Matrix d_critic_in;
    nn::backward_batch(critic1_, critic_tape, dq, &d_critic_in);
    const Matrix d_actions = d_critic_in.bottomRows(actions.rows());
    nn::adam_step(actor_opt_, actor_, nn::backward_batch(actor_, actor_tape, d_actions));
    return mean_q;
  }

  void update_targets() {
    nn::soft_update(actor_target_, actor_, config_.tau);
    nn::soft_update(critic1_target_, critic1_, config_.tau);
    nn::soft_update(critic2_target_, critic2_, config_.tau);
  }

  struct TrainStats {
    double critic_loss = 0.0;
    std::optional<double> actor_q;
  };

  // Critic step every call; actor step and target update every actor_delay calls.
  TrainStats train(const Batch& batch, Rng& rng) {
    TrainStats stats;
    stats.critic_loss = train_critics(batch, rng);
    if (config_.actor_delay == 0 || critic_updates_ % config_.actor_delay == 0) {
      stats.actor_q = train_actor(batch);
      update_targets();
    }
    return stats;
  }

  void save(std::ostream& os) const;
  static Td3Agent load(std::istream& is);

 private:
  Td3Config config_;
  nn::Mlp actor_, actor_target_;
  nn::Mlp critic1_, critic2_, critic1_target_, critic2_target_;
  nn::AdamState actor_opt_, critic1_opt_, critic2_opt_;
  std::uint64_t critic_updates_ = 0;
};

inline constexpr std::string_view kTd3Magic = "HIROTD31";

// Layout: "HIROTD31", config scalars, six networks, three Adam states, update counter.
inline void Td3Agent::save(std::ostream& os) const {
  binio::write_magic(os, kTd3Magic);
  binio::write_u64(os, config_.input_dim);
  binio::write_vector(os, config_.action_low);
  binio::write_vector(os, config_.action_high);
  binio::write_u64(os, config_.hidden.size());
  for (auto h : config_.hidden) binio::write_u64(os, h);
  for (double v : {config_.gamma, config_.tau, config_.actor_lr, config_.critic_lr, config_.policy_noise,
                   config_.noise_clip, config_.exploration_sigma})
    binio::write_f64(os, v);
  binio::write_u64(os, config_.actor_delay);
  for (const auto* net : {&actor_, &actor_target_, &critic1_, &critic2_, &critic1_target_, &critic2_target_})
    nn::write_mlp(os, *net);
  nn::write_adam(os, actor_opt_);
  nn::write_adam(os, critic1_opt_);
  nn::write_adam(os, critic2_opt_);
  binio::write_u64(os, critic_updates_);
}

inline Td3Agent Td3Agent::load(std::istream& is) {
  binio::expect_magic(is, kTd3Magic);
  Td3Agent agent;
  auto& c = agent.config_;
  c.input_dim = binio::read_u64(is);
  c.action_low = binio::read_vector(is);
  c.action_high = binio::read_vector(is);
  const auto n_hidden = binio::read_u64(is);
  if (n_hidden > 64) throw FormatError("hidden layer count out of range");
  c.hidden.resize(n_hidden);
  for (auto& h : c.hidden) h = binio::read_u64(is);
  for (double* v : {&c.gamma, &c.tau, &c.actor_lr, &c.critic_lr, &c.policy_noise, &c.noise_clip,
                    &c.exploration_sigma})
    *v = binio::read_f64(is);
  c.actor_delay = binio::read_u64(is);
  for (auto* net : {&agent.actor_, &agent.actor_target_, &agent.critic1_, &agent.critic2_, &agent.critic1_target_,
                    &agent.critic2_target_})
    *net = nn::read_mlp(is);
  agent.actor_opt_ = nn::read_adam(is);
  agent.critic1_opt_ = nn::read_adam(is);
  agent.critic2_opt_ = nn::read_adam(is);
  agent.critic_updates_ = binio::read_u64(is);
  if (agent.actor_.input_size() != c.input_dim) throw FormatError("checkpoint actor does not match config");
  return agent;
}

}  // namespace hiro
