#pragma once

#include "hiro/common.hpp"
#include "hiro/goals.hpp"
#include "hiro/nn.hpp"
#include "hiro/replay.hpp"
#include "hiro/rng.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace hiro {

enum class CorrectionKind { none, max_likelihood, direct_importance, importance_relabel, model_based, transition_pg };

inline std::string_view to_string(CorrectionKind kind) {
  switch (kind) {
    case CorrectionKind::none: return "none";
    case CorrectionKind::max_likelihood: return "max_likelihood";
    case CorrectionKind::direct_importance: return "direct_importance";
    case CorrectionKind::importance_relabel: return "importance_relabel";
    case CorrectionKind::model_based: return "model_based";
    case CorrectionKind::transition_pg: return "transition_pg";
  }
  return "?";
}

inline std::optional<CorrectionKind> parse_correction(std::string_view name) {
  for (auto k : {CorrectionKind::none, CorrectionKind::max_likelihood, CorrectionKind::direct_importance,
                 CorrectionKind::importance_relabel, CorrectionKind::model_based, CorrectionKind::transition_pg})
    if (to_string(k) == name) return k;
  return std::nullopt;
}

inline constexpr double kMinImportanceWeight = 1e-3;
inline constexpr double kMaxImportanceWeight = 1e3;

struct CorrectionStrategy {
  CorrectionKind kind = CorrectionKind::max_likelihood;
  std::size_t candidate_count = 10;
  Vector candidate_sigma;  // per goal dim
  Vector model_sigma;      // per goal dim, for model_based / transition_pg
  double high_reward_scale = 0.1;

  // Candidate sigma 0.5 x half range. Transition-PG sigma 0.1 x half range;
  // model_based reuses the candidate sigma.
  static CorrectionStrategy defaults_for(CorrectionKind kind, const GoalSpace& space, double high_reward_scale = 0.1) {
    CorrectionStrategy s;
    s.kind = kind;
    s.candidate_sigma = 0.5 * space.goal_range;
    s.model_sigma = kind == CorrectionKind::transition_pg ? Vector(0.1 * space.goal_range) : s.candidate_sigma;
    s.high_reward_scale = high_reward_scale;
    return s;
  }
};

struct RelabeledBatchEntry {
  Vector state;
  Goal relabeled_goal;
  double scaled_reward = 0.0;
  Vector final_state;
  bool terminal = false;
  double importance_weight = 1.0;
  int candidate_index = -1;  // index into the candidate set, when one was used
};

namespace detail {

inline void require_segment(const HighSegment& seg) {
  if (seg.states.empty() || seg.states.size() != seg.actions.size())
    throw PreconditionError("segment must hold equal, non-zero numbers of states and actions");
}

inline RelabeledBatchEntry entry_with_goal(const HighSegment& seg, Goal goal, double reward_scale) {
  RelabeledBatchEntry e;
  e.state = seg.states.front();
  e.relabeled_goal = std::move(goal);
  e.scaled_reward = reward_scale * seg.env_reward_sum;
  e.final_state = seg.final_state;
  e.terminal = seg.terminal;
  return e;
}

inline double quadratic_scale(double sigma) { return sigma > 0.0 ? 1.0 / (2.0 * sigma * sigma) : 0.5; }

// Lowest index wins ties.
template <typename Better>
std::size_t best_index(const std::vector<double>& values, Better better) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (better(values[i], values[best])) best = i;
  return best;
}

}  // namespace detail

inline Goal state_delta(const HighSegment& seg, const GoalSpace& space) {
  return project(seg.final_state, space) - project(seg.states.front(), space);
}

/// [original g_t, s_{t+c} - s_t, then Gaussian samples around the delta], all clipped to the goal range.
inline std::vector<Goal> candidate_goals(const HighSegment& seg, const GoalSpace& space,
                                         const CorrectionStrategy& strategy, Rng& rng) {
  detail::require_segment(seg);
  if (strategy.candidate_count < 2) throw std::invalid_argument("candidate_goals: need at least 2 candidates");
  const Goal delta = state_delta(seg, space);
  std::vector<Goal> out;
  out.reserve(strategy.candidate_count);
  out.push_back(space.clip_goal(seg.original_goal));
  out.push_back(space.clip_goal(delta));
  while (out.size() < strategy.candidate_count) {
    Goal g(delta.size());
    for (Eigen::Index d = 0; d < g.size(); ++d) g[d] = delta[d] + strategy.candidate_sigma[d] * rng.normal();
    out.push_back(space.clip_goal(g));
  }
  return out;
}

/// Goals seen at each stored step when the segment starts from `goal`, rolled through h.
inline std::vector<Goal> rolled_goals(const HighSegment& seg, const Goal& goal, const GoalSpace& space) {
  std::vector<Goal> goals{goal};
  for (std::size_t i = 0; i + 1 < seg.states.size(); ++i)
    goals.push_back(goal_transition(seg.states[i], goals.back(), seg.states[i + 1], space));
  return goals;
}

/// -1/(2 sigma^2) * sum_i ||a_i - mu_lo(s_i, g~_i)||^2 for each candidate, with one batched forward pass.
inline std::vector<double> action_log_likelihoods(const nn::Mlp& lower_actor, const HighSegment& seg,
                                                  const std::vector<Goal>& candidates, const GoalSpace& space,
                                                  double behavior_sigma) {
  detail::require_segment(seg);
  const auto len = static_cast<Eigen::Index>(seg.states.size());
  const auto obs_dim = seg.states.front().size();
  const auto goal_dim = static_cast<Eigen::Index>(space.size());
  const auto n_cand = static_cast<Eigen::Index>(candidates.size());

  Matrix projected(goal_dim, len);
  for (Eigen::Index i = 0; i < len; ++i) projected.col(i) = project(seg.states[static_cast<std::size_t>(i)], space);
  Matrix inputs(obs_dim + goal_dim, len * n_cand);
  for (Eigen::Index i = 0; i < len; ++i)
    for (Eigen::Index k = 0; k < n_cand; ++k) inputs.col(k * len + i).head(obs_dim) = seg.states[static_cast<std::size_t>(i)];
  Vector g(goal_dim);
  for (Eigen::Index k = 0; k < n_cand; ++k) {
    g = candidates[static_cast<std::size_t>(k)];
    inputs.col(k * len).tail(goal_dim) = g;
    // same arithmetic as goal_transition
    for (Eigen::Index i = 1; i < len; ++i) {
      g = projected.col(i - 1) + g - projected.col(i);
      inputs.col(k * len + i).tail(goal_dim) = g;
    }
  }
  const Matrix predicted = nn::forward_batch(lower_actor, inputs);
  const double scale = detail::quadratic_scale(behavior_sigma);
  std::vector<double> out(static_cast<std::size_t>(n_cand), 0.0);
  for (Eigen::Index k = 0; k < n_cand; ++k) {
    double sq = 0.0;
    for (Eigen::Index i = 0; i < len; ++i)
      sq += (seg.actions[static_cast<std::size_t>(i)] - predicted.col(k * len + i)).squaredNorm();
    out[static_cast<std::size_t>(k)] = -scale * sq;
  }
  return out;
}

inline double action_log_likelihood(const nn::Mlp& lower_actor, const HighSegment& seg, const Goal& candidate,
                                    const GoalSpace& space, double behavior_sigma) {
  return action_log_likelihoods(lower_actor, seg, {candidate}, space, behavior_sigma).front();
}

inline RelabeledBatchEntry relabel_max_likelihood(const nn::Mlp& lower_actor, const HighSegment& seg,
                                                  const GoalSpace& space, const CorrectionStrategy& strategy,
                                                  Rng& rng) {
  detail::require_segment(seg);
  if (strategy.kind == CorrectionKind::none)
    return detail::entry_with_goal(seg, seg.original_goal, strategy.high_reward_scale);
  const auto candidates = candidate_goals(seg, space, strategy, rng);
  const auto ll = action_log_likelihoods(lower_actor, seg, candidates, space, seg.behavior_sigma);
  const auto best = detail::best_index(ll, [](double a, double b) { return a > b; });
  auto e = detail::entry_with_goal(seg, candidates[best], strategy.high_reward_scale);
  e.candidate_index = static_cast<int>(best);
  return e;
}

namespace detail {

inline double stored_log_prob_sum(const HighSegment& seg) {
  if (seg.behavior_log_probs.size() != seg.actions.size())
    throw PreconditionError("segment has no stored behavior log-densities");
  double sum = 0.0;
  for (double lp : seg.behavior_log_probs) sum += lp;
  return sum;
}

}  // namespace detail

/// Keeps g_t and weights the target by the clamped product of current/behavior density ratios.
inline RelabeledBatchEntry relabel_direct_importance(const nn::Mlp& lower_actor, const HighSegment& seg,
                                                     const GoalSpace& space, double high_reward_scale = 0.1) {
  detail::require_segment(seg);
  const double behavior = detail::stored_log_prob_sum(seg);
  const double current = action_log_likelihood(lower_actor, seg, seg.original_goal, space, seg.behavior_sigma);
  auto e = detail::entry_with_goal(seg, seg.original_goal, high_reward_scale);
  e.importance_weight = std::clamp(std::exp(current - behavior), kMinImportanceWeight, kMaxImportanceWeight);
  return e;
}

// (sum_i log mu_lo - log mu_beta)^2 for each candidate.
inline std::vector<double> importance_relabel_objective(const nn::Mlp& lower_actor, const HighSegment& seg,
                                                        const GoalSpace& space, const std::vector<Goal>& candidates) {
  const double behavior = detail::stored_log_prob_sum(seg);
  auto ll = action_log_likelihoods(lower_actor, seg, candidates, space, seg.behavior_sigma);
  for (auto& v : ll) v = (v - behavior) * (v - behavior);
  return ll;
}

inline RelabeledBatchEntry relabel_importance_relabel(const nn::Mlp& lower_actor, const HighSegment& seg,
                                                      const GoalSpace& space, const std::vector<Goal>& candidates,
                                                      double high_reward_scale = 0.1) {
  detail::require_segment(seg);
  const auto objective = importance_relabel_objective(lower_actor, seg, space, candidates);
  const auto best = detail::best_index(objective, [](double a, double b) { return a < b; });
  auto e = detail::entry_with_goal(seg, candidates[best], high_reward_scale);
  e.candidate_index = static_cast<int>(best);
  return e;
}

/// g~ ~ N(s_{t+c} - s_t, sigma^2), clipped. Serves both the model-based and transition-PG variants.
inline RelabeledBatchEntry relabel_model_based(const HighSegment& seg, const GoalSpace& space, Rng& rng,
                                               const Vector& sigma, double high_reward_scale = 0.1) {
  detail::require_segment(seg);
  Goal g = state_delta(seg, space);
  for (Eigen::Index d = 0; d < g.size(); ++d) g[d] += sigma[d] * rng.normal();
  return detail::entry_with_goal(seg, space.clip_goal(g), high_reward_scale);
}

inline RelabeledBatchEntry relabel(const CorrectionStrategy& strategy, const nn::Mlp& lower_actor,
                                   const HighSegment& seg, const GoalSpace& space, Rng& rng) {
  switch (strategy.kind) {
    case CorrectionKind::none:
    case CorrectionKind::max_likelihood:
      return relabel_max_likelihood(lower_actor, seg, space, strategy, rng);
    case CorrectionKind::direct_importance:
      return relabel_direct_importance(lower_actor, seg, space, strategy.high_reward_scale);
    case CorrectionKind::importance_relabel:
      return relabel_importance_relabel(lower_actor, seg, space, candidate_goals(seg, space, strategy, rng),
                                        strategy.high_reward_scale);
    case CorrectionKind::model_based:
    case CorrectionKind::transition_pg:
      return relabel_model_based(seg, space, rng, strategy.model_sigma, strategy.high_reward_scale);
  }
  throw std::logic_error("unknown correction kind");
}

}  // namespace hiro
