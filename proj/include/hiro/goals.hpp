#pragma once

#include "hiro/common.hpp"

#include <cstddef>
#include <algorithm>
#include <set>
#include <string>
#include <vector>

namespace hiro {

// A goal is a desired relative change of the goal-space projection of the state.
using Goal = Vector;

struct GoalSpace {
  std::vector<std::size_t> dims;  // state indices that make up the goal space
  Vector goal_range;              // symmetric half-width per goal dim

  GoalSpace() = default;
  GoalSpace(std::vector<std::size_t> dims_, Vector range) : dims(std::move(dims_)), goal_range(std::move(range)) {
    if (goal_range.size() != static_cast<Eigen::Index>(dims.size()))
      throw std::invalid_argument("GoalSpace: range length must equal number of dims");
    if (std::set<std::size_t>(dims.begin(), dims.end()).size() != dims.size())
      throw std::invalid_argument("GoalSpace: duplicate dims");
    if (!goal_range.allFinite() || (goal_range.array() <= 0.0).any())
      throw std::invalid_argument("GoalSpace: goal range must be finite and positive");
  }

  std::size_t size() const { return dims.size(); }
  Vector low() const { return -goal_range; }
  Vector high() const { return goal_range; }
  Goal clip_goal(const Goal& g) const { return clip(g, low(), high()); }
  bool contains(const Goal& g) const {
    return g.size() == goal_range.size() && (g.cwiseAbs().array() <= goal_range.array()).all();
  }
};

inline Vector project(const Vector& state, const GoalSpace& space) {
  Vector out(static_cast<Eigen::Index>(space.dims.size()));
  for (std::size_t i = 0; i < space.dims.size(); ++i) {
    const auto d = space.dims[i];
    if (d >= static_cast<std::size_t>(state.size()))
      throw std::invalid_argument("project: goal dim " + std::to_string(d) + " outside state of size " +
                                  std::to_string(state.size()));
    out[static_cast<Eigen::Index>(i)] = state[static_cast<Eigen::Index>(d)];
  }
  return out;
}

// h(s, g, s') = s + g - s'
inline Goal goal_transition(const Vector& state, const Goal& goal, const Vector& next_state, const GoalSpace& space) {
  return project(state, space) + goal - project(next_state, space);
}

// r(s, g, s') = -||s + g - s'||
inline double intrinsic_reward(const Vector& state, const Goal& goal, const Vector& next_state,
                               const GoalSpace& space) {
  return -goal_transition(state, goal, next_state, space).norm();
}

// Cosine between the realized movement and the goal; 0 if either is zero.
inline double cosine_reward(const Vector& state, const Goal& goal, const Vector& next_state, const GoalSpace& space) {
  const Vector moved = project(next_state, space) - project(state, space);
  const double denom = moved.norm() * goal.norm();
  if (denom == 0.0) return 0.0;
  return std::clamp(moved.dot(goal) / denom, -1.0, 1.0);
}

}  // namespace hiro
