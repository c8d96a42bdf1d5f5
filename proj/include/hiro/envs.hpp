#pragma once

#include "hiro/common.hpp"
#include "hiro/goals.hpp"
#include "hiro/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace hiro::env {

enum class EnvKind { gather, maze, push, fall, open };

inline std::string_view to_string(EnvKind kind) {
  switch (kind) {
    case EnvKind::gather: return "gather";
    case EnvKind::maze: return "maze";
    case EnvKind::push: return "push";
    case EnvKind::fall: return "fall";
    case EnvKind::open: return "open";
  }
  return "?";
}

inline std::optional<EnvKind> parse_env(std::string_view name) {
  for (auto k : {EnvKind::gather, EnvKind::maze, EnvKind::push, EnvKind::fall, EnvKind::open})
    if (to_string(k) == name) return k;
  return std::nullopt;
}

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

struct Box {
  double x0, y0, x1, y1;

  static Box around(Vec2 c, double half) { return {c.x - half, c.y - half, c.x + half, c.y + half}; }
  bool overlaps(const Box& o) const { return x0 < o.x1 && o.x0 < x1 && y0 < o.y1 && o.y0 < y1; }
  bool contains(Vec2 p) const { return p.x > x0 && p.x < x1 && p.y > y0 && p.y < y1; }
  double lo(int axis) const { return axis == 0 ? x0 : y0; }
  double hi(int axis) const { return axis == 0 ? x1 : y1; }
};

inline constexpr std::size_t kEpisodeSteps = 500;
inline constexpr double kSuccessDistance = 5.0;

/// Static description of one task. Cell coordinates are cell centers in world units.
struct EnvSpec {
  EnvKind kind = EnvKind::maze;
  double cell_size = 8.0;
  std::vector<Vec2> free_cells;
  std::vector<Vec2> wall_cells;  // bounding box of free cells padded by one cell, minus free cells
  std::optional<Box> arena;      // outer bounds for the open arenas (gather, open)
  std::vector<Vec2> block_starts;
  std::optional<Box> chasm;  // Fall only: platform absent here
  Vector start;
  std::optional<Vector> fixed_target;
  std::optional<Vector> eval_target;
  std::optional<Box> target_sampling;  // Maze training targets

  // Point-mass dynamics.
  double max_accel = 1.0;
  double max_speed = 1.0;
  double drag = 0.95;
  double agent_radius = 0.75;
  double platform_z = 4.5;
  std::size_t episode_steps = kEpisodeSteps;

  // Gather.
  std::size_t apples = 8;
  std::size_t bombs = 8;
  double item_radius = 0.5;
  double start_clearance = 2.0;
  std::size_t nearest_items = 4;

  bool navigation() const { return kind == EnvKind::maze || kind == EnvKind::push || kind == EnvKind::fall; }
  std::size_t position_dims() const { return kind == EnvKind::fall ? 3 : 2; }
  std::size_t action_dims() const { return 2; }

  std::size_t observation_dims() const {
    const std::size_t p = position_dims();
    std::size_t n = 2 * p + 1;
    if (navigation()) n += p;
    n += 2 * block_starts.size();
    if (kind == EnvKind::gather) n += 3 * nearest_items;
    return n;
  }

  Vector action_low() const { return Vector::Constant(static_cast<Eigen::Index>(action_dims()), -max_accel); }
  Vector action_high() const { return Vector::Constant(static_cast<Eigen::Index>(action_dims()), max_accel); }

  // Goals live on the positional observations: (x, y), plus z for Fall.
  GoalSpace goal_space(double xy_range = 10.0, double z_range = 4.0) const {
    if (kind == EnvKind::fall) return GoalSpace({0, 1, 2}, Vector{{xy_range, xy_range, z_range}});
    return GoalSpace({0, 1}, Vector{{xy_range, xy_range}});
  }
};

namespace detail {

inline std::vector<Vec2> walls_around(const std::vector<Vec2>& free_cells, double cell) {
  double xmin = free_cells.front().x, xmax = xmin, ymin = free_cells.front().y, ymax = ymin;
  for (const auto& c : free_cells) {
    xmin = std::min(xmin, c.x);
    xmax = std::max(xmax, c.x);
    ymin = std::min(ymin, c.y);
    ymax = std::max(ymax, c.y);
  }
  std::vector<Vec2> walls;
  const int nx = static_cast<int>(std::lround((xmax - xmin) / cell)) + 3;
  const int ny = static_cast<int>(std::lround((ymax - ymin) / cell)) + 3;
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const Vec2 c{xmin + (i - 1) * cell, ymin + (j - 1) * cell};
      if (std::find(free_cells.begin(), free_cells.end(), c) == free_cells.end()) walls.push_back(c);
    }
  }
  return walls;
}

}  // namespace detail

inline EnvSpec make_spec(EnvKind kind) {
  EnvSpec s;
  s.kind = kind;
  switch (kind) {
    case EnvKind::maze:
      s.free_cells = {{0, 0}, {8, 0}, {16, 0}, {16, 8}, {16, 16}, {8, 16}, {0, 16}};
      s.start = Vector{{0.0, 0.0}};
      s.target_sampling = Box{-4, -4, 20, 20};
      s.eval_target = Vector{{0.0, 16.0}};
      break;
    case EnvKind::push:
      s.free_cells = {{0, 0}, {-8, 0}, {-8, 8}, {0, 8}, {8, 8}, {16, 8}, {0, 16}};
      s.block_starts = {{0, 8}};
      s.start = Vector{{0.0, 0.0}};
      s.fixed_target = Vector{{0.0, 19.0}};
      s.eval_target = s.fixed_target;
      break;
    case EnvKind::fall:
      // Platform cells at x in {0, 8}; the y = 16 row is the chasm.
      s.free_cells = {{0, 0}, {8, 0}, {0, 8}, {8, 8}, {0, 16}, {8, 16}, {0, 24}, {8, 24}};
      s.block_starts = {{8, 8}};
      s.chasm = Box{-4, 12, 12, 20};
      s.start = Vector{{0.0, 0.0, 4.5}};
      s.fixed_target = Vector{{0.0, 27.0, 4.5}};
      s.eval_target = s.fixed_target;
      break;
    case EnvKind::gather:
    case EnvKind::open:
      s.arena = Box{-10, -10, 10, 10};
      s.start = Vector{{0.0, 0.0}};
      break;
  }
  if (!s.free_cells.empty()) s.wall_cells = detail::walls_around(s.free_cells, s.cell_size);
  return s;
}

struct Item {
  Vec2 position;
  bool apple = true;
  bool collected = false;
};

struct EnvState {
  Vector agent_position;
  Vector agent_velocity;
  std::vector<Vec2> blocks;
  std::vector<bool> block_dropped;  // true once a block has fallen into the chasm
  Vector target;                    // empty for gather/open
  std::size_t step = 0;
  std::vector<Item> items;
  bool fallen = false;
};

struct StepResult {
  Vector next_observation;
  double reward = 0.0;
  bool terminal = false;
  bool success = false;
};

enum class ResetMode { train, eval };

inline Vector observe(const EnvState& st, const EnvSpec& spec) {
  std::vector<double> obs;
  obs.reserve(spec.observation_dims());
  for (Eigen::Index i = 0; i < st.agent_position.size(); ++i) obs.push_back(st.agent_position[i]);
  for (Eigen::Index i = 0; i < st.agent_velocity.size(); ++i) obs.push_back(st.agent_velocity[i]);
  obs.push_back(static_cast<double>(st.step) / static_cast<double>(spec.episode_steps));
  for (Eigen::Index i = 0; i < st.target.size(); ++i) obs.push_back(st.target[i]);
  for (const auto& b : st.blocks) {
    obs.push_back(b.x);
    obs.push_back(b.y);
  }
  if (spec.kind == EnvKind::gather) {
    std::vector<std::pair<double, std::size_t>> order;
    for (std::size_t i = 0; i < st.items.size(); ++i) {
      if (st.items[i].collected) continue;
      const double dx = st.items[i].position.x - st.agent_position[0];
      const double dy = st.items[i].position.y - st.agent_position[1];
      order.emplace_back(dx * dx + dy * dy, i);
    }
    std::sort(order.begin(), order.end());
    for (std::size_t k = 0; k < spec.nearest_items; ++k) {
      if (k < order.size()) {
        const auto& item = st.items[order[k].second];
        obs.push_back(item.position.x - st.agent_position[0]);
        obs.push_back(item.position.y - st.agent_position[1]);
        obs.push_back(item.apple ? 1.0 : -1.0);
      } else {
        obs.insert(obs.end(), {0.0, 0.0, 0.0});
      }
    }
  }
  return to_vector(obs);
}

inline std::pair<EnvState, Vector> reset(const EnvSpec& spec, Rng& rng, ResetMode mode = ResetMode::train) {
  EnvState st;
  st.agent_position = spec.start;
  st.agent_velocity = Vector::Zero(spec.start.size());
  st.blocks = spec.block_starts;
  st.block_dropped.assign(st.blocks.size(), false);
  if (mode == ResetMode::eval && spec.eval_target) {
    st.target = *spec.eval_target;
  } else if (spec.fixed_target) {
    st.target = *spec.fixed_target;
  } else if (spec.target_sampling) {
    const auto& box = *spec.target_sampling;
    const double gx = rng.uniform(box.x0, box.x1);
    const double gy = rng.uniform(box.y0, box.y1);
    st.target = Vector{{gx, gy}};
  }
  if (spec.kind == EnvKind::gather) {
    const Box& arena = *spec.arena;
    for (std::size_t i = 0; i < spec.apples + spec.bombs; ++i) {
      Vec2 p;
      do {
        p = {rng.uniform(arena.x0 + spec.item_radius, arena.x1 - spec.item_radius),
             rng.uniform(arena.y0 + spec.item_radius, arena.y1 - spec.item_radius)};
      } while (std::hypot(p.x - spec.start[0], p.y - spec.start[1]) < spec.start_clearance);
      st.items.push_back({p, i < spec.apples, false});
    }
  }
  Vector obs = observe(st, spec);
  return {std::move(st), std::move(obs)};
}

inline double distance_to_target(const EnvState& st) {
  if (st.target.size() == 0) return 0.0;
  return (st.target - st.agent_position.head(st.target.size())).norm();
}

// Success: final-step distance to the target strictly below 5.
inline bool success_of_episode(const Vector& final_position, const Vector& target) {
  return (target - final_position.head(target.size())).norm() < kSuccessDistance;
}

namespace detail {

inline Box block_box(const EnvSpec& spec, Vec2 b) { return Box::around(b, 0.5 * spec.cell_size); }

// Push the box back along the axis until it clears every static obstacle and the other blocks.
inline double resolve_axis(const EnvSpec& spec, const EnvState& st, Box box, int axis, double delta,
                           bool include_blocks, std::size_t skip_block) {
  double shift = 0.0;
  auto apply = [&](double s) {
    shift += s;
    if (axis == 0) {
      box.x0 += s;
      box.x1 += s;
    } else {
      box.y0 += s;
      box.y1 += s;
    }
  };
  auto clamp_to = [&](const Box& obstacle) {
    if (!box.overlaps(obstacle)) return;
    apply(delta > 0 ? obstacle.lo(axis) - box.hi(axis) : obstacle.hi(axis) - box.lo(axis));
  };
  for (const auto& w : spec.wall_cells) clamp_to(block_box(spec, w));
  if (include_blocks) {
    for (std::size_t i = 0; i < st.blocks.size(); ++i)
      if (i != skip_block && !st.block_dropped[i]) clamp_to(block_box(spec, st.blocks[i]));
  }
  if (spec.arena) {
    const Box& a = *spec.arena;
    if (box.lo(axis) < a.lo(axis)) apply(a.lo(axis) - box.lo(axis));
    if (box.hi(axis) > a.hi(axis)) apply(a.hi(axis) - box.hi(axis));
  }
  return shift;
}

inline double& coord(Vec2& v, int axis) { return axis == 0 ? v.x : v.y; }

inline void move_axis(const EnvSpec& spec, EnvState& st, int axis, double delta) {
  if (delta == 0.0) return;
  const double r = spec.agent_radius;
  auto agent_box = [&] { return Box::around({st.agent_position[0], st.agent_position[1]}, r); };
  constexpr auto kNone = static_cast<std::size_t>(-1);

  st.agent_position[axis] += delta;
  const double static_shift = resolve_axis(spec, st, agent_box(), axis, delta, false, kNone);
  if (static_shift != 0.0) {
    st.agent_position[axis] += static_shift;
    st.agent_velocity[axis] = 0.0;
  }

  for (std::size_t i = 0; i < st.blocks.size(); ++i) {
    if (st.block_dropped[i]) continue;
    const Box a = agent_box();
    Box b = block_box(spec, st.blocks[i]);
    if (!a.overlaps(b)) continue;
    // Slide the block by the penetration depth, then let walls and other blocks stop it.
    const double push = delta > 0 ? a.hi(axis) - b.lo(axis) : a.lo(axis) - b.hi(axis);
    coord(st.blocks[i], axis) += push;
    coord(st.blocks[i], axis) += resolve_axis(spec, st, block_box(spec, st.blocks[i]), axis, delta, true, i);
    b = block_box(spec, st.blocks[i]);
    if (agent_box().overlaps(b)) {
      st.agent_position[axis] = delta > 0 ? b.lo(axis) - r : b.hi(axis) + r;
      st.agent_velocity[axis] = 0.0;
    }
  }
}

inline void settle_chasm(const EnvSpec& spec, EnvState& st) {
  if (!spec.chasm) return;
  const Box& chasm = *spec.chasm;
  for (std::size_t i = 0; i < st.blocks.size(); ++i) {
    if (st.block_dropped[i] || !chasm.contains(st.blocks[i])) continue;
    // Drop into the chasm cell under the block's center; the top sits level with the platform.
    auto snap = [&](double v, double origin) {
      return origin + spec.cell_size * (std::floor((v - origin) / spec.cell_size) + 0.5);
    };
    st.blocks[i] = {snap(st.blocks[i].x, chasm.x0), snap(st.blocks[i].y, chasm.y0)};
    st.block_dropped[i] = true;
  }
  const Vec2 p{st.agent_position[0], st.agent_position[1]};
  if (st.fallen || !chasm.contains(p)) return;
  for (std::size_t i = 0; i < st.blocks.size(); ++i)
    if (st.block_dropped[i] && block_box(spec, st.blocks[i]).contains(p)) return;
  st.fallen = true;
  st.agent_position[2] = 0.0;
  st.agent_velocity.setZero();
}

}  // namespace detail

inline StepResult step(EnvState& st, const EnvSpec& spec, const Vector& action) {
  if (action.size() != static_cast<Eigen::Index>(spec.action_dims()))
    throw std::invalid_argument("step: action must have " + std::to_string(spec.action_dims()) + " entries");
  if (!action.allFinite()) throw std::invalid_argument("step: non-finite action");
  if (st.step >= spec.episode_steps) throw PreconditionError("step: episode already finished");

  const Vector accel = clip(action, spec.action_low(), spec.action_high());
  if (!st.fallen) {
    for (int axis = 0; axis < 2; ++axis) {
      st.agent_velocity[axis] =
          std::clamp(spec.drag * st.agent_velocity[axis] + accel[axis], -spec.max_speed, spec.max_speed);
    }
    for (int axis = 0; axis < 2; ++axis) detail::move_axis(spec, st, axis, st.agent_velocity[axis]);
    detail::settle_chasm(spec, st);
  }
  st.step += 1;

  StepResult result;
  if (spec.navigation()) {
    result.reward = -distance_to_target(st);
  } else if (spec.kind == EnvKind::gather) {
    const double reach = spec.agent_radius + spec.item_radius;
    for (auto& item : st.items) {
      if (item.collected) continue;
      if (std::hypot(item.position.x - st.agent_position[0], item.position.y - st.agent_position[1]) < reach) {
        item.collected = true;
        result.reward += item.apple ? 1.0 : -1.0;
      }
    }
  }
  result.terminal = st.step >= spec.episode_steps;
  result.success = result.terminal && spec.navigation() && success_of_episode(st.agent_position, st.target);
  result.next_observation = observe(st, spec);
  return result;
}

/// Stateful wrapper owning one episode.
class Environment {
 public:
  explicit Environment(EnvSpec spec) : spec_(std::move(spec)) {}

  const EnvSpec& spec() const { return spec_; }
  const EnvState& state() const { return state_; }
  EnvState& state() { return state_; }

  Vector reset(Rng& rng, ResetMode mode = ResetMode::train) {
    auto [st, obs] = env::reset(spec_, rng, mode);
    state_ = std::move(st);
    return obs;
  }

  StepResult step(const Vector& action) { return env::step(state_, spec_, action); }

 private:
  EnvSpec spec_;
  EnvState state_;
};

struct TrajectoryStep {
  std::size_t step = 0;
  Vector position;
  Vector action;
  double reward = 0.0;
};

// One JSON object per line: {"step", "position", "action", "reward"}.
inline void write_trajectory_jsonl(std::ostream& os, const std::vector<TrajectoryStep>& steps) {
  for (const auto& s : steps) {
    nlohmann::json line;
    line["step"] = s.step;
    line["position"] = to_std(s.position);
    line["action"] = to_std(s.action);
    line["reward"] = s.reward;
    os << line.dump() << '\n';
  }
}

}  // namespace hiro::env
