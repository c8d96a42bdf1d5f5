#pragma once

#include "hiro/common.hpp"
#include "hiro/rng.hpp"

#include <cstddef>
#include <istream>
#include <optional>
#include <ostream>
#include <vector>

namespace hiro {

// One lower-level step: (s, g, a, r, s', h(s, g, s')).
struct LowTransition {
  Vector state;
  Vector goal;
  Vector action;
  double intrinsic_reward = 0.0;
  Vector next_state;
  Vector next_goal;
  bool terminal = false;
};

// Up to c lower-level steps executed under one high-level decision.
struct HighSegment {
  std::vector<Vector> states;   // s_t .. s_{t+k-1}
  Vector original_goal;         // g_t
  std::vector<Vector> actions;  // a_t .. a_{t+k-1}
  double env_reward_sum = 0.0;  // unscaled
  Vector final_state;           // s_{t+k}
  bool terminal = false;
  double behavior_sigma = 0.0;  // lower-level exploration sigma at collection time
  // Per-step log-density of the executed action under the collection-time
  // lower policy, constant dropped. Empty when not recorded.
  std::vector<double> behavior_log_probs;

  std::size_t length() const { return states.size(); }
};

/// Fixed-capacity FIFO store. Index 0 is the oldest live entry.
template <typename T>
class RingBuffer {
 public:
  static constexpr std::size_t kDefaultCapacity = 200'000;

  explicit RingBuffer(std::size_t capacity = kDefaultCapacity) : capacity_(capacity) {
    if (capacity_ == 0) throw std::invalid_argument("RingBuffer: capacity must be positive");
  }

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return entries_.size() < capacity_ ? entries_.size() : capacity_; }
  bool empty() const { return entries_.empty(); }
  bool full() const { return entries_.size() == capacity_; }

  void insert(T item) {
    if (entries_.size() < capacity_) {
      entries_.push_back(std::move(item));
    } else {
      entries_[cursor_] = std::move(item);
    }
    cursor_ = (cursor_ + 1) % capacity_;
  }

  const T& operator[](std::size_t i) const { return entries_[physical(i)]; }

  // Uniform with replacement.
  std::vector<std::size_t> sample_indices(std::size_t batch, Rng& rng) const {
    if (empty()) throw PreconditionError("RingBuffer::sample: buffer is empty");
    std::vector<std::size_t> idx(batch);
    for (auto& i : idx) i = static_cast<std::size_t>(rng.below(size()));
    return idx;
  }

  std::vector<T> sample(std::size_t batch, Rng& rng) const {
    std::vector<T> out;
    out.reserve(batch);
    for (auto i : sample_indices(batch, rng)) out.push_back((*this)[i]);
    return out;
  }

  void clear() {
    entries_.clear();
    cursor_ = 0;
  }

 private:
  std::size_t physical(std::size_t i) const {
    if (i >= size()) throw std::out_of_range("RingBuffer index out of range");
    return full() ? (cursor_ + i) % capacity_ : i;
  }

  std::size_t capacity_;
  std::vector<T> entries_;
  std::size_t cursor_ = 0;
};

namespace detail {

inline void write_item(std::ostream& os, const LowTransition& t) {
  binio::write_vector(os, t.state);
  binio::write_vector(os, t.goal);
  binio::write_vector(os, t.action);
  binio::write_f64(os, t.intrinsic_reward);
  binio::write_vector(os, t.next_state);
  binio::write_vector(os, t.next_goal);
  binio::write_u64(os, t.terminal ? 1 : 0);
}

inline void read_item(std::istream& is, LowTransition& t) {
  t.state = binio::read_vector(is);
  t.goal = binio::read_vector(is);
  t.action = binio::read_vector(is);
  t.intrinsic_reward = binio::read_f64(is);
  t.next_state = binio::read_vector(is);
  t.next_goal = binio::read_vector(is);
  t.terminal = binio::read_u64(is) != 0;
}

inline void write_item(std::ostream& os, const HighSegment& s) {
  binio::write_u64(os, s.states.size());
  for (const auto& v : s.states) binio::write_vector(os, v);
  binio::write_vector(os, s.original_goal);
  binio::write_u64(os, s.actions.size());
  for (const auto& v : s.actions) binio::write_vector(os, v);
  binio::write_f64(os, s.env_reward_sum);
  binio::write_vector(os, s.final_state);
  binio::write_u64(os, s.terminal ? 1 : 0);
  binio::write_f64(os, s.behavior_sigma);
  binio::write_u64(os, s.behavior_log_probs.size());
  for (double lp : s.behavior_log_probs) binio::write_f64(os, lp);
}

inline void read_item(std::istream& is, HighSegment& s) {
  auto read_list = [&is](std::vector<Vector>& out) {
    const auto n = binio::read_u64(is);
    if (n > (1u << 20)) throw FormatError("segment length out of range");
    out.resize(n);
    for (auto& v : out) v = binio::read_vector(is);
  };
  read_list(s.states);
  s.original_goal = binio::read_vector(is);
  read_list(s.actions);
  s.env_reward_sum = binio::read_f64(is);
  s.final_state = binio::read_vector(is);
  s.terminal = binio::read_u64(is) != 0;
  s.behavior_sigma = binio::read_f64(is);
  const auto n = binio::read_u64(is);
  if (n > (1u << 20)) throw FormatError("segment length out of range");
  s.behavior_log_probs.resize(n);
  for (auto& lp : s.behavior_log_probs) lp = binio::read_f64(is);
}

}  // namespace detail

inline constexpr std::string_view kBufferMagic = "HIROBUF1";

// Layout: "HIROBUF1", u64 capacity, u64 size, then entries oldest first.
template <typename T>
void save_buffer(std::ostream& os, const RingBuffer<T>& buffer) {
  binio::write_magic(os, kBufferMagic);
  binio::write_u64(os, buffer.capacity());
  binio::write_u64(os, buffer.size());
  for (std::size_t i = 0; i < buffer.size(); ++i) detail::write_item(os, buffer[i]);
}

template <typename T>
RingBuffer<T> load_buffer(std::istream& is) {
  binio::expect_magic(is, kBufferMagic);
  const auto capacity = binio::read_u64(is);
  const auto size = binio::read_u64(is);
  if (capacity == 0 || size > capacity) throw FormatError("buffer snapshot has inconsistent counts");
  RingBuffer<T> buffer(capacity);
  for (std::uint64_t i = 0; i < size; ++i) {
    T item;
    detail::read_item(is, item);
    buffer.insert(std::move(item));
  }
  return buffer;
}

}  // namespace hiro
