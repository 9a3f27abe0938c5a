#pragma once

// Episode-grouped replay storage with hindsight goal relabeling. Episodes
// are kept whole — eviction removes the oldest episode in full — so every
// "future achieved state" lookup stays valid for the lifetime of the data.

#include <cstdint>
#include <cstring>
#include <deque>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "stagerl/dynamics.hpp"
#include "stagerl/errors.hpp"
#include "stagerl/rng.hpp"
#include "stagerl/sac.hpp"

namespace stagerl {

struct Transition {
  Observation obs;
  Action action;
  double reward = 0.0;
  Observation next_obs;
  RobotState achieved_state;  // true pose after the step, noise-free
  Goal goal;
  bool done = false;
  bool success = false;
  // Command executed on the previous step (zero at episode start); needed to
  // recompute the smoothness term when rewards are relabeled.
  Action prev_action;
};

using Episode = std::vector<Transition>;

// Recomputes success, reward, and termination for a transition as if the
// environment had been asked about `goal` at tolerances `tol`. This is the
// single reward/success authority used for hindsight relabeling and for
// re-grading stored rewards after a curriculum change. The observation goal
// halves are re-encoded to match.
inline void regrade_transition(Transition& t, const Goal& goal, const Tolerances& tol,
                               const RewardWeights& weights, double r_max) {
  t.goal = goal;
  t.success = at_goal(t.achieved_state, goal, tol);
  t.reward = step_reward(t.action, t.prev_action, t.success, weights);
  t.done = t.success;
  encode_goal(t.obs, goal, r_max);
  encode_goal(t.next_obs, goal, r_max);
}

// "Future"-strategy hindsight relabeling: returns, for every transition, the
// original followed by k copies whose goal is the achieved state of a
// uniformly chosen step at the same or a later index in the episode.
inline Episode her_relabel(const Episode& episode, int k, const Tolerances& tol,
                           const RewardWeights& weights, double r_max, Rng& rng) {
  if (k < 0) throw InvalidInput("her_relabel: k must be non-negative");
  Episode out;
  out.reserve(episode.size() * (1 + static_cast<std::size_t>(k)));
  const std::size_t n = episode.size();
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(episode[i]);
    for (int c = 0; c < k; ++c) {
      const std::size_t j = i + rng.uniform_index(n - i);
      Transition relabeled = episode[i];
      regrade_transition(relabeled, goal_from_state(episode[j].achieved_state), tol, weights,
                         r_max);
      out.push_back(std::move(relabeled));
    }
  }
  return out;
}

class ReplayBuffer {
 public:
  explicit ReplayBuffer(long capacity) : capacity_(capacity) {
    if (capacity <= 0) throw InvalidInput("replay: capacity must be positive");
  }

  long capacity() const { return capacity_; }
  long size() const { return size_; }
  std::size_t episode_count() const { return episodes_.size(); }
  bool ready(long n) const { return size_ >= n; }

  // Stores one finished episode, evicting the oldest whole episodes first if
  // the capacity would be exceeded.
  void push_episode(Episode episode) {
    if (episode.empty()) throw InvalidInput("replay: episode must be non-empty");
    if (static_cast<long>(episode.size()) > capacity_)
      throw InvalidInput("replay: episode longer than buffer capacity");
    for (std::size_t i = 0; i < episode.size(); ++i) {
      const bool last = (i + 1 == episode.size());
      if (episode[i].done != last)
        throw InvalidInput("replay: done must be set on exactly the final transition");
      if (!(episode[i].reward <= 0.0))
        throw InvalidInput("replay: rewards must be non-positive");
    }
    while (size_ + static_cast<long>(episode.size()) > capacity_) {
      size_ -= static_cast<long>(episodes_.front().size());
      episodes_.pop_front();
    }
    size_ += static_cast<long>(episode.size());
    episodes_.push_back(std::move(episode));
    rebuild_cumulative();
  }

  // Uniform with replacement over all stored transitions.
  std::vector<Transition> sample(long n, Rng& rng) const {
    if (!ready(n)) throw StateError("replay: fewer stored transitions than requested");
    std::vector<Transition> batch;
    batch.reserve(static_cast<std::size_t>(n));
    for (long s = 0; s < n; ++s) {
      auto [e, i] = locate(static_cast<long>(rng.uniform_index(static_cast<std::size_t>(size_))));
      batch.push_back(episodes_[e][i]);
    }
    return batch;
  }

  // Assembles a training batch: each drawn transition is hindsight-relabeled
  // with probability k/(k+1) (goal := achieved state of a same-or-later step
  // of its episode), and every sample — relabeled or not — is re-graded at
  // the current tolerances so the learning signal always matches the present
  // curriculum stage.
  SacBatch sample_training(long n, int her_k, const Tolerances& tol,
                           const RewardWeights& weights, double r_max, Rng& rng) const {
    if (!ready(n)) throw StateError("replay: fewer stored transitions than requested");
    if (her_k < 0) throw InvalidInput("replay: her_k must be non-negative");
    SacBatch b;
    b.obs.resize(kObsDim, n);
    b.actions.resize(kActionDim, n);
    b.rewards.resize(n);
    b.next_obs.resize(kObsDim, n);
    b.dones.resize(n);
    const double p_relabel =
        static_cast<double>(her_k) / (static_cast<double>(her_k) + 1.0);
    for (long s = 0; s < n; ++s) {
      auto [e, i] = locate(static_cast<long>(rng.uniform_index(static_cast<std::size_t>(size_))));
      const Episode& ep = episodes_[e];
      Transition t = ep[i];
      Goal goal = t.goal;
      if (her_k > 0 && rng.uniform01() < p_relabel) {
        const std::size_t j = i + rng.uniform_index(ep.size() - i);
        goal = goal_from_state(ep[j].achieved_state);
      }
      regrade_transition(t, goal, tol, weights, r_max);
      b.obs.col(s) = t.obs;
      b.actions.col(s) = t.action.vec();
      b.rewards[s] = t.reward;
      b.next_obs.col(s) = t.next_obs;
      b.dones[s] = t.done ? 1.0 : 0.0;
    }
    return b;
  }

  const std::deque<Episode>& episodes() const { return episodes_; }

  // ------------------------------------------------------------------
  // Snapshot for resumable training: versioned binary container carrying
  // every stored episode plus a caller-supplied RNG state string.

  void save_snapshot(const std::string& path, const std::string& rng_state) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidInput("replay: cannot open " + path + " for writing");
    const char magic[4] = {'S', 'R', 'L', 'B'};
    out.write(magic, 4);
    write_u64(out, kSnapshotVersion);
    write_u64(out, static_cast<std::uint64_t>(capacity_));
    write_u64(out, static_cast<std::uint64_t>(rng_state.size()));
    out.write(rng_state.data(), static_cast<std::streamsize>(rng_state.size()));
    write_u64(out, static_cast<std::uint64_t>(episodes_.size()));
    for (const auto& ep : episodes_) {
      write_u64(out, static_cast<std::uint64_t>(ep.size()));
      for (const Transition& t : ep) write_transition(out, t);
    }
    if (!out) throw InvalidInput("replay: failed writing " + path);
  }

  struct Snapshot;
  static Snapshot load_snapshot(const std::string& path);

 private:
  static constexpr std::uint64_t kSnapshotVersion = 1;

  void rebuild_cumulative() {
    cumulative_.clear();
    cumulative_.reserve(episodes_.size());
    long acc = 0;
    for (const auto& ep : episodes_) {
      acc += static_cast<long>(ep.size());
      cumulative_.push_back(acc);
    }
  }

  // Maps a flat index in [0, size) to (episode, step-within-episode).
  std::pair<std::size_t, std::size_t> locate(long flat) const {
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), flat);
    const std::size_t e = static_cast<std::size_t>(it - cumulative_.begin());
    const long before = (e == 0) ? 0 : cumulative_[e - 1];
    return {e, static_cast<std::size_t>(flat - before)};
  }

  static void write_u64(std::ostream& out, std::uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
  }
  static std::uint64_t read_u64(std::istream& in) {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
  }
  static void write_doubles(std::ostream& out, const double* p, std::size_t n) {
    out.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
  }
  static void read_doubles(std::istream& in, double* p, std::size_t n) {
    in.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
  }

  static void write_transition(std::ostream& out, const Transition& t) {
    write_doubles(out, t.obs.data(), kObsDim);
    const double a[3] = {t.action.ax, t.action.ay, t.action.atheta};
    write_doubles(out, a, 3);
    write_doubles(out, &t.reward, 1);
    write_doubles(out, t.next_obs.data(), kObsDim);
    const double s[3] = {t.achieved_state.x, t.achieved_state.y, t.achieved_state.theta};
    write_doubles(out, s, 3);
    const double g[3] = {t.goal.x, t.goal.y, t.goal.theta};
    write_doubles(out, g, 3);
    const double p[3] = {t.prev_action.ax, t.prev_action.ay, t.prev_action.atheta};
    write_doubles(out, p, 3);
    const char flags[2] = {t.done ? char(1) : char(0), t.success ? char(1) : char(0)};
    out.write(flags, 2);
  }

  static void read_transition(std::istream& in, Transition& t) {
    read_doubles(in, t.obs.data(), kObsDim);
    double a[3];
    read_doubles(in, a, 3);
    t.action = {a[0], a[1], a[2]};
    read_doubles(in, &t.reward, 1);
    read_doubles(in, t.next_obs.data(), kObsDim);
    double s[3];
    read_doubles(in, s, 3);
    t.achieved_state = {s[0], s[1], s[2]};
    double g[3];
    read_doubles(in, g, 3);
    t.goal = {g[0], g[1], g[2]};
    double p[3];
    read_doubles(in, p, 3);
    t.prev_action = {p[0], p[1], p[2]};
    char flags[2];
    in.read(flags, 2);
    t.done = flags[0] != 0;
    t.success = flags[1] != 0;
  }

  long capacity_;
  long size_ = 0;
  std::deque<Episode> episodes_;
  std::vector<long> cumulative_;
};

struct ReplayBuffer::Snapshot {
  ReplayBuffer buffer;
  std::string rng_state;
};

inline ReplayBuffer::Snapshot ReplayBuffer::load_snapshot(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("replay: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "SRLB", 4) != 0)
    throw ConfigError("replay: " + path + " is not a buffer snapshot");
  if (read_u64(in) != kSnapshotVersion)
    throw ConfigError("replay: unsupported snapshot version in " + path);
  const long capacity = static_cast<long>(read_u64(in));
  Snapshot snap{ReplayBuffer(capacity), {}};
  snap.rng_state.resize(read_u64(in));
  in.read(snap.rng_state.data(), static_cast<std::streamsize>(snap.rng_state.size()));
  const std::uint64_t n_eps = read_u64(in);
  for (std::uint64_t e = 0; e < n_eps; ++e) {
    Episode ep(read_u64(in));
    for (Transition& t : ep) read_transition(in, t);
    if (!in) throw ConfigError("replay: truncated snapshot " + path);
    snap.buffer.push_episode(std::move(ep));
  }
  return snap;
}

}  // namespace stagerl
