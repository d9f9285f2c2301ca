#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "cops/common.hpp"
#include "cops/theory/divergence.hpp"

namespace cops::theory {

// How a trajectory prefix is summarized for conditional tables.
//   kCounts: multiset of (state, action) cells. Sufficient for the task
//     posterior in these worlds (the context algorithm is task-independent,
//     so its factors cancel), and it keeps tables finite at any horizon.
//   kFullSequence: the exact prefix; only viable for short horizons.
enum class FeatureMode { kCounts, kFullSequence };

struct StepRecord {
  int state = 0;
  int action = 0;
  double reward = 0.0;

  friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

using Trajectory = std::vector<StepRecord>;

struct TableKey {
  std::uint64_t feature = 0;
  int state = 0;

  friend bool operator==(const TableKey&, const TableKey&) = default;
};

struct TableKeyHash {
  std::size_t operator()(const TableKey& k) const {
    std::uint64_t h = k.feature * 0x9e3779b97f4a7c15ull + static_cast<std::uint64_t>(k.state);
    h ^= h >> 29;
    h *= 0xbf58476d1ce4e5b9ull;
    return static_cast<std::size_t>(h ^ (h >> 32));
  }
};

// Conditional action table keyed by (history feature, state). A memoryless
// table ignores the feature.
struct PolicyTable {
  bool memoryless = false;
  std::unordered_map<TableKey, Dist, TableKeyHash> rows;

  const Dist& row(std::uint64_t feature, int state) const {
    auto it = rows.find(TableKey{memoryless ? 0 : feature, state});
    if (it == rows.end()) throw Error("PolicyTable: missing row");
    return it->second;
  }
};

inline constexpr std::size_t kMaxTrajectoryEntries = 250000;

// Finite task/state/action spaces with priors, a reward table, a
// task-independent context algorithm and per-task expert algorithms.
struct TabularWorld {
  int n_tasks = 1;
  int n_states = 2;
  int n_actions = 2;
  int horizon = 3;  // T; experience collections have length <= T-1
  FeatureMode feature_mode = FeatureMode::kCounts;
  Dist task_prior;                          // over tasks
  std::vector<Dist> initial_state;          // [task] -> dist over states
  std::vector<std::vector<double>> reward;  // [state][action] in [0,1]
  PolicyTable context_alg;                  // task-independent
  std::vector<PolicyTable> expert_alg;      // [task]

  int n_cells() const { return n_states * n_actions; }
  int cell_of(int state, int action) const { return state * n_actions + action; }

  std::uint64_t feature_of(const Trajectory& prefix) const {
    if (feature_mode == FeatureMode::kCounts) {
      if (n_cells() > 10) throw Error("feature_of: too many cells for packed counts");
      std::uint64_t packed = 0;
      for (const StepRecord& step : prefix) {
        packed += std::uint64_t{1} << (6 * cell_of(step.state, step.action));
      }
      return packed;
    }
    std::uint64_t code = 0;
    const std::uint64_t base = static_cast<std::uint64_t>(n_cells()) + 1;
    for (auto it = prefix.rbegin(); it != prefix.rend(); ++it) {
      code = code * base + static_cast<std::uint64_t>(cell_of(it->state, it->action)) + 1;
    }
    return code;
  }

  void validate() const {
    check_distribution(task_prior, "task_prior");
    if (static_cast<int>(task_prior.size()) != n_tasks) throw Error("world: prior size");
    if (static_cast<int>(initial_state.size()) != n_tasks) throw Error("world: P0 size");
    for (const Dist& p0 : initial_state) {
      check_distribution(p0, "initial_state");
      if (static_cast<int>(p0.size()) != n_states) throw Error("world: P0 row size");
    }
    if (static_cast<int>(reward.size()) != n_states) throw Error("world: reward rows");
    for (const auto& row : reward) {
      if (static_cast<int>(row.size()) != n_actions) throw Error("world: reward cols");
      for (double r : row) {
        if (!(r >= 0.0 && r <= 1.0)) throw Error("world: reward outside [0,1]");
      }
    }
    if (static_cast<int>(expert_alg.size()) != n_tasks) throw Error("world: expert count");
  }
};

// Task-independent view of an algorithm: maps (prefix, state) to a
// distribution over actions.
class ActionPolicy {
 public:
  virtual ~ActionPolicy() = default;
  virtual Dist action_dist(const TabularWorld& w, const Trajectory& prefix, int state) const = 0;
};

class ContextPolicy final : public ActionPolicy {
 public:
  Dist action_dist(const TabularWorld& w, const Trajectory& prefix, int state) const override {
    return w.context_alg.row(w.feature_of(prefix), state);
  }
};

class ExpertPolicy final : public ActionPolicy {
 public:
  explicit ExpertPolicy(int task) : task_(task) {}
  Dist action_dist(const TabularWorld& w, const Trajectory& prefix, int state) const override {
    return w.expert_alg.at(static_cast<std::size_t>(task_)).row(w.feature_of(prefix), state);
  }

 private:
  int task_;
};

// Posterior over tasks given an observed trajectory and current state:
//   P(m | T, s) proportional to prior(m) * P^{m,AlgC}(T) * P0^m(s).
// The context-algorithm factors are shared across tasks but kept for
// fidelity to the conditioning measure.
inline Dist posterior_over_tasks(const TabularWorld& w, const Trajectory& trajectory, int state) {
  Dist weights(static_cast<std::size_t>(w.n_tasks), 0.0);
  for (int m = 0; m < w.n_tasks; ++m) {
    double p = w.task_prior[static_cast<std::size_t>(m)];
    Trajectory prefix;
    for (const StepRecord& step : trajectory) {
      p *= w.initial_state[static_cast<std::size_t>(m)][static_cast<std::size_t>(step.state)];
      p *= w.context_alg.row(w.feature_of(prefix), step.state)[static_cast<std::size_t>(step.action)];
      prefix.push_back(step);
    }
    p *= w.initial_state[static_cast<std::size_t>(m)][static_cast<std::size_t>(state)];
    weights[static_cast<std::size_t>(m)] = p;
  }
  double total = 0.0;
  for (double v : weights) total += v;
  if (total < kProbFloor) {
    throw Error("posterior_over_tasks: trajectory has zero probability under every task");
  }
  for (double& v : weights) v /= total;
  return weights;
}

// Posterior-weighted mixture of a per-task algorithm's rows.
inline Dist posterior_average(const TabularWorld& w,
                              const std::function<Dist(int task)>& per_task_row,
                              const Dist& posterior) {
  Dist out;
  for (int m = 0; m < w.n_tasks; ++m) {
    Dist row = per_task_row(m);
    if (out.empty()) out.assign(row.size(), 0.0);
    for (std::size_t a = 0; a < row.size(); ++a) {
      out[a] += posterior[static_cast<std::size_t>(m)] * row[a];
    }
  }
  return out;
}

inline Dist posterior_average_expert(const TabularWorld& w, const Trajectory& trajectory,
                                     int state) {
  Dist posterior = posterior_over_tasks(w, trajectory, state);
  std::uint64_t feature = w.feature_of(trajectory);
  return posterior_average(
      w,
      [&](int task) {
        return w.expert_alg[static_cast<std::size_t>(task)].row(feature, state);
      },
      posterior);
}

// overline{Alg^E} as a task-independent policy.
class PosteriorExpertPolicy final : public ActionPolicy {
 public:
  Dist action_dist(const TabularWorld& w, const Trajectory& prefix, int state) const override {
    return posterior_average_expert(w, prefix, state);
  }
};

// Explicit distribution over the trajectory space of a fixed length. Entries
// are indexed by the mixed-radix cell sequence (first step is the least
// significant digit).
struct TrajectoryDist {
  int length = 0;
  Dist probs;
};

inline std::size_t trajectory_space_size(const TabularWorld& w, int length) {
  std::size_t size = 1;
  for (int i = 0; i < length; ++i) {
    size *= static_cast<std::size_t>(w.n_cells());
    if (size > kMaxTrajectoryEntries) {
      throw Error("trajectory space too large to enumerate");
    }
  }
  return size;
}

inline Trajectory decode_trajectory(const TabularWorld& w, int length, std::size_t index) {
  Trajectory traj;
  traj.reserve(static_cast<std::size_t>(length));
  for (int i = 0; i < length; ++i) {
    int cell = static_cast<int>(index % static_cast<std::size_t>(w.n_cells()));
    index /= static_cast<std::size_t>(w.n_cells());
    int state = cell / w.n_actions;
    int action = cell % w.n_actions;
    traj.push_back(
        StepRecord{state, action, w.reward[static_cast<std::size_t>(state)][static_cast<std::size_t>(action)]});
  }
  return traj;
}

// Exact P^{task,Alg}_t by enumeration of the generative process:
// s_i ~ P0^task, a_i ~ alg(.|prefix, s_i), r_i = r(s_i, a_i).
inline TrajectoryDist trajectory_dist(const TabularWorld& w, const ActionPolicy& alg, int length,
                                      int task) {
  TrajectoryDist out;
  out.length = length;
  out.probs.assign(trajectory_space_size(w, length), 0.0);
  const Dist& p0 = w.initial_state.at(static_cast<std::size_t>(task));

  Trajectory prefix;
  std::function<void(int, std::size_t, std::size_t, double)> recurse =
      [&](int depth, std::size_t index, std::size_t stride, double prob) {
        if (depth == length) {
          out.probs[index] += prob;
          return;
        }
        for (int s = 0; s < w.n_states; ++s) {
          double ps = p0[static_cast<std::size_t>(s)];
          if (ps <= 0.0) continue;
          Dist action_row = alg.action_dist(w, prefix, s);
          for (int a = 0; a < w.n_actions; ++a) {
            double pa = action_row[static_cast<std::size_t>(a)];
            if (pa <= 0.0) continue;
            int cell = w.cell_of(s, a);
            prefix.push_back(StepRecord{
                s, a, w.reward[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)]});
            recurse(depth + 1, index + stride * static_cast<std::size_t>(cell),
                    stride * static_cast<std::size_t>(w.n_cells()), prob * ps * pa);
            prefix.pop_back();
          }
        }
      };
  recurse(0, 0, 1, 1.0);
  return out;
}

// Prior- (or posterior-) weighted mixture of per-task trajectory
// distributions.
inline TrajectoryDist mixture_trajectory_dist(const TabularWorld& w, const ActionPolicy& alg,
                                              int length, const Dist& task_weights) {
  TrajectoryDist out;
  out.length = length;
  out.probs.assign(trajectory_space_size(w, length), 0.0);
  for (int m = 0; m < w.n_tasks; ++m) {
    double wm = task_weights.at(static_cast<std::size_t>(m));
    if (wm <= 0.0) continue;
    TrajectoryDist per_task = trajectory_dist(w, alg, length, m);
    for (std::size_t i = 0; i < out.probs.size(); ++i) out.probs[i] += wm * per_task.probs[i];
  }
  return out;
}

// Posterior over tasks given only the current state.
inline Dist state_posterior(const TabularWorld& w, int state) {
  Dist weights(static_cast<std::size_t>(w.n_tasks), 0.0);
  double total = 0.0;
  for (int m = 0; m < w.n_tasks; ++m) {
    double p = w.task_prior[static_cast<std::size_t>(m)] *
               w.initial_state[static_cast<std::size_t>(m)][static_cast<std::size_t>(state)];
    weights[static_cast<std::size_t>(m)] = p;
    total += p;
  }
  if (total < kProbFloor) throw Error("state_posterior: state unreachable under every task");
  for (double& v : weights) v /= total;
  return weights;
}

// Marginal probability of observing a given initial state.
inline double state_marginal(const TabularWorld& w, int state) {
  double p = 0.0;
  for (int m = 0; m < w.n_tasks; ++m) {
    p += w.task_prior[static_cast<std::size_t>(m)] *
         w.initial_state[static_cast<std::size_t>(m)][static_cast<std::size_t>(state)];
  }
  return p;
}

// All history features reachable within `max_length` steps, in a
// deterministic order (used when building random tables).
inline std::vector<std::uint64_t> enumerate_features(const TabularWorld& w, int max_length) {
  std::vector<std::uint64_t> features;
  if (w.feature_mode == FeatureMode::kCounts) {
    std::vector<int> counts(static_cast<std::size_t>(w.n_cells()), 0);
    std::function<void(int, int)> fill = [&](int cell, int remaining) {
      if (cell == w.n_cells()) {
        std::uint64_t packed = 0;
        for (int c = 0; c < w.n_cells(); ++c) {
          packed += static_cast<std::uint64_t>(counts[static_cast<std::size_t>(c)]) << (6 * c);
        }
        features.push_back(packed);
        return;
      }
      for (int n = 0; n <= remaining; ++n) {
        counts[static_cast<std::size_t>(cell)] = n;
        fill(cell + 1, remaining - n);
      }
      counts[static_cast<std::size_t>(cell)] = 0;
    };
    fill(0, max_length);
  } else {
    for (int len = 0; len <= max_length; ++len) {
      std::size_t space = trajectory_space_size(w, len);
      for (std::size_t i = 0; i < space; ++i) {
        features.push_back(w.feature_of(decode_trajectory(w, len, i)));
      }
    }
  }
  return features;
}

struct RandomWorldConfig {
  int n_tasks = 2;
  int n_states = 2;
  int n_actions = 2;
  int horizon = 3;
  bool memoryless = false;
  FeatureMode feature_mode = FeatureMode::kCounts;
  double min_weight = 0.25;  // pre-normalization floor; keeps supports full
};

inline Dist random_dist(Rng& rng, int n, double min_weight) {
  Dist d(static_cast<std::size_t>(n), 0.0);
  for (double& v : d) v = min_weight + uniform_double(rng);
  return normalized(std::move(d));
}

inline TabularWorld random_world(const RandomWorldConfig& cfg, Rng& rng) {
  TabularWorld w;
  w.n_tasks = cfg.n_tasks;
  w.n_states = cfg.n_states;
  w.n_actions = cfg.n_actions;
  w.horizon = cfg.horizon;
  w.feature_mode = cfg.feature_mode;
  w.task_prior = random_dist(rng, cfg.n_tasks, cfg.min_weight);
  for (int m = 0; m < cfg.n_tasks; ++m) {
    w.initial_state.push_back(random_dist(rng, cfg.n_states, cfg.min_weight));
  }
  for (int s = 0; s < cfg.n_states; ++s) {
    std::vector<double> row;
    for (int a = 0; a < cfg.n_actions; ++a) row.push_back(uniform_double(rng));
    w.reward.push_back(std::move(row));
  }
  std::vector<std::uint64_t> features =
      cfg.memoryless ? std::vector<std::uint64_t>{0} : enumerate_features(w, cfg.horizon - 1);
  auto fill_table = [&](PolicyTable& table) {
    table.memoryless = cfg.memoryless;
    for (std::uint64_t feature : features) {
      for (int s = 0; s < cfg.n_states; ++s) {
        table.rows.emplace(TableKey{feature, s}, random_dist(rng, cfg.n_actions, cfg.min_weight));
      }
    }
  };
  fill_table(w.context_alg);
  w.expert_alg.resize(static_cast<std::size_t>(cfg.n_tasks));
  for (int m = 0; m < cfg.n_tasks; ++m) fill_table(w.expert_alg[static_cast<std::size_t>(m)]);
  w.validate();
  return w;
}

}  // namespace cops::theory
