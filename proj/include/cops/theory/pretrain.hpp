#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "cops/common.hpp"
#include "cops/theory/divergence.hpp"
#include "cops/theory/world.hpp"

namespace cops::theory {

inline std::vector<int> counts_from_feature(const TabularWorld& w, std::uint64_t feature) {
  std::vector<int> counts(static_cast<std::size_t>(w.n_cells()), 0);
  for (int c = 0; c < w.n_cells(); ++c) {
    counts[static_cast<std::size_t>(c)] = static_cast<int>((feature >> (6 * c)) & 0x3f);
  }
  return counts;
}

inline Trajectory trajectory_from_feature(const TabularWorld& w, std::uint64_t feature) {
  Trajectory traj;
  const std::uint64_t base = static_cast<std::uint64_t>(w.n_cells()) + 1;
  while (feature != 0) {
    int cell = static_cast<int>(feature % base) - 1;
    feature /= base;
    int state = cell / w.n_actions;
    int action = cell % w.n_actions;
    traj.push_back(StepRecord{
        state, action,
        w.reward[static_cast<std::size_t>(state)][static_cast<std::size_t>(action)]});
  }
  return traj;
}

// Task posterior given only a history feature and the current state. In
// counts mode the context-algorithm factors are identical across tasks and
// cancel, so state counts are sufficient.
inline Dist posterior_from_feature(const TabularWorld& w, std::uint64_t feature, int state) {
  if (w.feature_mode == FeatureMode::kFullSequence) {
    return posterior_over_tasks(w, trajectory_from_feature(w, feature), state);
  }
  std::vector<int> counts = counts_from_feature(w, feature);
  std::vector<double> log_weights(static_cast<std::size_t>(w.n_tasks), 0.0);
  for (int m = 0; m < w.n_tasks; ++m) {
    double lw = std::log(w.task_prior[static_cast<std::size_t>(m)]);
    for (int s = 0; s < w.n_states; ++s) {
      int n_s = 0;
      for (int a = 0; a < w.n_actions; ++a) n_s += counts[static_cast<std::size_t>(w.cell_of(s, a))];
      if (n_s > 0) {
        double p0 = w.initial_state[static_cast<std::size_t>(m)][static_cast<std::size_t>(s)];
        if (p0 < kProbFloor) {
          lw = -std::numeric_limits<double>::infinity();
          break;
        }
        lw += n_s * std::log(p0);
      }
    }
    double p_state = w.initial_state[static_cast<std::size_t>(m)][static_cast<std::size_t>(state)];
    lw += p_state < kProbFloor ? -std::numeric_limits<double>::infinity() : std::log(p_state);
    log_weights[static_cast<std::size_t>(m)] = lw;
  }
  double max_lw = -std::numeric_limits<double>::infinity();
  for (double lw : log_weights) max_lw = std::max(max_lw, lw);
  if (!std::isfinite(max_lw)) {
    throw Error("posterior_from_feature: feature has zero probability under every task");
  }
  Dist weights(static_cast<std::size_t>(w.n_tasks), 0.0);
  double total = 0.0;
  for (int m = 0; m < w.n_tasks; ++m) {
    weights[static_cast<std::size_t>(m)] = std::exp(log_weights[static_cast<std::size_t>(m)] - max_lw);
    total += weights[static_cast<std::size_t>(m)];
  }
  for (double& v : weights) v /= total;
  return weights;
}

// overline{Alg^E} evaluated from a feature instead of an explicit prefix.
inline Dist overline_expert_row(const TabularWorld& w, std::uint64_t feature, int state) {
  Dist posterior = posterior_from_feature(w, feature, state);
  return posterior_average(
      w,
      [&](int m) { return w.expert_alg[static_cast<std::size_t>(m)].row(feature, state); },
      posterior);
}

// Action model under evaluation: either the tabular MLE or the exact
// posterior-average expert used as an oracle.
class Llm {
 public:
  virtual ~Llm() = default;
  virtual Dist row(const TabularWorld& w, std::uint64_t feature, int state) const = 0;
};

// Conditional frequency tables with add-alpha smoothing; the closed-form MLE
// for this family. Unseen (feature, state) pairs fall back to uniform.
class TabularLLM final : public Llm {
 public:
  TabularLLM() = default;
  TabularLLM(std::unordered_map<TableKey, Dist, TableKeyHash> rows, int n_actions)
      : rows_(std::move(rows)), n_actions_(n_actions) {}

  Dist row(const TabularWorld& w, std::uint64_t feature, int state) const override {
    auto it = rows_.find(TableKey{feature, state});
    if (it != rows_.end()) return it->second;
    return Dist(static_cast<std::size_t>(w.n_actions),
                1.0 / static_cast<double>(w.n_actions));
  }

  std::size_t n_rows() const { return rows_.size(); }

 private:
  std::unordered_map<TableKey, Dist, TableKeyHash> rows_;
  int n_actions_ = 0;
};

class OracleLlm final : public Llm {
 public:
  Dist row(const TabularWorld& w, std::uint64_t feature, int state) const override {
    return overline_expert_row(w, feature, state);
  }
};

// Adapts an Llm to the prefix-based policy interface.
class LlmPolicy final : public ActionPolicy {
 public:
  explicit LlmPolicy(const Llm& llm) : llm_(&llm) {}
  Dist action_dist(const TabularWorld& w, const Trajectory& prefix, int state) const override {
    return llm_->row(w, w.feature_of(prefix), state);
  }

 private:
  const Llm* llm_;
};

struct PretrainSample {
  int task = 0;
  Trajectory trajectory;            // length T-1, generated by the context algorithm
  std::vector<int> expert_actions;  // one expert label per step
};

using PretrainDataset = std::vector<PretrainSample>;

// The generative pretraining process: sample a task, roll the context
// algorithm for T-1 steps, and label every step with an expert action.
inline PretrainDataset generate_pretraining_data(const TabularWorld& w, std::size_t n_pre,
                                                 Rng& rng) {
  PretrainDataset dataset;
  dataset.reserve(n_pre);
  for (std::size_t i = 0; i < n_pre; ++i) {
    PretrainSample sample;
    sample.task = static_cast<int>(sample_index(rng, w.task_prior));
    Trajectory prefix;
    for (int step = 0; step < w.horizon - 1; ++step) {
      int s = static_cast<int>(
          sample_index(rng, w.initial_state[static_cast<std::size_t>(sample.task)]));
      std::uint64_t feature = w.feature_of(prefix);
      int a = static_cast<int>(sample_index(rng, w.context_alg.row(feature, s)));
      int expert_a = static_cast<int>(sample_index(
          rng, w.expert_alg[static_cast<std::size_t>(sample.task)].row(feature, s)));
      sample.expert_actions.push_back(expert_a);
      StepRecord rec{s, a, w.reward[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)]};
      prefix.push_back(rec);
      sample.trajectory.push_back(rec);
    }
    dataset.push_back(std::move(sample));
  }
  return dataset;
}

// Exact smoothed MLE: per-(feature, state) frequencies of expert actions.
inline TabularLLM mle_pretrain(const TabularWorld& w, const PretrainDataset& dataset,
                               double alpha = 0.1) {
  std::unordered_map<TableKey, std::vector<double>, TableKeyHash> counts;
  for (const PretrainSample& sample : dataset) {
    Trajectory prefix;
    for (std::size_t i = 0; i < sample.trajectory.size(); ++i) {
      TableKey key{w.feature_of(prefix), sample.trajectory[i].state};
      auto [it, inserted] =
          counts.try_emplace(key, std::vector<double>(static_cast<std::size_t>(w.n_actions), 0.0));
      it->second[static_cast<std::size_t>(sample.expert_actions[i])] += 1.0;
      prefix.push_back(sample.trajectory[i]);
    }
  }
  std::unordered_map<TableKey, Dist, TableKeyHash> rows;
  for (auto& [key, cnt] : counts) {
    double total = 0.0;
    for (double v : cnt) total += v;
    Dist row(cnt.size(), 0.0);
    double denom = total + alpha * static_cast<double>(cnt.size());
    if (denom <= 0.0) {
      row.assign(cnt.size(), 1.0 / static_cast<double>(cnt.size()));
    } else {
      for (std::size_t a = 0; a < cnt.size(); ++a) row[a] = (cnt[a] + alpha) / denom;
    }
    rows.emplace(key, std::move(row));
  }
  return TabularLLM(std::move(rows), w.n_actions);
}

struct PretrainErrorEstimate {
  double mean = 0.0;       // Monte-Carlo estimate of E[sum_t D_H^2]
  double std_error = 0.0;
  std::size_t n_mc = 0;
};

// Monte-Carlo estimate of the pretraining generalization error: the expected
// summed squared Hellinger distance between the posterior-average expert and
// the model along context-generated trajectories, with a fresh test state.
inline PretrainErrorEstimate estimate_pretrain_error(const TabularWorld& w, const Llm& llm,
                                                     std::size_t n_mc, Rng& rng) {
  if (n_mc == 0) throw Error("estimate_pretrain_error: n_mc must be >= 1");
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t i = 0; i < n_mc; ++i) {
    int task = static_cast<int>(sample_index(rng, w.task_prior));
    int test_state = static_cast<int>(
        sample_index(rng, w.initial_state[static_cast<std::size_t>(task)]));
    Trajectory prefix;
    double value = 0.0;
    for (int t = 1; t <= w.horizon; ++t) {
      std::uint64_t feature = w.feature_of(prefix);
      Dist target = overline_expert_row(w, feature, test_state);
      Dist model = llm.row(w, feature, test_state);
      value += hellinger_sq(target, model);
      if (t < w.horizon) {
        int s = static_cast<int>(
            sample_index(rng, w.initial_state[static_cast<std::size_t>(task)]));
        int a = static_cast<int>(sample_index(rng, w.context_alg.row(feature, s)));
        prefix.push_back(
            StepRecord{s, a, w.reward[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)]});
      }
    }
    sum += value;
    sum_sq += value * value;
  }
  PretrainErrorEstimate est;
  est.n_mc = n_mc;
  est.mean = sum / static_cast<double>(n_mc);
  double var = sum_sq / static_cast<double>(n_mc) - est.mean * est.mean;
  if (var < 0.0) var = 0.0;
  est.std_error = std::sqrt(var / static_cast<double>(n_mc));
  return est;
}

struct PretrainErrorProfile {
  // error_sum[m][s]: E_{T ~ P^{m,AlgC}}[sum_{t=1..T} D_H^2(overline, llm)] exactly
  std::vector<std::vector<double>> error_sum;
  double max_sum = 0.0;   // worst (task, state) pair
  double mean_sum = 0.0;  // prior x P0 weighted, comparable to the MC estimate
};

// Exact enumeration counterpart of estimate_pretrain_error, per (task, state).
// The bound verifiers use max_sum as the uniform stand-in for the per-state
// generalization guarantee.
inline PretrainErrorProfile pretrain_error_profile(const TabularWorld& w, const Llm& llm) {
  PretrainErrorProfile profile;
  profile.error_sum.assign(static_cast<std::size_t>(w.n_tasks),
                           std::vector<double>(static_cast<std::size_t>(w.n_states), 0.0));
  ContextPolicy context;
  for (int m = 0; m < w.n_tasks; ++m) {
    for (int len = 0; len < w.horizon; ++len) {
      TrajectoryDist prefix_dist = trajectory_dist(w, context, len, m);
      for (std::size_t idx = 0; idx < prefix_dist.probs.size(); ++idx) {
        double p = prefix_dist.probs[idx];
        if (p <= 0.0) continue;
        std::uint64_t feature = w.feature_of(decode_trajectory(w, len, idx));
        for (int s = 0; s < w.n_states; ++s) {
          double dh2 = hellinger_sq(overline_expert_row(w, feature, s), llm.row(w, feature, s));
          profile.error_sum[static_cast<std::size_t>(m)][static_cast<std::size_t>(s)] += p * dh2;
        }
      }
    }
  }
  for (int m = 0; m < w.n_tasks; ++m) {
    for (int s = 0; s < w.n_states; ++s) {
      double v = profile.error_sum[static_cast<std::size_t>(m)][static_cast<std::size_t>(s)];
      profile.max_sum = std::max(profile.max_sum, v);
      profile.mean_sum += w.task_prior[static_cast<std::size_t>(m)] *
                          w.initial_state[static_cast<std::size_t>(m)][static_cast<std::size_t>(s)] * v;
    }
  }
  return profile;
}

// Average per-step Hellinger distance between the model and the
// posterior-average expert (exact). The MLE-consistency metric.
inline double mean_hellinger_error(const TabularWorld& w, const Llm& llm) {
  double total = 0.0;
  ContextPolicy context;
  for (int m = 0; m < w.n_tasks; ++m) {
    for (int s = 0; s < w.n_states; ++s) {
      double weight = w.task_prior[static_cast<std::size_t>(m)] *
                      w.initial_state[static_cast<std::size_t>(m)][static_cast<std::size_t>(s)];
      double acc = 0.0;
      for (int len = 0; len < w.horizon; ++len) {
        TrajectoryDist prefix_dist = trajectory_dist(w, context, len, m);
        for (std::size_t idx = 0; idx < prefix_dist.probs.size(); ++idx) {
          double p = prefix_dist.probs[idx];
          if (p <= 0.0) continue;
          std::uint64_t feature = w.feature_of(decode_trajectory(w, len, idx));
          acc += p * hellinger(overline_expert_row(w, feature, s), llm.row(w, feature, s));
        }
      }
      total += weight * acc / static_cast<double>(w.horizon);
    }
  }
  return total;
}

enum class Setting { kOffline, kOnline };

// Literal evaluation of the stated pretraining-error constant. log_cover and
// eps_real are abstract inputs; nothing here estimates a covering number.
inline double compute_epsilon_pretrain(double c_dec, double horizon_T, double n_pre,
                                       double log_cover, double eps_real, Setting mode) {
  if (c_dec <= 1.0) throw Error("compute_epsilon_pretrain: C_Dec must be > 1");
  if (horizon_T < 0 || n_pre <= 0 || log_cover < 0 || eps_real < 0) {
    throw Error("compute_epsilon_pretrain: inputs must be nonnegative (n_pre positive)");
  }
  double base = std::sqrt(5.0 * horizon_T * log_cover / n_pre + horizon_T * eps_real);
  double scale = mode == Setting::kOffline ? horizon_T : horizon_T * horizon_T;
  return c_dec * scale * base;
}

}  // namespace cops::theory
