#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <unordered_map>
#include <vector>

#include "cops/common.hpp"
#include "cops/theory/divergence.hpp"
#include "cops/theory/pretrain.hpp"
#include "cops/theory/world.hpp"

namespace cops::theory {

// The online rounds run to horizons where the trajectory space is
// astronomically large, but with a memoryless context algorithm every
// candidate and decoder distribution here is an i.i.d. product over
// (state, action) cells. Everything needed - expectations of count-keyed
// tables, chi-square terms, the certified decoder band - is then exact over
// the space of count vectors, which stays small.
class CountsSpace {
 public:
  CountsSpace(int n_cells, int max_len) : n_cells_(n_cells) {
    if (n_cells > 10) throw Error("CountsSpace: too many cells for packed counts");
    if (max_len > 62) throw Error("CountsSpace: length exceeds packed-count capacity");
    levels_.resize(static_cast<std::size_t>(max_len) + 1);
    transitions_.resize(static_cast<std::size_t>(max_len));
    std::unordered_map<std::uint64_t, int> index;
    levels_[0] = {0};
    for (int len = 0; len < max_len; ++len) {
      index.clear();
      auto& next = levels_[static_cast<std::size_t>(len) + 1];
      auto& trans = transitions_[static_cast<std::size_t>(len)];
      trans.assign(levels_[static_cast<std::size_t>(len)].size() * static_cast<std::size_t>(n_cells_), -1);
      for (std::size_t i = 0; i < levels_[static_cast<std::size_t>(len)].size(); ++i) {
        for (int c = 0; c < n_cells_; ++c) {
          std::uint64_t packed =
              levels_[static_cast<std::size_t>(len)][i] + (std::uint64_t{1} << (6 * c));
          auto [it, inserted] = index.try_emplace(packed, static_cast<int>(next.size()));
          if (inserted) next.push_back(packed);
          trans[i * static_cast<std::size_t>(n_cells_) + static_cast<std::size_t>(c)] = it->second;
        }
      }
    }
  }

  int n_cells() const { return n_cells_; }
  int max_len() const { return static_cast<int>(levels_.size()) - 1; }
  const std::vector<std::uint64_t>& packed(int len) const {
    return levels_.at(static_cast<std::size_t>(len));
  }
  std::size_t size(int len) const { return levels_.at(static_cast<std::size_t>(len)).size(); }

  // pmf over counts at len+1 for one more i.i.d. cell draw from cell_dist.
  std::vector<double> extend(int len, const std::vector<double>& pmf,
                             const Dist& cell_dist) const {
    const auto& trans = transitions_.at(static_cast<std::size_t>(len));
    std::vector<double> next(size(len + 1), 0.0);
    for (std::size_t i = 0; i < pmf.size(); ++i) {
      double p = pmf[i];
      if (p <= 0.0) continue;
      for (int c = 0; c < n_cells_; ++c) {
        next[static_cast<std::size_t>(
            trans[i * static_cast<std::size_t>(n_cells_) + static_cast<std::size_t>(c)])] +=
            p * cell_dist[static_cast<std::size_t>(c)];
      }
    }
    return next;
  }

  std::vector<double> pmf_at(int len, const Dist& cell_dist) const {
    std::vector<double> pmf{1.0};
    for (int l = 0; l < len; ++l) pmf = extend(l, pmf, cell_dist);
    return pmf;
  }

 private:
  int n_cells_;
  std::vector<std::vector<std::uint64_t>> levels_;
  std::vector<std::vector<int>> transitions_;
};

// sqrt(1 + chi2(P, Q)) for length-len i.i.d. products, in log space:
// 1 + chi2 = (sum_c p_c^2 / q_c)^len.
inline double sqrt1p_chi_square_product(const Dist& p, const Dist& q, int len) {
  double sum = 0.0;
  for (std::size_t c = 0; c < p.size(); ++c) {
    if (p[c] <= 0.0) continue;
    if (q[c] < kProbFloor) return std::numeric_limits<double>::infinity();
    sum += p[c] * p[c] / q[c];
  }
  if (sum < 1.0) sum = 1.0;  // rounding; Cauchy-Schwarz gives sum >= 1
  return std::exp(0.5 * static_cast<double>(len) * std::log(sum));
}

inline void require_online_world(const TabularWorld& w) {
  if (w.feature_mode != FeatureMode::kCounts) {
    throw Error("online: requires counts feature mode");
  }
  if (!w.context_alg.memoryless) throw Error("online: requires memoryless context algorithm");
  for (const PolicyTable& t : w.expert_alg) {
    if (!t.memoryless) throw Error("online: requires memoryless expert algorithms");
  }
}

// Per-task cell distribution q_m(s,a) = P0^m(s) * AlgC(a|s).
inline Dist task_cell_dist(const TabularWorld& w, int task) {
  Dist cells(static_cast<std::size_t>(w.n_cells()), 0.0);
  for (int s = 0; s < w.n_states; ++s) {
    const Dist& row = w.context_alg.row(0, s);
    for (int a = 0; a < w.n_actions; ++a) {
      cells[static_cast<std::size_t>(w.cell_of(s, a))] =
          w.initial_state[static_cast<std::size_t>(task)][static_cast<std::size_t>(s)] *
          row[static_cast<std::size_t>(a)];
    }
  }
  return cells;
}

struct OnlineDecoder {
  std::vector<Dist> cells;  // per conditioning state
  double c_dec = 1.0;       // certified for every task and length <= max_len
};

// Product-form decoder: the state-posterior mixture of per-task cell
// distributions, perturbed per cell within [1/gamma, gamma] and renormalized.
// The certified coefficient is the worst per-cell ratio raised to max_len/2,
// since products multiply the band per step.
inline OnlineDecoder make_online_decoder(const TabularWorld& w, double gamma, int max_len,
                                         Rng& rng) {
  require_online_world(w);
  if (gamma < 1.0) throw Error("make_online_decoder: gamma must be >= 1");
  OnlineDecoder dec;
  std::vector<Dist> task_cells;
  for (int m = 0; m < w.n_tasks; ++m) task_cells.push_back(task_cell_dist(w, m));
  const double log_gamma = std::log(gamma);
  double worst_cell_ratio = 1.0;
  for (int s = 0; s < w.n_states; ++s) {
    Dist posterior = state_posterior(w, s);
    Dist cells(static_cast<std::size_t>(w.n_cells()), 0.0);
    for (int m = 0; m < w.n_tasks; ++m) {
      for (int c = 0; c < w.n_cells(); ++c) {
        cells[static_cast<std::size_t>(c)] +=
            posterior[static_cast<std::size_t>(m)] * task_cells[static_cast<std::size_t>(m)][static_cast<std::size_t>(c)];
      }
    }
    if (log_gamma > 0.0) {
      for (double& p : cells) {
        if (p > 0.0) p *= std::exp((2.0 * uniform_double(rng) - 1.0) * log_gamma);
      }
    }
    cells = normalized(std::move(cells), "online decoder");
    for (int m = 0; m < w.n_tasks; ++m) {
      for (int c = 0; c < w.n_cells(); ++c) {
        double qc = task_cells[static_cast<std::size_t>(m)][static_cast<std::size_t>(c)];
        double dc = cells[static_cast<std::size_t>(c)];
        if (qc < kProbFloor && dc < kProbFloor) continue;
        if (qc < kProbFloor || dc < kProbFloor) {
          worst_cell_ratio = std::numeric_limits<double>::infinity();
          continue;
        }
        worst_cell_ratio = std::max(worst_cell_ratio, std::max(dc / qc, qc / dc));
      }
    }
    dec.cells.push_back(std::move(cells));
  }
  dec.c_dec = std::pow(worst_cell_ratio, 0.5 * static_cast<double>(max_len));
  return dec;
}

// An experience-collection strategy: maps (history, state) to the cell
// distribution of an i.i.d. product over trajectory steps.
struct OnlineCandidate {
  std::string name;
  bool history_dependent = false;
  std::function<Dist(const TabularWorld&, const Trajectory& history, int state)> cells;
};

inline std::vector<OnlineCandidate> default_online_candidates(const TabularWorld& w,
                                                              const OnlineDecoder& dec,
                                                              Rng& rng) {
  std::vector<OnlineCandidate> out;
  out.push_back({"decoder-match", false,
                 [cells = dec.cells](const TabularWorld&, const Trajectory&, int state) {
                   return cells.at(static_cast<std::size_t>(state));
                 }});
  Dist greedy(static_cast<std::size_t>(w.n_cells()), 0.0);
  for (int s = 0; s < w.n_states; ++s) {
    for (int a = 0; a < w.n_actions; ++a) {
      greedy[static_cast<std::size_t>(w.cell_of(s, a))] =
          state_marginal(w, s) *
          (0.1 + w.reward[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)]);
    }
  }
  greedy = normalized(std::move(greedy), "greedy candidate");
  out.push_back({"reward-greedy", false,
                 [greedy](const TabularWorld&, const Trajectory&, int) { return greedy; }});
  out.push_back({"replay", true,
                 [](const TabularWorld& world, const Trajectory& history, int) {
                   Dist cells(static_cast<std::size_t>(world.n_cells()), 0.5);
                   for (const StepRecord& step : history) {
                     cells[static_cast<std::size_t>(world.cell_of(step.state, step.action))] += 1.0;
                   }
                   return normalized(std::move(cells), "replay candidate");
                 }});
  Dist fixed = random_dist(rng, w.n_cells(), 0.1);
  out.push_back({"fixed-random", false,
                 [fixed](const TabularWorld&, const Trajectory&, int) { return fixed; }});
  return out;
}

struct OnlineRoundRow {
  int round = 0;
  int realized_task = 0;
  int realized_state = 0;
  std::size_t chosen = 0;       // at the realized state
  double chosen_score = 0.0;
  double gap = 0.0;             // exact expected per-round regret
  double rhs_star = 0.0;       // 2 C eps_hat sqrt(1+chi2(P*, Q_{m_t})) at the draw
  double rhs_chosen = 0.0;      // 2 eps_hat sqrt(1+chi2(chosen, Dec)); the derivable bound
  double realized_reward = 0.0;
};

struct OnlineRunResult {
  std::vector<OnlineRoundRow> rounds;
  double regret = 0.0;
  double rhs_star_total = 0.0;
  double rhs_chosen_total = 0.0;
  double c_dec = 1.0;
  double eps_hat = 0.0;        // certified pretraining-error constant
  double eps_selection = 0.0;  // bonus coefficient actually used
  bool argmax_ok = true;
};

struct OnlineRunConfig {
  int rounds = 50;
  bool use_certified_eps = true;  // selection bonus = eps_hat
  double eps_selection = 0.0;     // used when use_certified_eps is false
};

// OnlineCoPS: per round, score every candidate with expected model reward
// plus the optimism bonus, act through the model, and account regret exactly
// against the per-round best candidate under the posterior-average expert.
inline OnlineRunResult online_cops_run(const TabularWorld& w,
                                       const std::vector<OnlineCandidate>& candidates,
                                       const Llm& llm, const OnlineDecoder& dec,
                                       const OnlineRunConfig& cfg, Rng& rng) {
  require_online_world(w);
  if (candidates.empty()) throw Error("online_cops_run: empty candidate set");
  const int max_len = cfg.rounds - 1;
  CountsSpace space(w.n_cells(), max_len);

  // Precompute per-(length, counts, state): model reward, expert reward and
  // the squared Hellinger gap between their action rows.
  std::vector<std::vector<std::vector<double>>> llm_reward(static_cast<std::size_t>(max_len) + 1);
  std::vector<std::vector<std::vector<double>>> over_reward(static_cast<std::size_t>(max_len) + 1);
  std::vector<std::vector<std::vector<double>>> dh2(static_cast<std::size_t>(max_len) + 1);
  for (int len = 0; len <= max_len; ++len) {
    const auto& packed = space.packed(len);
    auto& lr = llm_reward[static_cast<std::size_t>(len)];
    auto& orow = over_reward[static_cast<std::size_t>(len)];
    auto& d2 = dh2[static_cast<std::size_t>(len)];
    lr.assign(packed.size(), std::vector<double>(static_cast<std::size_t>(w.n_states), 0.0));
    orow.assign(packed.size(), std::vector<double>(static_cast<std::size_t>(w.n_states), 0.0));
    d2.assign(packed.size(), std::vector<double>(static_cast<std::size_t>(w.n_states), 0.0));
    for (std::size_t i = 0; i < packed.size(); ++i) {
      for (int s = 0; s < w.n_states; ++s) {
        Dist model = llm.row(w, packed[i], s);
        Dist target = overline_expert_row(w, packed[i], s);
        double lv = 0.0, ov = 0.0;
        for (int a = 0; a < w.n_actions; ++a) {
          double r = w.reward[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)];
          lv += model[static_cast<std::size_t>(a)] * r;
          ov += target[static_cast<std::size_t>(a)] * r;
        }
        lr[i][static_cast<std::size_t>(s)] = lv;
        orow[i][static_cast<std::size_t>(s)] = ov;
        d2[i][static_cast<std::size_t>(s)] = hellinger_sq(target, model);
      }
    }
  }

  OnlineRunResult result;
  result.c_dec = dec.c_dec;

  // Certified eps_hat: sqrt(2) C_Dec sqrt(max_{m,s} sum_len E_{Q_m}[D_H^2]).
  double worst_sum = 0.0;
  for (int m = 0; m < w.n_tasks; ++m) {
    Dist q_cells = task_cell_dist(w, m);
    std::vector<double> pmf{1.0};
    std::vector<double> per_state(static_cast<std::size_t>(w.n_states), 0.0);
    for (int len = 0; len <= max_len; ++len) {
      if (len > 0) pmf = space.extend(len - 1, pmf, q_cells);
      for (std::size_t i = 0; i < pmf.size(); ++i) {
        if (pmf[i] <= 0.0) continue;
        for (int s = 0; s < w.n_states; ++s) {
          per_state[static_cast<std::size_t>(s)] +=
              pmf[i] * dh2[static_cast<std::size_t>(len)][i][static_cast<std::size_t>(s)];
        }
      }
    }
    for (double v : per_state) worst_sum = std::max(worst_sum, v);
  }
  result.eps_hat = std::sqrt(2.0) * dec.c_dec * std::sqrt(worst_sum);
  result.eps_selection = cfg.use_certified_eps ? result.eps_hat : cfg.eps_selection;

  std::vector<Dist> task_cells;
  for (int m = 0; m < w.n_tasks; ++m) task_cells.push_back(task_cell_dist(w, m));
  std::vector<double> state_weight(static_cast<std::size_t>(w.n_states), 0.0);
  for (int s = 0; s < w.n_states; ++s) state_weight[static_cast<std::size_t>(s)] = state_marginal(w, s);

  // Incremental count pmfs for history-independent candidates.
  std::vector<std::vector<std::vector<double>>> static_pmf(
      candidates.size(),
      std::vector<std::vector<double>>(static_cast<std::size_t>(w.n_states), {1.0}));

  Trajectory history;
  for (int round = 1; round <= cfg.rounds; ++round) {
    const int len = round - 1;
    OnlineRoundRow row;
    row.round = round;

    std::vector<std::vector<double>> score(candidates.size());
    std::vector<std::vector<double>> value_over(candidates.size());
    std::vector<std::vector<Dist>> cand_cells(candidates.size());
    for (std::size_t j = 0; j < candidates.size(); ++j) {
      score[j].assign(static_cast<std::size_t>(w.n_states), 0.0);
      value_over[j].assign(static_cast<std::size_t>(w.n_states), 0.0);
      for (int s = 0; s < w.n_states; ++s) {
        Dist cells = candidates[j].cells(w, history, s);
        std::vector<double> pmf;
        if (candidates[j].history_dependent) {
          pmf = space.pmf_at(len, cells);
        } else {
          pmf = static_pmf[j][static_cast<std::size_t>(s)];
        }
        double v_llm = 0.0, v_over = 0.0;
        for (std::size_t i = 0; i < pmf.size(); ++i) {
          if (pmf[i] <= 0.0) continue;
          v_llm += pmf[i] * llm_reward[static_cast<std::size_t>(len)][i][static_cast<std::size_t>(s)];
          v_over += pmf[i] * over_reward[static_cast<std::size_t>(len)][i][static_cast<std::size_t>(s)];
        }
        double bonus = result.eps_selection *
                       sqrt1p_chi_square_product(cells, dec.cells[static_cast<std::size_t>(s)], len);
        score[j][static_cast<std::size_t>(s)] = v_llm + bonus;
        value_over[j][static_cast<std::size_t>(s)] = v_over;
        cand_cells[j].push_back(std::move(cells));
      }
    }

    // Exact expected per-round regret over (task, state).
    double gap = 0.0;
    std::vector<std::size_t> chosen_at(static_cast<std::size_t>(w.n_states), 0);
    std::vector<std::size_t> best_at(static_cast<std::size_t>(w.n_states), 0);
    for (int s = 0; s < w.n_states; ++s) {
      std::size_t chosen = 0, best = 0;
      for (std::size_t j = 1; j < candidates.size(); ++j) {
        if (score[j][static_cast<std::size_t>(s)] > score[chosen][static_cast<std::size_t>(s)]) chosen = j;
        if (value_over[j][static_cast<std::size_t>(s)] > value_over[best][static_cast<std::size_t>(s)]) best = j;
      }
      for (std::size_t j = 0; j < candidates.size(); ++j) {
        if (score[j][static_cast<std::size_t>(s)] > score[chosen][static_cast<std::size_t>(s)] + 1e-12) {
          result.argmax_ok = false;
        }
      }
      chosen_at[static_cast<std::size_t>(s)] = chosen;
      best_at[static_cast<std::size_t>(s)] = best;
      gap += state_weight[static_cast<std::size_t>(s)] *
             (value_over[best][static_cast<std::size_t>(s)] - value_over[chosen][static_cast<std::size_t>(s)]);
    }
    row.gap = gap;
    result.regret += gap;

    // Realized interaction.
    int task = static_cast<int>(sample_index(rng, w.task_prior));
    int state = static_cast<int>(sample_index(rng, w.initial_state[static_cast<std::size_t>(task)]));
    row.realized_task = task;
    row.realized_state = state;
    row.chosen = chosen_at[static_cast<std::size_t>(state)];
    row.chosen_score = score[row.chosen][static_cast<std::size_t>(state)];

    const Dist& star_cells = cand_cells[best_at[static_cast<std::size_t>(state)]]
                                       [static_cast<std::size_t>(state)];
    row.rhs_star = 2.0 * dec.c_dec * result.eps_hat *
                    sqrt1p_chi_square_product(star_cells, task_cells[static_cast<std::size_t>(task)], len);
    row.rhs_chosen = 2.0 * result.eps_hat *
                     sqrt1p_chi_square_product(cand_cells[row.chosen][static_cast<std::size_t>(state)],
                                               dec.cells[static_cast<std::size_t>(state)], len);
    result.rhs_star_total += row.rhs_star;
    result.rhs_chosen_total += row.rhs_chosen;

    std::uint64_t feature = 0;
    const Dist& chosen_cells = cand_cells[row.chosen][static_cast<std::size_t>(state)];
    for (int step = 0; step < len; ++step) {
      feature += std::uint64_t{1} << (6 * static_cast<int>(sample_index(rng, chosen_cells)));
    }
    Dist action_row = llm.row(w, feature, state);
    int action = static_cast<int>(sample_index(rng, action_row));
    row.realized_reward =
        w.reward[static_cast<std::size_t>(state)][static_cast<std::size_t>(action)];
    history.push_back(StepRecord{state, action, row.realized_reward});

    // Advance incremental pmfs for the next round.
    if (round < cfg.rounds) {
      for (std::size_t j = 0; j < candidates.size(); ++j) {
        if (candidates[j].history_dependent) continue;
        for (int s = 0; s < w.n_states; ++s) {
          static_pmf[j][static_cast<std::size_t>(s)] = space.extend(
              len, static_pmf[j][static_cast<std::size_t>(s)], cand_cells[j][static_cast<std::size_t>(s)]);
        }
      }
    }
    result.rounds.push_back(std::move(row));
  }
  return result;
}

}  // namespace cops::theory
