#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "cops/common.hpp"
#include "cops/theory/decoder.hpp"
#include "cops/theory/divergence.hpp"
#include "cops/theory/pretrain.hpp"
#include "cops/theory/world.hpp"

namespace cops::theory {

// E_{T~P, a~model(.|T,s)} r(s,a), by enumeration.
inline double expected_reward_under_llm(const TabularWorld& w, const TrajectoryDist& p, int state,
                                        const Llm& llm) {
  double value = 0.0;
  for (std::size_t idx = 0; idx < p.probs.size(); ++idx) {
    double pt = p.probs[idx];
    if (pt <= 0.0) continue;
    std::uint64_t feature = w.feature_of(decode_trajectory(w, p.length, idx));
    Dist row = llm.row(w, feature, state);
    double r = 0.0;
    for (int a = 0; a < w.n_actions; ++a) {
      r += row[static_cast<std::size_t>(a)] *
           w.reward[static_cast<std::size_t>(state)][static_cast<std::size_t>(a)];
    }
    value += pt * r;
  }
  return value;
}

// Same expectation under the posterior-average expert.
inline double expected_reward_under_expert(const TabularWorld& w, const TrajectoryDist& p,
                                           int state) {
  OracleLlm oracle;
  return expected_reward_under_llm(w, p, state, oracle);
}

inline double pessimism_score(const TabularWorld& w, const TrajectoryDist& candidate, int state,
                              const Llm& llm, const TrajectoryDist& dec, double eps_pretrain) {
  double chi2 = chi_square(candidate.probs, dec.probs);
  if (std::isinf(chi2)) return -std::numeric_limits<double>::infinity();
  return expected_reward_under_llm(w, candidate, state, llm) -
         eps_pretrain * std::sqrt(1.0 + chi2);
}

// The offline selection rule: maximize expected model reward minus the
// chi-square pessimism penalty against the decoder distribution. Candidates
// whose support escapes the decoder score -inf; ties resolve to the lowest
// index.
inline std::size_t offline_cops_select(const TabularWorld& w,
                                       const std::vector<TrajectoryDist>& candidates, int state,
                                       const Llm& llm, const TrajectoryDist& dec,
                                       double eps_pretrain) {
  if (candidates.empty()) throw Error("offline_cops_select: empty candidate set");
  std::size_t best = candidates.size();
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    double score = pessimism_score(w, candidates[i], state, llm, dec, eps_pretrain);
    if (std::isfinite(score) && score > best_score) {
      best_score = score;
      best = i;
    }
  }
  if (best == candidates.size()) {
    throw Error("offline_cops_select: no feasible candidate (all scores are -inf)");
  }
  return best;
}

// Both sides of the Cauchy-Schwarz step used by the suboptimality analysis,
// evaluated exactly: E_{T~P}[D_H(overline, llm)] <= sqrt(I1) * sqrt(I2) with
// I1 the mean squared Hellinger error under the context distribution and
// I2 = E_Q[(P/Q)^2] = 1 + chi2(P, Q).
struct CauchySchwarzCheck {
  double lhs = 0.0;
  double i1 = 0.0;
  double i2 = 0.0;
  double chi2 = 0.0;
  bool holds = false;
  bool identity_holds = false;  // I2 == 1 + chi2(P, Q) by direct enumeration
};

inline CauchySchwarzCheck cauchy_schwarz_check(const TabularWorld& w, const TrajectoryDist& p_hat,
                                               int task, int state, const Llm& llm) {
  ContextPolicy context;
  TrajectoryDist q = trajectory_dist(w, context, p_hat.length, task);
  CauchySchwarzCheck check;
  double identity_sum = 0.0;  // E_{T~P}[P/Q]
  for (std::size_t idx = 0; idx < p_hat.probs.size(); ++idx) {
    double pi = p_hat.probs[idx];
    double qi = q.probs[idx];
    std::uint64_t feature = w.feature_of(decode_trajectory(w, p_hat.length, idx));
    double dh = 0.0;
    if (pi > 0.0 || qi > 0.0) {
      dh = hellinger(overline_expert_row(w, feature, state), llm.row(w, feature, state));
    }
    if (pi > 0.0) {
      if (qi < kProbFloor) {
        check.i2 = std::numeric_limits<double>::infinity();
        identity_sum = std::numeric_limits<double>::infinity();
      } else {
        check.lhs += pi * dh;
        identity_sum += pi * pi / qi;
      }
    }
    if (qi > 0.0) {
      check.i1 += qi * dh * dh;
      if (pi > 0.0 && qi >= kProbFloor && !std::isinf(check.i2)) {
        check.i2 += qi * (pi / qi) * (pi / qi);
      }
    }
  }
  check.chi2 = chi_square(p_hat.probs, q.probs);
  check.holds = check.lhs <= std::sqrt(check.i1) * std::sqrt(check.i2) + 1e-9;
  double expected_i2 = 1.0 + check.chi2;
  check.identity_holds =
      (std::isinf(check.i2) && std::isinf(expected_i2)) ||
      (std::abs(check.i2 - expected_i2) <= 1e-9 * std::max(1.0, expected_i2) &&
       std::abs(identity_sum - check.i2) <= 1e-9 * std::max(1.0, check.i2));
  return check;
}

struct OfflineInstance {
  TabularWorld world;
  std::vector<std::vector<TrajectoryDist>> candidates;  // [state][i], length horizon-1
  std::vector<DecoderResult> decoder;                   // [state]
  double c_dec = 1.0;                                   // max certified over states
};

struct OfflineInstanceConfig {
  RandomWorldConfig world;
  int n_random_candidates = 3;
  bool include_decoder_candidate = true;
  double gamma = 1.3;
  std::size_t n_pre = 1500;
  double alpha = 0.1;
};

inline TrajectoryDist random_trajectory_dist(const TabularWorld& w, int length, Rng& rng,
                                             double min_weight = 0.05) {
  TrajectoryDist dist;
  dist.length = length;
  dist.probs = random_dist(rng, static_cast<int>(trajectory_space_size(w, length)), min_weight);
  return dist;
}

inline OfflineInstance make_offline_instance(const OfflineInstanceConfig& cfg, Rng& rng) {
  OfflineInstance inst;
  inst.world = random_world(cfg.world, rng);
  const int length = inst.world.horizon - 1;
  for (int s = 0; s < inst.world.n_states; ++s) {
    inst.decoder.push_back(tabular_decoder(inst.world, s, length, cfg.gamma, rng));
    inst.c_dec = std::max(inst.c_dec, inst.decoder.back().c_dec);
    std::vector<TrajectoryDist> per_state;
    for (int i = 0; i < cfg.n_random_candidates; ++i) {
      per_state.push_back(random_trajectory_dist(inst.world, length, rng));
    }
    if (cfg.include_decoder_candidate) per_state.push_back(inst.decoder.back().dist);
    inst.candidates.push_back(std::move(per_state));
  }
  return inst;
}

struct SuboptimalityReport {
  double lhs = 0.0;      // measured SubOpt under the posterior-average expert
  double rhs = 0.0;      // 2 C_Dec eps_hat E sqrt(1 + chi2(P*, Q_m))
  double eps_hat = 0.0;  // penalty constant used for selection and the bound
  double c_dec = 1.0;
  bool cs_ok = true;  // eq. (Cauchy-Schwarz) step held on every (task, state)
  bool pass = false;
  std::vector<std::size_t> chosen;  // per state
  std::vector<std::size_t> best;    // per state, argmax under the expert
};

// Runs the offline selection on every state and verifies the suboptimality
// bound structure with the empirically certified pretraining error:
//   eps_hat = sqrt(2) * C_Dec * sqrt(max_{m,s} E_Q[sum_t D_H^2]).
// The sqrt(2) comes from the D_TV <= sqrt(2) D_H sandwich; an unscaled
// D_TV <= D_H step would be unsound (see the divergence tests).
inline SuboptimalityReport verify_suboptimality(const OfflineInstance& inst, const Llm& llm) {
  const TabularWorld& w = inst.world;
  const int length = w.horizon - 1;
  SuboptimalityReport report;
  report.c_dec = inst.c_dec;

  PretrainErrorProfile profile = pretrain_error_profile(w, llm);
  report.eps_hat = std::sqrt(2.0) * inst.c_dec * std::sqrt(profile.max_sum);

  ContextPolicy context;
  std::vector<std::vector<double>> expert_value(static_cast<std::size_t>(w.n_states));
  for (int s = 0; s < w.n_states; ++s) {
    const auto& cands = inst.candidates[static_cast<std::size_t>(s)];
    std::size_t chosen =
        offline_cops_select(w, cands, s, llm, inst.decoder[static_cast<std::size_t>(s)].dist,
                            report.eps_hat);
    std::size_t best = 0;
    double best_value = -1.0;
    for (std::size_t i = 0; i < cands.size(); ++i) {
      double v = expected_reward_under_expert(w, cands[i], s);
      expert_value[static_cast<std::size_t>(s)].push_back(v);
      if (v > best_value) {
        best_value = v;
        best = i;
      }
    }
    report.chosen.push_back(chosen);
    report.best.push_back(best);
  }

  for (int m = 0; m < w.n_tasks; ++m) {
    TrajectoryDist q = trajectory_dist(w, context, length, m);
    for (int s = 0; s < w.n_states; ++s) {
      double weight = w.task_prior[static_cast<std::size_t>(m)] *
                      w.initial_state[static_cast<std::size_t>(m)][static_cast<std::size_t>(s)];
      const auto& values = expert_value[static_cast<std::size_t>(s)];
      std::size_t best = report.best[static_cast<std::size_t>(s)];
      std::size_t chosen = report.chosen[static_cast<std::size_t>(s)];
      report.lhs += weight * (values[best] - values[chosen]);
      const TrajectoryDist& p_star =
          inst.candidates[static_cast<std::size_t>(s)][best];
      report.rhs += weight * 2.0 * inst.c_dec * report.eps_hat *
                    std::sqrt(1.0 + chi_square(p_star.probs, q.probs));
      CauchySchwarzCheck cs = cauchy_schwarz_check(
          w, inst.candidates[static_cast<std::size_t>(s)][chosen], m, s, llm);
      if (!cs.holds || !cs.identity_holds) report.cs_ok = false;
    }
  }
  report.pass = report.cs_ok && report.lhs <= report.rhs + 1e-9;
  return report;
}

}  // namespace cops::theory
