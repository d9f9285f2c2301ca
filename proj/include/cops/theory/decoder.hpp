#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "cops/common.hpp"
#include "cops/theory/divergence.hpp"
#include "cops/theory/world.hpp"

namespace cops::theory {

struct DecoderResult {
  TrajectoryDist dist;
  // Certified coefficient: 1/c_dec^2 <= dist/Q_m <= c_dec^2 over every task m
  // and every trajectory in Q_m's support. Infinite if supports mismatch.
  double c_dec = 1.0;
};

// Builds the decoder distribution for a state: the state-posterior mixture of
// context-algorithm trajectory distributions, multiplied entrywise by a
// random factor in [1/gamma, gamma] and renormalized. gamma = 1 with a single
// task reproduces the exact trajectory distribution and certifies c_dec = 1.
inline DecoderResult tabular_decoder(const TabularWorld& w, int state, int length, double gamma,
                                     Rng& rng) {
  if (gamma < 1.0) throw Error("tabular_decoder: gamma must be >= 1");
  ContextPolicy context;
  DecoderResult out;
  out.dist = mixture_trajectory_dist(w, context, length, state_posterior(w, state));
  const double log_gamma = std::log(gamma);
  double total = 0.0;
  for (double& p : out.dist.probs) {
    if (p > 0.0 && log_gamma > 0.0) {
      p *= std::exp((2.0 * uniform_double(rng) - 1.0) * log_gamma);
    }
    total += p;
  }
  if (total <= 0.0) throw Error("tabular_decoder: degenerate distribution");
  for (double& p : out.dist.probs) p /= total;

  double max_ratio = 1.0;
  for (int m = 0; m < w.n_tasks; ++m) {
    TrajectoryDist q = trajectory_dist(w, context, length, m);
    for (std::size_t i = 0; i < q.probs.size(); ++i) {
      double qi = q.probs[i];
      double di = out.dist.probs[i];
      if (qi < kProbFloor && di < kProbFloor) continue;
      if (qi < kProbFloor || di < kProbFloor) {
        max_ratio = std::numeric_limits<double>::infinity();
        break;
      }
      double ratio = di > qi ? di / qi : qi / di;
      if (ratio > max_ratio) max_ratio = ratio;
    }
  }
  out.c_dec = std::sqrt(max_ratio);
  return out;
}

}  // namespace cops::theory
