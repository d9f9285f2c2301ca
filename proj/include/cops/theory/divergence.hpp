#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "cops/common.hpp"

namespace cops::theory {

using Dist = std::vector<double>;

// Probabilities below this are treated as zero before any division.
inline constexpr double kProbFloor = 1e-12;
inline constexpr double kNormTolerance = 1e-9;

inline void check_distribution(const Dist& p, const char* who) {
  double sum = 0.0;
  for (double v : p) {
    if (!(v >= 0.0)) throw Error(std::string(who) + ": negative probability");
    sum += v;
  }
  if (std::abs(sum - 1.0) > kNormTolerance) {
    throw Error(std::string(who) + ": input not normalized");
  }
}

inline void check_pair(const Dist& p, const Dist& q, const char* who) {
  if (p.size() != q.size()) throw Error(std::string(who) + ": support size mismatch");
  check_distribution(p, who);
  check_distribution(q, who);
}

inline double tv_distance(const Dist& p, const Dist& q) {
  check_pair(p, q, "tv_distance");
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) sum += std::abs(p[i] - q[i]);
  return 0.5 * sum;
}

inline double hellinger_sq(const Dist& p, const Dist& q) {
  check_pair(p, q, "hellinger");
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    double d = std::sqrt(p[i]) - std::sqrt(q[i]);
    sum += d * d;
  }
  double h2 = 0.5 * sum;
  if (h2 < 0.0) h2 = 0.0;  // rounding
  if (h2 > 1.0) h2 = 1.0;
  return h2;
}

inline double hellinger(const Dist& p, const Dist& q) { return std::sqrt(hellinger_sq(p, q)); }

// chi^2(p, q) = sum p^2/q - 1; +inf when p puts mass where q has none.
inline double chi_square(const Dist& p, const Dist& q) {
  check_pair(p, q, "chi_square");
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    if (q[i] < kProbFloor) return std::numeric_limits<double>::infinity();
    sum += p[i] * p[i] / q[i];
  }
  double chi2 = sum - 1.0;
  return chi2 < 0.0 ? 0.0 : chi2;  // rounding
}

inline Dist normalized(Dist weights, const char* who = "normalized") {
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw Error(std::string(who) + ": negative weight");
    sum += w;
  }
  if (sum <= 0.0) throw Error(std::string(who) + ": weights sum to zero");
  for (double& w : weights) w /= sum;
  return weights;
}

}  // namespace cops::theory
