#pragma once

#include <cmath>
#include <span>

namespace ec2st {

// Probabilities that feed a likelihood are clamped to
// [kProbClamp, 1 - kProbClamp] so their logs stay finite.
inline constexpr double kProbClamp = 1e-7;

// log(exp(a) + exp(b)) without intermediate overflow.
inline double log_sum_exp(double a, double b) {
  if (std::isinf(a) && a < 0) return b;
  if (std::isinf(b) && b < 0) return a;
  const double hi = a > b ? a : b;
  const double lo = a > b ? b : a;
  return hi + std::log1p(std::exp(lo - hi));
}

double log_sum_exp(std::span<const double> values);

inline double log_mean_exp(std::span<const double> values) {
  return log_sum_exp(values) - std::log(static_cast<double>(values.size()));
}

// log(1 + exp(t)) without overflow for large |t|.
inline double softplus(double t) {
  return (t > 0 ? t : 0.0) + std::log1p(std::exp(-std::fabs(t)));
}

inline double sigmoid(double t) {
  if (t >= 0) {
    const double e = std::exp(-t);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(t);
  return e / (1.0 + e);
}

}  // namespace ec2st
