#include "ec2st/stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ec2st/numerics.hpp"

namespace ec2st {

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) {
    throw std::invalid_argument("log_sum_exp over an empty set");
  }
  double hi = -std::numeric_limits<double>::infinity();
  for (double v : values) hi = std::max(hi, v);
  if (std::isinf(hi)) return hi;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - hi);
  return hi + std::log(acc);
}

double mean(std::span<const double> xs) {
  if (xs.empty()) throw std::invalid_argument("mean of an empty set");
  double acc = 0.0;
  for (double x : xs) acc += x;
  return acc / static_cast<double>(xs.size());
}

double sample_variance(std::span<const double> xs) {
  if (xs.size() < 2) {
    throw std::invalid_argument("sample variance needs at least two points");
  }
  const double m = mean(xs);
  double acc = 0.0;
  for (double x : xs) acc += (x - m) * (x - m);
  return acc / static_cast<double>(xs.size() - 1);
}

double sample_stddev(std::span<const double> xs) {
  return std::sqrt(sample_variance(xs));
}

double binomial_stderr(double rate, std::size_t n) {
  if (n == 0) throw std::invalid_argument("binomial_stderr with n = 0");
  return std::sqrt(rate * (1.0 - rate) / static_cast<double>(n));
}

// Continued fraction for the incomplete beta (Numerical Recipes style modified
// Lentz).  Called only with x <= (a + 1) / (a + b + 2); the symmetric case is
// handled by the wrapper.
static double incbeta_cf(double a, double b, double x) {
  constexpr double kTiny = 1e-300;
  constexpr double kEps = 1e-15;
  constexpr int kMaxIter = 500;

  double c = 1.0;
  double d = 1.0 - (a + b) * x / (a + 1.0);
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;

  for (int m = 1; m <= kMaxIter; ++m) {
    const double md = static_cast<double>(m);
    // even step
    double num = md * (b - md) * x / ((a + 2.0 * md - 1.0) * (a + 2.0 * md));
    d = 1.0 + num * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + num / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    // odd step
    num = -(a + md) * (a + b + md) * x /
          ((a + 2.0 * md) * (a + 2.0 * md + 1.0));
    d = 1.0 + num * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + num / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::fabs(delta - 1.0) < kEps) return h;
  }
  throw std::runtime_error("incomplete beta continued fraction did not converge");
}

double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) {
    throw std::invalid_argument("incomplete beta needs a > 0 and b > 0");
  }
  if (!(x >= 0.0 && x <= 1.0)) {
    throw std::invalid_argument("incomplete beta needs x in [0, 1]");
  }
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;

  const double log_front = std::lgamma(a + b) - std::lgamma(a) -
                           std::lgamma(b) + a * std::log(x) +
                           b * std::log1p(-x);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return std::exp(log_front) * incbeta_cf(a, b, x) / a;
  }
  return 1.0 - std::exp(log_front) * incbeta_cf(b, a, 1.0 - x) / b;
}

double student_t_cdf(double t, double df) {
  if (!(df > 0.0)) throw std::invalid_argument("t CDF needs df > 0");
  if (t == 0.0) return 0.5;
  const double x = df / (df + t * t);
  const double tail = 0.5 * regularized_incomplete_beta(0.5 * df, 0.5, x);
  return t > 0.0 ? 1.0 - tail : tail;
}

TTestResult welch_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) {
    throw std::invalid_argument("welch_t_test needs >= 2 points per sample");
  }
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double va = sample_variance(a) / na;
  const double vb = sample_variance(b) / nb;
  const double se2 = va + vb;
  TTestResult r;
  if (se2 == 0.0) {
    // Degenerate samples with equal means carry no evidence; unequal means
    // with zero variance are off the t scale entirely.
    r.statistic = mean(a) == mean(b)
                      ? 0.0
                      : std::numeric_limits<double>::infinity();
    r.df = na + nb - 2.0;
    r.p_value = mean(a) == mean(b) ? 1.0 : 0.0;
    return r;
  }
  r.statistic = (mean(a) - mean(b)) / std::sqrt(se2);
  r.df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
  r.p_value = 2.0 * (1.0 - student_t_cdf(std::fabs(r.statistic), r.df));
  return r;
}

}  // namespace ec2st
