#pragma once

#include <cstddef>
#include <span>

namespace ec2st {

double mean(std::span<const double> xs);

// Unbiased sample variance (n - 1 denominator); n must be >= 2.
double sample_variance(std::span<const double> xs);

double sample_stddev(std::span<const double> xs);

// Standard error of an empirical proportion out of n trials.
double binomial_stderr(double rate, std::size_t n);

// Regularized incomplete beta function I_x(a, b), via the Lentz continued
// fraction.  Good to ~1e-14 over the parameter ranges we use (t tests).
double regularized_incomplete_beta(double a, double b, double x);

// CDF of Student's t with df degrees of freedom.
double student_t_cdf(double t, double df);

struct TTestResult {
  double statistic = 0.0;
  double df = 0.0;
  double p_value = 1.0;
};

// Two-sided Welch t test for a difference in means.
TTestResult welch_t_test(std::span<const double> a, std::span<const double> b);

}  // namespace ec2st
