#pragma once

#include <Eigen/Dense>

namespace ec2st {

// Bernoulli null for the label distribution of one batch.
struct BernoulliNull {
  double q_hat = 0.5;
};

// Maximum-likelihood fit: the fraction of ones.
BernoulliNull bernoulli_mle(const Eigen::Ref<const Eigen::VectorXi>& labels);

// log P(y) under the fitted null.  A label that the fit gives probability
// zero (q_hat in {0, 1} with the opposite label) is a domain error.
double bernoulli_log_density(const BernoulliNull& model, int y);

// log p of Bernoulli(p) at y, shared by every likelihood in the library so
// that algebraically equal paths stay bitwise equal.
double bernoulli_log_prob(double p, int y);

// Univariate Gaussian with unknown mean and fixed unit variance.
struct GaussianMeanModel {
  double mean = 0.0;
};

GaussianMeanModel gaussian_mean_mle(const Eigen::Ref<const Eigen::VectorXd>& xs);

double gaussian_log_density(const GaussianMeanModel& model, double x);

}  // namespace ec2st
