#include "ec2st/models.hpp"

#include <cmath>
#include <stdexcept>

namespace ec2st {

BernoulliNull bernoulli_mle(const Eigen::Ref<const Eigen::VectorXi>& labels) {
  if (labels.size() == 0) {
    throw std::invalid_argument("bernoulli_mle on an empty batch");
  }
  Eigen::Index ones = 0;
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) {
      throw std::invalid_argument("labels must be 0 or 1");
    }
    ones += labels[i];
  }
  return {static_cast<double>(ones) / static_cast<double>(labels.size())};
}

double bernoulli_log_prob(double p, int y) {
  if (y != 0 && y != 1) throw std::invalid_argument("label must be 0 or 1");
  return y == 1 ? std::log(p) : std::log1p(-p);
}

double bernoulli_log_density(const BernoulliNull& model, int y) {
  if (y != 0 && y != 1) throw std::invalid_argument("label must be 0 or 1");
  if (!(model.q_hat >= 0.0 && model.q_hat <= 1.0)) {
    throw std::invalid_argument("q_hat must lie in [0, 1]");
  }
  if ((model.q_hat == 0.0 && y == 1) || (model.q_hat == 1.0 && y == 0)) {
    throw std::domain_error("label has probability zero under the fitted null");
  }
  return bernoulli_log_prob(model.q_hat, y);
}

GaussianMeanModel gaussian_mean_mle(
    const Eigen::Ref<const Eigen::VectorXd>& xs) {
  if (xs.size() == 0) {
    throw std::invalid_argument("gaussian_mean_mle on an empty batch");
  }
  if (!xs.allFinite()) {
    throw std::invalid_argument("observations must be finite");
  }
  return {xs.mean()};
}

double gaussian_log_density(const GaussianMeanModel& model, double x) {
  constexpr double kLogTwoPi = 1.8378770664093453;
  const double d = x - model.mean;
  return -0.5 * d * d - 0.5 * kLogTwoPi;
}

}  // namespace ec2st
