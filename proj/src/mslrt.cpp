#include "ec2st/mslrt.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

#include "ec2st/models.hpp"

namespace ec2st {

double IsotropicGaussian::log_density(
    const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != mean_.size()) {
    throw std::invalid_argument("point width does not match the density");
  }
  constexpr double kLogTwoPi = 1.8378770664093453;
  return -0.5 * (x - mean_).squaredNorm() -
         0.5 * kLogTwoPi * static_cast<double>(mean_.size());
}

std::unique_ptr<DensityModel> GaussianMeanLearner::fit(
    const Eigen::MatrixXd& history) const {
  if (history.rows() == 0) {
    throw std::invalid_argument("cannot fit an alternative on empty history");
  }
  return std::make_unique<IsotropicGaussian>(history.colwise().mean().transpose());
}

std::unique_ptr<DensityModel> SingletonGaussianNull::mle(
    const Eigen::MatrixXd& batch) const {
  if (batch.cols() != mean_.size()) {
    throw std::invalid_argument("batch width does not match the null");
  }
  return std::make_unique<IsotropicGaussian>(mean_);
}

std::unique_ptr<DensityModel> GaussianMeanFamily::mle(
    const Eigen::MatrixXd& batch) const {
  if (batch.rows() == 0) throw std::invalid_argument("empty batch");
  return std::make_unique<IsotropicGaussian>(batch.colwise().mean().transpose());
}

double msplit_batch_log_evalue(const DensityModel& alt,
                               const NullFamily& null_family,
                               const Eigen::MatrixXd& batch) {
  if (batch.rows() == 0) throw std::invalid_argument("empty batch");
  const std::unique_ptr<DensityModel> null_fit = null_family.mle(batch);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < batch.rows(); ++i) {
    acc += alt.log_density(batch.row(i).transpose()) -
           null_fit->log_density(batch.row(i).transpose());
  }
  return acc;
}

Verdict msplit_run(BatchStream& stream, const AltLearner& learner,
                   const NullFamily& null_family, double alpha,
                   std::size_t max_batches, std::vector<StepLog>* logs) {
  EProcess process = make_eprocess(alpha);
  Eigen::MatrixXd history;
  std::size_t samples = 0;
  std::size_t m = 0;
  while (m < max_batches) {
    std::optional<Dataset> batch = stream.next();
    if (!batch) break;
    ++m;
    samples += static_cast<std::size_t>(batch->n());

    if (m == 1) {
      ep_update(process, log_evalue(0.0));
      history = batch->x;
    } else {
      const std::unique_ptr<DensityModel> alt = learner.fit(history);
      const double increment =
          msplit_batch_log_evalue(*alt, null_family, batch->x);
      ep_update(process, log_evalue(increment));
      if (!process.rejected_at) {
        const Eigen::Index n0 = history.rows();
        history.conservativeResize(n0 + batch->x.rows(), Eigen::NoChange);
        history.bottomRows(batch->x.rows()) = batch->x;
      }
    }
    if (logs) {
      StepLog entry;
      entry.batch = m;
      entry.batch_size = static_cast<std::size_t>(batch->n());
      entry.log_increment = process.log_increments.back();
      entry.log_running = process.log_value();
      entry.rejected = process.rejected_at.has_value();
      logs->push_back(entry);
    }
    if (process.rejected_at) break;
  }
  return make_verdict(process, samples);
}

double pcit_batch_log_evalue(const Eigen::VectorXd& alt_probs,
                             const Eigen::VectorXi& y,
                             const Eigen::VectorXd& z) {
  if (alt_probs.size() != y.size() || y.size() != z.size()) {
    throw std::invalid_argument("probabilities, labels and strata disagree in length");
  }
  if (y.size() == 0) throw std::invalid_argument("empty batch");
  for (Eigen::Index i = 0; i < alt_probs.size(); ++i) {
    if (!(alt_probs[i] > 0.0 && alt_probs[i] < 1.0)) {
      throw std::invalid_argument("predictor probabilities must lie in (0, 1)");
    }
  }

  // Exact null MLE: one Bernoulli per stratum of Z, fitted on this batch.
  std::map<double, std::pair<Eigen::Index, Eigen::Index>> counts;  // ones, total
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y[i] != 0 && y[i] != 1) {
      throw std::invalid_argument("labels must be 0 or 1");
    }
    auto& c = counts[z[i]];
    c.first += y[i];
    c.second += 1;
  }
  std::map<double, BernoulliNull> null_fit;
  for (const auto& [stratum, c] : counts) {
    null_fit[stratum] = BernoulliNull{static_cast<double>(c.first) /
                                      static_cast<double>(c.second)};
  }

  double acc = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double log_alt = bernoulli_log_prob(alt_probs[i], y[i]);
    const double log_null = bernoulli_log_density(null_fit.at(z[i]), y[i]);
    acc += log_alt - log_null;
  }
  return acc;
}

}  // namespace ec2st
