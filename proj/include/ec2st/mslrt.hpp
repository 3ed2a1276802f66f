#pragma once

#include <Eigen/Dense>
#include <memory>
#include <vector>

#include "ec2st/data.hpp"
#include "ec2st/eprocess.hpp"
#include "ec2st/ec2st.hpp"

namespace ec2st {

// A fitted density over feature rows.
class DensityModel {
 public:
  virtual ~DensityModel() = default;
  virtual double log_density(const Eigen::Ref<const Eigen::VectorXd>& x) const = 0;
};

// Fits an alternative density on strictly earlier data.
class AltLearner {
 public:
  virtual ~AltLearner() = default;
  virtual std::unique_ptr<DensityModel> fit(const Eigen::MatrixXd& history) const = 0;
};

// A null hypothesis class with an exact per-batch maximum-likelihood fit.
class NullFamily {
 public:
  virtual ~NullFamily() = default;
  virtual std::unique_ptr<DensityModel> mle(const Eigen::MatrixXd& batch) const = 0;
};

// Isotropic unit-variance Gaussian with a fixed mean.
class IsotropicGaussian : public DensityModel {
 public:
  explicit IsotropicGaussian(Eigen::VectorXd mean) : mean_(std::move(mean)) {}
  double log_density(const Eigen::Ref<const Eigen::VectorXd>& x) const override;
  const Eigen::VectorXd& mean() const { return mean_; }

 private:
  Eigen::VectorXd mean_;
};

// Alternative learner: N(mean of the history, I).
class GaussianMeanLearner : public AltLearner {
 public:
  std::unique_ptr<DensityModel> fit(const Eigen::MatrixXd& history) const override;
};

// Singleton null {N(mean0, I)}: the MLE ignores the batch.
class SingletonGaussianNull : public NullFamily {
 public:
  explicit SingletonGaussianNull(Eigen::VectorXd mean) : mean_(std::move(mean)) {}
  std::unique_ptr<DensityModel> mle(const Eigen::MatrixXd& batch) const override;

 private:
  Eigen::VectorXd mean_;
};

// Composite null {N(mu, I) : mu}: the MLE is the batch mean.
class GaussianMeanFamily : public NullFamily {
 public:
  std::unique_ptr<DensityModel> mle(const Eigen::MatrixXd& batch) const override;
};

// Batch e-value of the split likelihood-ratio test: the alternative fitted on
// earlier data against the null family's exact MLE on this batch.
double msplit_batch_log_evalue(const DensityModel& alt,
                               const NullFamily& null_family,
                               const Eigen::MatrixXd& batch);

// Sequential M-split run: batch 1 only seeds the history (its e-value is 1);
// from batch 2 on, the alternative is refitted on everything seen so far and
// the e-process accumulates.  Labels carried by the stream are ignored.
Verdict msplit_run(BatchStream& stream, const AltLearner& learner,
                   const NullFamily& null_family, double alpha,
                   std::size_t max_batches,
                   std::vector<StepLog>* logs = nullptr);

// Predictive conditional independence test: Y binary given side information
// Z, with the null "Y independent of X given Z" represented by an exact
// per-stratum Bernoulli MLE.  alt_probs[n] is the trained predictor's
// P(y = 1 | x_n, z_n).  With a single stratum this is exactly the two-sample
// batch e-value.
double pcit_batch_log_evalue(const Eigen::VectorXd& alt_probs,
                             const Eigen::VectorXi& y,
                             const Eigen::VectorXd& z);

}  // namespace ec2st
