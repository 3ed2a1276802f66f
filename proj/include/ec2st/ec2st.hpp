#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ec2st/data.hpp"
#include "ec2st/eprocess.hpp"
#include "ec2st/mlp.hpp"

namespace ec2st {

// One observation's contribution to a batch e-value: the label's
// log-likelihood under the classifier (alternative) and under the batch-level
// Bernoulli fit (null), and their difference.
struct PointEValue {
  double log_p_alt = 0.0;
  double log_p_null = 0.0;
  double log_e = 0.0;
};

struct BatchEValue {
  double log_e = 0.0;   // sum of the per-point log e-values
  double q_hat = 0.5;   // label frequency the null was fitted to
  std::vector<PointEValue> points;
};

// Likelihood-ratio e-value of one batch: classifier probabilities against the
// Bernoulli MLE fitted on this batch's labels.  The classifier must not have
// seen the batch.
BatchEValue batch_log_evalue(const Eigen::VectorXd& probs,
                             const Eigen::VectorXi& labels);

// log(lambda + (1 - lambda) * e) for a single point, exact at e = 1 (the
// increment of an uninformative point is exactly zero).
double point_bounded_log_evalue(double log_e, double lambda);

// Mixture-bounded batch e-value: per-point mixtures multiplied over the
// batch.  Bounded between n*log(lambda) and n*log(lambda + (1-lambda)*e_max).
double bounded_log_evalue(std::span<const PointEValue> points, double lambda);

struct LambdaBounds {
  double min = 1e-6;
  double max = 1.0 - 1e-6;
};

// Maximizes sum_n log(lambda + (1 - lambda) * e_n) over [min, max].  The
// objective is concave, so bisection on its derivative finds the optimum;
// ties (all e_n = 1) resolve to the lower bound.
double optimize_lambda(std::span<const PointEValue> points,
                       const LambdaBounds& bounds);

struct Ec2stConfig {
  double alpha = 0.05;
  double initial_lambda = 0.5;
  LambdaBounds lambda_bounds;
  // The first batch is split into train/validation with these fractions.
  std::pair<double, double> first_batch_split{0.8, 0.2};
  MlpSpec mlp;
  TrainConfig train;
  // When set, classifier training is skipped and these conditional
  // probabilities P(y = 1 | x) are used directly (diagnostics and the
  // growth-rate experiment).
  std::function<Eigen::VectorXd(const Eigen::MatrixXd&)> oracle_probs;
  // Keep folding data and updating lambda after a rejection, so the full
  // M-batch product can be measured; each batch e-value stays valid, the
  // rejection ledger is unaffected.
  bool continue_after_rejection = false;

  void validate() const;
};

// Sequential state after m batches: the classifier's training pool holds
// batches 1..m-1, the validation pool holds batch m, and lambda is the
// mixture weight the next batch will be scored with.
struct Ec2stState {
  Dataset train_set;
  Dataset val_set;
  double lambda = 0.5;
  EProcess process;
  std::size_t batches_seen = 0;
  std::size_t samples_seen = 0;
  std::optional<MlpModel> model;  // most recent classifier fit
};

Ec2stState ec2st_init(const Ec2stConfig& config);

struct StepLog {
  std::size_t batch = 0;  // 1-based ordinal of the batch in the stream
  std::size_t batch_size = 0;
  double lambda = 0.0;       // mixture weight applied to this batch
  double lambda_next = 0.0;  // weight the next batch will see
  double log_increment = 0.0;
  double log_running = 0.0;
  bool rejected = false;
};

// One round of the sequential test: train on everything before the last seen
// batch, validate on the last seen batch, score the incoming batch, update
// the e-process, then re-optimize lambda and fold the batch into the pools.
// The first batch only seeds the pools (its e-value is 1).  After a
// rejection the pools and lambda freeze; only the ledger keeps extending.
Verdict ec2st_step(Ec2stState& state, const Dataset& batch,
                   const Ec2stConfig& config, StepLog* log = nullptr);

Verdict ec2st_run(BatchStream& stream, const Ec2stConfig& config,
                  std::size_t max_batches,
                  std::vector<StepLog>* logs = nullptr);

// Versioned JSON round-trip for resumable runs.  A state restored from JSON
// continues bit-for-bit identically to one that never stopped, provided the
// stream is repositioned with seek().
std::string state_to_json(const Ec2stState& state);
Ec2stState state_from_json(const std::string& text);
void save_checkpoint(const Ec2stState& state, const std::string& path);
Ec2stState load_checkpoint(const std::string& path);

}  // namespace ec2st
