#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace ec2st {

// A labeled two-sample pool: one sample per row, labels in {0, 1} marking
// which of the two samples a row came from.
struct Dataset {
  Eigen::MatrixXd x;  // n x d
  Eigen::VectorXi y;  // n

  Eigen::Index n() const { return x.rows(); }
  Eigen::Index dim() const { return x.cols(); }
  bool empty() const { return x.rows() == 0; }

  // Number of rows with label 1.
  Eigen::Index ones() const;

  void append(const Dataset& other);
  Dataset subset(const std::vector<Eigen::Index>& rows) const;
  void validate() const;  // shapes agree, labels in {0,1}, entries finite
};

// Nine-mode Gaussian mixture on a 3x3 grid; the two samples share the mode
// grid and differ (or not) in the per-mode noise scale.
struct BlobConfig {
  double spacing = 5.0;
  double sigma0 = 1.0;
  double sigma1 = 2.0;  // equal to sigma0 under the null
};

// n draws from the blob mixture for one sample (cls selects the noise scale).
Eigen::MatrixXd blob_sample(const BlobConfig& config, Eigen::Index n, int cls,
                            std::uint64_t seed);

// Stack two unlabeled samples into one labeled pool, rows shuffled.
Dataset pool_and_label(const Eigen::MatrixXd& x0, const Eigen::MatrixXd& x1,
                       std::uint64_t seed);

// Split into disjoint parts with the given fractions (must sum to 1), label
// proportions preserved per part up to rounding.  Row order inside each part
// is random.
std::vector<Dataset> stratified_split(const Dataset& data,
                                      const std::vector<double>& fractions,
                                      std::uint64_t seed);

// A sequence of batches.  Batch k is a pure function of (config, seed, k), so
// seek() makes resumption exact: a stream repositioned to the cursor found in
// a checkpoint yields byte-identical batches.
class BatchStream {
 public:
  virtual ~BatchStream() = default;

  // Next batch, or nullopt when the stream is exhausted.
  virtual std::optional<Dataset> next() = 0;

  // Number of batches handed out so far.
  std::size_t cursor() const { return cursor_; }

  virtual void seek(std::size_t batch_index) { cursor_ = batch_index; }

 protected:
  std::size_t cursor_ = 0;
};

// Infinite stream over the blob mixture.  balanced = true fixes each batch at
// batch_size/2 rows per sample; otherwise labels are iid Bernoulli(1/2).
std::unique_ptr<BatchStream> stream_blob_batches(const BlobConfig& config,
                                                 Eigen::Index batch_size,
                                                 bool balanced,
                                                 std::uint64_t seed);

// Infinite stream over a pair of 1-d Gaussians N(mean0, 1) / N(mean1, 1).
std::unique_ptr<BatchStream> stream_gaussian_batches(double mean0, double mean1,
                                                     Eigen::Index batch_size,
                                                     bool balanced,
                                                     std::uint64_t seed);

// Like stream_gaussian_batches but with a batch size drawn uniformly from
// [min_batch, max_batch] per class each round (the sequential t-test demo).
std::unique_ptr<BatchStream> stream_gaussian_variable_batches(
    double mean0, double mean1, Eigen::Index min_batch, Eigen::Index max_batch,
    std::uint64_t seed);

// Finite stream over a fixed dataset: rows are shuffled once (seed), then cut
// into consecutive batches; a trailing remainder shorter than batch_size is
// dropped.
std::unique_ptr<BatchStream> stream_dataset_batches(Dataset data,
                                                    Eigen::Index batch_size,
                                                    std::uint64_t seed);

// As above but with the batch order fixed by an explicit permutation of batch
// indices (the batch-order experiment).  order must be a permutation of
// 0..n_batches-1.
std::unique_ptr<BatchStream> stream_dataset_batches_ordered(
    Dataset data, Eigen::Index batch_size, const std::vector<std::size_t>& order);

// Finite discrete joint distribution over (X, Y) with Y binary; X is emitted
// as a one-dimensional feature holding the category index.
struct DiscreteToyConfig {
  // |X| x 2 table of joint probabilities p(x, y); entries >= 0, sum 1.
  Eigen::MatrixXd joint;

  void validate() const;
};

// Exact mutual information of the table, in nats.
double mutual_information(const DiscreteToyConfig& config);

struct DiscreteToyStream {
  std::unique_ptr<BatchStream> stream;
  double exact_mi = 0.0;
};

DiscreteToyStream discrete_toy_stream(const DiscreteToyConfig& config,
                                      Eigen::Index batch_size,
                                      std::uint64_t seed);

// Bayes-optimal P(Y = 1 | X = x) for the table, clamped away from {0, 1}.
Eigen::VectorXd discrete_toy_oracle_probs(const DiscreteToyConfig& config,
                                          const Eigen::MatrixXd& x);

// CSV with a header row; features parsed as doubles, the label column as 0/1.
struct CsvSchema {
  std::vector<std::string> feature_columns;  // empty = all non-label columns
  std::string label_column = "y";
};

Dataset load_csv(const std::string& path, const CsvSchema& schema);
void save_csv(const std::string& path, const Dataset& data,
              const CsvSchema& schema);

}  // namespace ec2st
