#include "ec2st/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "ec2st/rng.hpp"

namespace ec2st {

double permutation_pvalue(double observed, std::span<const double> permuted) {
  if (permuted.empty()) {
    throw std::invalid_argument("permutation test needs at least one permutation");
  }
  if (std::isnan(observed)) {
    throw std::invalid_argument("observed statistic is NaN");
  }
  std::size_t geq = 0;
  for (double p : permuted) {
    if (std::isnan(p)) {
      throw std::invalid_argument("permuted statistic is NaN");
    }
    if (p >= observed) ++geq;
  }
  return static_cast<double>(1 + geq) / static_cast<double>(permuted.size() + 1);
}

static void check_two_classes(const Eigen::VectorXi& y) {
  bool has0 = false, has1 = false;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    has0 |= (y[i] == 0);
    has1 |= (y[i] == 1);
  }
  if (!has0 || !has1) {
    throw std::invalid_argument("test fold must contain both samples");
  }
}

namespace {

// Shared shape of the label-permutation tests: fix per-row scores, permute
// labels, recompute a statistic of (scores, labels).
template <typename StatFn>
PermutationResult label_permutation_test(const Eigen::VectorXd& scores,
                                         const Eigen::VectorXi& labels,
                                         std::size_t n_permutations,
                                         std::uint64_t seed, StatFn&& stat) {
  if (n_permutations == 0) {
    throw std::invalid_argument("permutation test needs at least one permutation");
  }
  PermutationResult result;
  result.statistic = stat(scores, labels);
  result.permuted.reserve(n_permutations);
  std::vector<int> pool(labels.data(), labels.data() + labels.size());
  for (std::size_t b = 0; b < n_permutations; ++b) {
    std::mt19937_64 rng(derive_seed(seed, b, SeedRole::kPermutation));
    std::vector<int> shuffled = pool;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    Eigen::Map<const Eigen::VectorXi> y_perm(shuffled.data(),
                                             static_cast<Eigen::Index>(shuffled.size()));
    result.permuted.push_back(stat(scores, y_perm));
  }
  result.p_value = permutation_pvalue(result.statistic, result.permuted);
  return result;
}

double accuracy_stat(const Eigen::VectorXd& logits, const Eigen::VectorXi& y) {
  Eigen::Index correct = 0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const int pred = logits[i] > 0.0 ? 1 : 0;
    correct += (pred == y[i]);
  }
  return static_cast<double>(correct) / static_cast<double>(y.size());
}

double logit_gap_stat(const Eigen::VectorXd& logits, const Eigen::VectorXi& y) {
  double sum1 = 0.0, sum0 = 0.0;
  Eigen::Index n1 = 0, n0 = 0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y[i] == 1) {
      sum1 += logits[i];
      ++n1;
    } else {
      sum0 += logits[i];
      ++n0;
    }
  }
  return std::fabs(sum1 / static_cast<double>(n1) -
                   sum0 / static_cast<double>(n0));
}

}  // namespace

PermutationResult sc2st(const MlpModel& model, const Dataset& test,
                        std::size_t n_permutations, std::uint64_t seed) {
  test.validate();
  check_two_classes(test.y);
  const Eigen::VectorXd logits = mlp_logits(model, test.x);
  return label_permutation_test(logits, test.y, n_permutations, seed,
                                accuracy_stat);
}

PermutationResult lc2st(const MlpModel& model, const Dataset& test,
                        std::size_t n_permutations, std::uint64_t seed) {
  test.validate();
  check_two_classes(test.y);
  const Eigen::VectorXd logits = mlp_logits(model, test.x);
  return label_permutation_test(logits, test.y, n_permutations, seed,
                                logit_gap_stat);
}

static Eigen::MatrixXd gaussian_kernel(const Eigen::MatrixXd& rows,
                                       double bandwidth) {
  const Eigen::Index n = rows.rows();
  const Eigen::VectorXd sq = rows.rowwise().squaredNorm();
  Eigen::MatrixXd d2 = (-2.0 * rows * rows.transpose());
  d2.colwise() += sq;
  d2.rowwise() += sq.transpose();
  return (-d2.cwiseMax(0.0) / (2.0 * bandwidth * bandwidth)).array().exp();
}

namespace {

double mmd2_from_kernel(const Eigen::MatrixXd& kernel,
                        const std::vector<Eigen::Index>& idx, Eigen::Index n0) {
  const Eigen::Index n = static_cast<Eigen::Index>(idx.size());
  const Eigen::Index n1 = n - n0;
  double kaa = 0.0, kbb = 0.0, kab = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double k = kernel(idx[static_cast<std::size_t>(i)],
                              idx[static_cast<std::size_t>(j)]);
      if (i < n0 && j < n0) {
        kaa += k;
      } else if (i >= n0 && j >= n0) {
        kbb += k;
      } else if (i < n0) {
        kab += k;
      }
    }
  }
  const double na = static_cast<double>(n0);
  const double nb = static_cast<double>(n1);
  return kaa / (na * na) + kbb / (nb * nb) - 2.0 * kab / (na * nb);
}

}  // namespace

double mmd2_biased(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                   double bandwidth) {
  if (a.rows() == 0 || b.rows() == 0) {
    throw std::invalid_argument("mmd needs non-empty samples");
  }
  if (a.cols() != b.cols()) {
    throw std::invalid_argument("mmd samples must share a width");
  }
  if (!(bandwidth > 0.0)) {
    throw std::invalid_argument("kernel bandwidth must be > 0");
  }
  Eigen::MatrixXd pooled(a.rows() + b.rows(), a.cols());
  pooled.topRows(a.rows()) = a;
  pooled.bottomRows(b.rows()) = b;
  const Eigen::MatrixXd kernel = gaussian_kernel(pooled, bandwidth);
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(pooled.rows()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  return mmd2_from_kernel(kernel, idx, a.rows());
}

double median_heuristic_bandwidth(const Eigen::MatrixXd& pooled) {
  const Eigen::Index n = pooled.rows();
  if (n < 2) {
    throw std::invalid_argument("median heuristic needs at least two rows");
  }
  std::vector<double> dists;
  dists.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      dists.push_back((pooled.row(i) - pooled.row(j)).norm());
    }
  }
  std::sort(dists.begin(), dists.end());
  const std::size_t mid = dists.size() / 2;
  const double median = dists.size() % 2 == 1
                            ? dists[mid]
                            : 0.5 * (dists[mid - 1] + dists[mid]);
  if (!(median > 0.0)) {
    throw std::invalid_argument("median heuristic collapsed: embeddings are degenerate");
  }
  return median;
}

PermutationResult mc2st(const Eigen::MatrixXd& features0,
                        const Eigen::MatrixXd& features1,
                        std::optional<double> bandwidth,
                        std::size_t n_permutations, std::uint64_t seed) {
  if (n_permutations == 0) {
    throw std::invalid_argument("permutation test needs at least one permutation");
  }
  if (features0.rows() == 0 || features1.rows() == 0) {
    throw std::invalid_argument("mmd needs non-empty samples");
  }
  if (features0.cols() != features1.cols()) {
    throw std::invalid_argument("mmd samples must share a width");
  }
  Eigen::MatrixXd pooled(features0.rows() + features1.rows(), features0.cols());
  pooled.topRows(features0.rows()) = features0;
  pooled.bottomRows(features1.rows()) = features1;
  const double h =
      bandwidth.has_value() ? *bandwidth : median_heuristic_bandwidth(pooled);
  if (!(h > 0.0)) throw std::invalid_argument("kernel bandwidth must be > 0");

  const Eigen::MatrixXd kernel = gaussian_kernel(pooled, h);
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(pooled.rows()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});

  PermutationResult result;
  result.statistic = mmd2_from_kernel(kernel, idx, features0.rows());
  result.permuted.reserve(n_permutations);
  for (std::size_t b = 0; b < n_permutations; ++b) {
    std::mt19937_64 rng(derive_seed(seed, b, SeedRole::kPermutation));
    std::vector<Eigen::Index> shuffled = idx;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    result.permuted.push_back(
        mmd2_from_kernel(kernel, shuffled, features0.rows()));
  }
  result.p_value = permutation_pvalue(result.statistic, result.permuted);
  return result;
}

BaselineSuiteResult run_baseline_suite(const Dataset& pooled,
                                       const BaselineConfig& config,
                                       std::uint64_t seed) {
  pooled.validate();
  config.mlp.validate();
  config.train.validate();
  if (config.split.size() != 3) {
    throw std::invalid_argument("baseline split needs train/val/test fractions");
  }

  const std::vector<Dataset> parts = stratified_split(
      pooled, config.split, derive_seed(seed, 0, SeedRole::kSplit));
  const Dataset& train = parts[0];
  const Dataset& val = parts[1];
  const Dataset& test = parts[2];
  if (train.empty() || val.empty() || test.empty()) {
    throw std::invalid_argument("pooled sample is too small for a 5:1:1 split");
  }
  check_two_classes(test.y);

  TrainConfig tc = config.train;
  tc.seed = derive_seed(seed, 0, SeedRole::kTrain);
  const MlpModel model = mlp_train(config.mlp, train, val, tc);

  BaselineSuiteResult out;
  out.s = sc2st(model, test, config.n_permutations,
                derive_seed(seed, 1, SeedRole::kPermutation));
  out.l = lc2st(model, test, config.n_permutations,
                derive_seed(seed, 2, SeedRole::kPermutation));

  const Eigen::MatrixXd embedded = mlp_hidden_features(model, test.x);
  const Eigen::Index n0 = test.n() - test.ones();
  Eigen::MatrixXd f0(n0, embedded.cols());
  Eigen::MatrixXd f1(test.n() - n0, embedded.cols());
  Eigen::Index i0 = 0, i1 = 0;
  for (Eigen::Index i = 0; i < test.n(); ++i) {
    if (test.y[i] == 0) {
      f0.row(i0++) = embedded.row(i);
    } else {
      f1.row(i1++) = embedded.row(i);
    }
  }
  out.m = mc2st(f0, f1, config.bandwidth, config.n_permutations,
                derive_seed(seed, 3, SeedRole::kPermutation));
  return out;
}

}  // namespace ec2st
